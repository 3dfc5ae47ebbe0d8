#pragma once

#include <cassert>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "egt/common.hpp"

namespace egt {

// Deterministic RNG. std::mt19937_64 has a standard-mandated sequence, but the
// standard distributions do not, so the distribution transforms live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Stream derivation for (master seed, stream id) pairs, e.g. per-scene
  // generators. Mixing via splitmix64 so nearby ids land far apart.
  static Rng derive(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t z = master_seed + 0x9e3779b97f4a7c15ull * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return Rng(z);
  }

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    assert(n > 0);
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits()) * n) >> 64);
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

  // Standard normal via Box-Muller (polar form avoided to keep one draw pair
  // per two variates deterministic in call order).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Draw an index from a (possibly unnormalized) nonnegative weight vector by
  // CDF inversion. The tail absorbs rounding, so a valid distribution whose
  // sum is 1 - 1e-16 still returns in-range indices.
  std::size_t multinomial(std::span<const double> weights) {
    check_arg(!weights.empty(), "multinomial: empty weight vector");
    double total = 0.0;
    for (double w : weights) {
      check_arg(w >= 0.0 && std::isfinite(w),
                "multinomial: weights must be finite and nonnegative");
      total += w;
    }
    check_arg(total > 0.0, "multinomial: weights sum to zero");
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // Sample k distinct values from [0, n) in selection order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    check_arg(k <= n, "sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + index(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace egt
