#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "egt/common.hpp"
#include "egt/rng.hpp"

namespace egt {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover the whole
// model; scalars are shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // same size as data when nonempty

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape_in, double fill = 0.0)
      : shape(std::move(shape_in)) {
    check_arg(!shape.empty(), "Tensor: rank-0 shapes are not supported");
    for (std::size_t d : shape) check_arg(d > 0, "Tensor: zero-sized dimension");
    data.assign(numel_of(shape), fill);
  }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static Tensor vector(std::initializer_list<double> vals) {
    Tensor t({vals.size()});
    std::size_t i = 0;
    for (double v : vals) t.data[i++] = v;
    return t;
  }

  static Tensor from(std::vector<std::size_t> shape_in, std::vector<double> vals) {
    Tensor t(std::move(shape_in));
    check_arg(vals.size() == t.numel(), "Tensor::from: data/shape mismatch");
    t.data = std::move(vals);
    return t;
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void zero_grad() { grad.assign(data.size(), 0.0); }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& x : data) x = rng.uniform(lo, hi);
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

}  // namespace egt
