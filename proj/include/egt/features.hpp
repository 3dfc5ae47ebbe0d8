#pragma once

#include <cstddef>
#include <vector>

#include "egt/common.hpp"
#include "egt/rng.hpp"
#include "egt/scene.hpp"
#include "egt/tensor.hpp"

namespace egt {

// Deterministic attribute -> channel encoding standing in for a CNN backbone.
// Each region gets a 7x7xD map: the object's attribute one-hots written into
// the centered block of cells it occupies, plus optional Gaussian noise. The
// whole-image feature is the clean mean of all object encodings.

inline constexpr std::size_t kMapSide = 7;
inline constexpr std::size_t kMapCells = kMapSide * kMapSide;

struct FeatureLayout {
  std::size_t dim = 0;
  std::size_t category_offset = 0;
  std::size_t category_count = 0;
  std::size_t color_offset = 0;
  std::size_t color_count = 0;
  std::size_t size_offset = 0;  // two slots: small, large

  static FeatureLayout make(const GenConfig& cfg) {
    FeatureLayout l;
    l.category_offset = 0;
    l.category_count = cfg.num_categories;
    l.color_offset = l.category_count;
    l.color_count = cfg.num_colors;
    l.size_offset = l.color_offset + l.color_count;
    const std::size_t needed = l.size_offset + 2;
    check_arg(cfg.feature_dim >= needed, "feature_dim ", cfg.feature_dim,
              " too small for alphabets (need ", needed, ")");
    l.dim = cfg.feature_dim;
    return l;
  }
};

inline std::vector<double> attribute_encoding(const SceneObject& obj,
                                              const FeatureLayout& layout) {
  std::vector<double> enc(layout.dim, 0.0);
  enc[layout.category_offset + static_cast<std::size_t>(obj.category)] = 1.0;
  enc[layout.color_offset + static_cast<std::size_t>(obj.color)] = 1.0;
  enc[layout.size_offset + (obj.size == SizeClass::Large ? 1 : 0)] = 1.0;
  return enc;
}

// Centered occupancy block in the 7x7 grid; small objects cover 3x3 cells,
// large ones 5x5. Returns the inclusive [lo, hi] cell range per axis.
inline std::pair<std::size_t, std::size_t> occupancy_range(SizeClass size) {
  const std::size_t n = size == SizeClass::Small ? 3 : 5;
  const std::size_t lo = (kMapSide - n) / 2;
  return {lo, lo + n - 1};
}

inline std::size_t occupied_cell_count(SizeClass size) {
  const auto [lo, hi] = occupancy_range(size);
  const std::size_t n = hi - lo + 1;
  return n * n;
}

struct SceneFeatures {
  std::vector<Tensor> region_maps;  // one [49, D] map per object
  Tensor image_vec;                 // [D]
};

inline SceneFeatures synthesize_features(const SceneSpec& scene, const GenConfig& cfg,
                                         Rng& rng) {
  const FeatureLayout layout = FeatureLayout::make(cfg);
  SceneFeatures out;
  out.image_vec = Tensor({layout.dim});

  for (const SceneObject& obj : scene.objects) {
    Tensor map({kMapCells, layout.dim});
    const std::vector<double> enc = attribute_encoding(obj, layout);
    const auto [lo, hi] = occupancy_range(obj.size);
    for (std::size_t r = lo; r <= hi; ++r) {
      for (std::size_t c = lo; c <= hi; ++c) {
        double* cell = map.data.data() + (r * kMapSide + c) * layout.dim;
        for (std::size_t d = 0; d < layout.dim; ++d) cell[d] += enc[d];
      }
    }
    if (cfg.noise_sigma > 0.0) {
      for (double& v : map.data) v += cfg.noise_sigma * rng.normal();
    }
    out.region_maps.push_back(std::move(map));
    for (std::size_t d = 0; d < layout.dim; ++d) out.image_vec.data[d] += enc[d];
  }
  const double inv = 1.0 / static_cast<double>(scene.objects.size());
  for (double& v : out.image_vec.data) v *= inv;
  return out;
}

}  // namespace egt
