#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egt/common.hpp"
#include "egt/rng.hpp"

namespace egt {

// Synthetic scenes stand in for images: colored, sized shapes on a coarse
// grid, each one a candidate region. Every scene keeps at least one
// distractor of the target's category so category alone never grounds an
// expression.

enum class SizeClass : std::uint8_t { Small = 0, Large = 1 };

enum class RelationKind : std::uint8_t { LeftOf = 0, RightOf, Above, Below };

inline const char* relation_name(RelationKind k) {
  switch (k) {
    case RelationKind::LeftOf: return "left_of";
    case RelationKind::RightOf: return "right_of";
    case RelationKind::Above: return "above";
    case RelationKind::Below: return "below";
  }
  return "?";
}

inline const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {"ball", "box", "dog", "cat", "tree"};
  return names;
}

inline const std::vector<std::string>& color_names() {
  static const std::vector<std::string> names = {"red",    "green",  "blue",
                                                 "yellow", "purple", "orange"};
  return names;
}

inline const char* size_name(SizeClass s) {
  return s == SizeClass::Small ? "small" : "large";
}

struct Box {
  int x_tl = 0, y_tl = 0, x_br = 0, y_br = 0;

  int width() const { return x_br - x_tl; }
  int height() const { return y_br - y_tl; }
  double center_x() const { return 0.5 * (x_tl + x_br); }
  double center_y() const { return 0.5 * (y_tl + y_br); }
  bool valid() const { return x_tl < x_br && y_tl < y_br; }
};

struct SceneObject {
  int category = 0;
  int color = 0;
  SizeClass size = SizeClass::Small;
  Box box;
  // Most salient relation: direction toward the nearest other object.
  std::optional<std::pair<RelationKind, std::size_t>> relation;
};

struct SceneSpec {
  std::uint32_t id = 0;
  int width = 0, height = 0;
  std::vector<SceneObject> objects;
  std::size_t target_index = 0;
};

// Weights over cue subsets; keys use a=attribute, l=location, r=relationship
// ("al" = attribute+location, ...).
struct CueMix {
  std::map<std::string, double> weights;

  static CueMix defaults() {
    CueMix m;
    m.weights = {{"a", 0.15},  {"l", 0.05},  {"r", 0.05}, {"al", 0.25},
                 {"ar", 0.25}, {"lr", 0.10}, {"alr", 0.15}};
    return m;
  }

  void validate() const {
    double multi = 0.0, total = 0.0;
    for (const auto& [key, w] : weights) {
      check_arg(w >= 0.0, "cue_mix: negative weight for ", key);
      for (char c : key)
        check_arg(c == 'a' || c == 'l' || c == 'r', "cue_mix: bad cue code ", key);
      check_arg(!key.empty() && key.size() <= 3, "cue_mix: bad cue code ", key);
      total += w;
      if (key.size() >= 2) multi += w;
    }
    check_arg(total > 0.0, "cue_mix: weights sum to zero");
    check_arg(multi > 0.0, "cue_mix: must give nonzero weight to >=2-cue expressions");
  }
};

struct GenConfig {
  std::uint64_t seed = 7;
  std::size_t num_scenes = 5000;  // train; val gets 1/10, test 1/5 of this
  std::size_t feature_dim = 16;
  double noise_sigma = 0.1;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  std::size_t num_categories = 5;
  std::size_t num_colors = 6;
  // Probability that the forced same-category distractor also copies the
  // target's color and size, so attributes alone cannot resolve it.
  double attribute_twin_prob = 0.5;
  std::size_t expressions_per_scene = 1;
  CueMix cue_mix = CueMix::defaults();
  int image_size = 256;
  int grid = 4;

  void validate() const {
    check_arg(min_objects >= 2, "config: scenes need at least 2 objects, got min ",
              min_objects);
    check_arg(max_objects >= min_objects, "config: max_objects < min_objects");
    check_arg(max_objects <= static_cast<std::size_t>(grid * grid),
              "config: more objects than grid cells");
    check_arg(num_categories >= 1 && num_categories <= category_names().size(),
              "config: num_categories out of range");
    check_arg(num_colors >= 1 && num_colors <= color_names().size(),
              "config: num_colors out of range");
    check_arg(noise_sigma >= 0.0, "config: negative noise_sigma");
    check_arg(expressions_per_scene >= 1, "config: expressions_per_scene must be >= 1");
    check_arg(grid >= 2 && image_size % grid == 0,
              "config: image_size must be a multiple of grid");
    check_arg(image_size / grid >= 60, "config: grid cells too small for large objects");
    cue_mix.validate();
  }

  int cell_size() const { return image_size / grid; }
};

// Pixel extents per size class; chosen so the 7x7 occupancy footprints of the
// two classes never overlap in cell count.
inline std::pair<int, int> size_extent_range(SizeClass s) {
  return s == SizeClass::Small ? std::pair<int, int>{18, 26}
                               : std::pair<int, int>{40, 56};
}

inline RelationKind relation_between(const Box& a, const Box& b) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  if (std::abs(dx) >= std::abs(dy)) {
    return dx < 0 ? RelationKind::LeftOf : RelationKind::RightOf;
  }
  return dy < 0 ? RelationKind::Above : RelationKind::Below;
}

inline double center_distance(const Box& a, const Box& b) {
  const double dx = a.center_x() - b.center_x();
  const double dy = a.center_y() - b.center_y();
  return std::sqrt(dx * dx + dy * dy);
}

inline SceneSpec generate_scene(Rng& rng, const GenConfig& cfg, std::uint32_t scene_id = 0) {
  cfg.validate();
  SceneSpec scene;
  scene.id = scene_id;
  scene.width = cfg.image_size;
  scene.height = cfg.image_size;

  const std::size_t n =
      cfg.min_objects + rng.index(cfg.max_objects - cfg.min_objects + 1);
  const auto cells = rng.sample_without_replacement(
      static_cast<std::size_t>(cfg.grid * cfg.grid), n);
  const int cell = cfg.cell_size();

  for (std::size_t i = 0; i < n; ++i) {
    SceneObject obj;
    obj.category = static_cast<int>(rng.index(cfg.num_categories));
    obj.color = static_cast<int>(rng.index(cfg.num_colors));
    obj.size = rng.index(2) == 0 ? SizeClass::Small : SizeClass::Large;
    const auto [lo, hi] = size_extent_range(obj.size);
    const int w = lo + static_cast<int>(rng.index(hi - lo + 1));
    const int h = lo + static_cast<int>(rng.index(hi - lo + 1));
    const int col = static_cast<int>(cells[i]) % cfg.grid;
    const int row = static_cast<int>(cells[i]) / cfg.grid;
    obj.box.x_tl = col * cell + static_cast<int>(rng.index(cell - w + 1));
    obj.box.y_tl = row * cell + static_cast<int>(rng.index(cell - h + 1));
    obj.box.x_br = obj.box.x_tl + w;
    obj.box.y_br = obj.box.y_tl + h;
    scene.objects.push_back(obj);
  }

  scene.target_index = rng.index(n);

  // Same-category distractor rule; optionally a full attribute twin.
  std::size_t distractor = rng.index(n - 1);
  if (distractor >= scene.target_index) ++distractor;
  SceneObject& target = scene.objects[scene.target_index];
  SceneObject& twin = scene.objects[distractor];
  twin.category = target.category;
  if (rng.uniform() < cfg.attribute_twin_prob) {
    twin.color = target.color;
    twin.size = target.size;
  }

  // Salient relation: nearest other object (ties to the lowest index).
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = n;
    double best_dist = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = center_distance(scene.objects[i].box, scene.objects[j].box);
      if (best == n || d < best_dist) {
        best = j;
        best_dist = d;
      }
    }
    scene.objects[i].relation = {
        relation_between(scene.objects[i].box, scene.objects[best].box), best};
  }
  return scene;
}

inline void validate_scene(const SceneSpec& scene) {
  check(scene.objects.size() >= 2, "scene ", scene.id, ": fewer than 2 objects");
  check(scene.target_index < scene.objects.size(), "scene ", scene.id,
        ": bad target index");
  bool has_distractor = false;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    check(o.box.valid(), "scene ", scene.id, ": degenerate box");
    check(o.box.x_tl >= 0 && o.box.y_tl >= 0 && o.box.x_br <= scene.width &&
              o.box.y_br <= scene.height,
          "scene ", scene.id, ": box out of bounds");
    if (i != scene.target_index &&
        o.category == scene.objects[scene.target_index].category)
      has_distractor = true;
  }
  check(has_distractor, "scene ", scene.id, ": no same-category distractor");
}

}  // namespace egt
