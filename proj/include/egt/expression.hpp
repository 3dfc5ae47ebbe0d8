#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "egt/common.hpp"
#include "egt/rng.hpp"
#include "egt/scene.hpp"

namespace egt {

// Template-generated referring expressions over a frozen vocabulary, with a
// symbolic resolver that guarantees each expression uniquely identifies its
// target. The resolver doubles as the evaluation upper-bound oracle.

inline constexpr std::uint32_t kPadToken = 0;
inline constexpr std::uint32_t kUnkToken = 1;
inline constexpr std::size_t kMinExprLen = 3;
inline constexpr std::size_t kMaxExprLen = 12;

class Vocab {
 public:
  static Vocab standard() {
    Vocab v;
    v.add("<pad>");
    v.add("<unk>");
    for (const char* w : {"the", "a"}) v.add(w);
    for (const auto& w : category_names()) v.add(w);
    for (const auto& w : color_names()) v.add(w);
    v.add("small");
    v.add("large");
    for (const char* w : {"left", "right", "top", "bottom", "middle", "center",
                          "side", "of", "to", "above", "below", "on", "in", "at"})
      v.add(w);
    return v;
  }

  std::uint32_t id(const std::string& word) const {
    const auto it = index_.find(word);
    check_arg(it != index_.end(), "word not in vocabulary: ", word);
    return it->second;
  }

  const std::string& word(std::uint32_t id) const {
    check_arg(id < words_.size(), "token id out of range: ", id);
    return words_[id];
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  static Vocab from_words(std::vector<std::string> words) {
    Vocab v;
    for (auto& w : words) v.add(w);
    check_arg(v.size() >= 2 && v.words_[kPadToken] == "<pad>" &&
                  v.words_[kUnkToken] == "<unk>",
              "vocabulary must reserve <pad>=0 and <unk>=1");
    return v;
  }

 private:
  void add(const std::string& w) {
    check_arg(index_.emplace(w, static_cast<std::uint32_t>(words_.size())).second,
              "duplicate vocabulary word: ", w);
    words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::map<std::string, std::uint32_t> index_;
};

enum class Cue : std::uint8_t { Attribute = 0, Location = 1, Relationship = 2 };

inline const char* cue_name(Cue c) {
  switch (c) {
    case Cue::Attribute: return "attribute";
    case Cue::Location: return "location";
    case Cue::Relationship: return "relationship";
  }
  return "?";
}

enum class HorzBand : std::uint8_t { Left = 0, Center = 1, Right = 2 };
enum class VertBand : std::uint8_t { Top = 0, Middle = 1, Bottom = 2 };

inline HorzBand horz_band(const Box& box, int image_w) {
  const double cx = box.center_x();
  if (cx * 3.0 < image_w) return HorzBand::Left;
  if (cx * 3.0 > 2.0 * image_w) return HorzBand::Right;
  return HorzBand::Center;
}

inline VertBand vert_band(const Box& box, int image_h) {
  const double cy = box.center_y();
  if (cy * 3.0 < image_h) return VertBand::Top;
  if (cy * 3.0 > 2.0 * image_h) return VertBand::Bottom;
  return VertBand::Middle;
}

struct RelConstraint {
  RelationKind kind;
  int ctx_category = 0;
  std::optional<int> ctx_color;
};

// The structured meaning of an expression: conjunction of category plus
// optional attribute / location / relationship constraints.
struct CueConstraints {
  int category = 0;
  std::optional<int> color;
  std::optional<SizeClass> size;
  std::optional<HorzBand> horz;
  std::optional<VertBand> vert;
  std::optional<RelConstraint> rel;

  std::set<Cue> cues() const {
    std::set<Cue> out;
    if (color.has_value() || size.has_value()) out.insert(Cue::Attribute);
    if (horz.has_value() || vert.has_value()) out.insert(Cue::Location);
    if (rel.has_value()) out.insert(Cue::Relationship);
    return out;
  }
};

inline bool object_matches(const SceneSpec& scene, std::size_t index,
                           const CueConstraints& c) {
  const SceneObject& o = scene.objects[index];
  if (o.category != c.category) return false;
  if (c.color.has_value() && o.color != *c.color) return false;
  if (c.size.has_value() && o.size != *c.size) return false;
  if (c.horz.has_value() && horz_band(o.box, scene.width) != *c.horz) return false;
  if (c.vert.has_value() && vert_band(o.box, scene.height) != *c.vert) return false;
  if (c.rel.has_value()) {
    bool found = false;
    for (std::size_t j = 0; j < scene.objects.size() && !found; ++j) {
      if (j == index) continue;
      const SceneObject& ctx = scene.objects[j];
      if (ctx.category != c.rel->ctx_category) continue;
      if (c.rel->ctx_color.has_value() && ctx.color != *c.rel->ctx_color) continue;
      if (relation_between(o.box, ctx.box) == c.rel->kind) found = true;
    }
    if (!found) return false;
  }
  return true;
}

// Exhaustive symbolic resolution: all object indices matching the constraints.
inline std::vector<std::size_t> resolve(const SceneSpec& scene,
                                        const CueConstraints& c) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (object_matches(scene, i, c)) out.push_back(i);
  }
  return out;
}

inline bool resolves_uniquely_to_target(const SceneSpec& scene,
                                        const CueConstraints& c) {
  const auto matches = resolve(scene, c);
  return matches.size() == 1 && matches[0] == scene.target_index;
}

struct ExpressionRecord {
  std::uint32_t id = 0;
  std::uint32_t scene_id = 0;
  std::size_t target_index = 0;
  std::vector<std::uint32_t> tokens;
  std::string text;
  std::set<Cue> cues;
  CueConstraints constraints;
};

namespace detail {

inline void push_words(std::vector<std::string>& out,
                       std::initializer_list<std::string> ws) {
  for (const auto& w : ws) out.push_back(w);
}

inline std::vector<std::string> realize_words(const SceneSpec& scene,
                                              const CueConstraints& c) {
  std::vector<std::string> words;
  words.push_back("the");
  if (c.size.has_value()) words.push_back(size_name(*c.size));
  if (c.color.has_value()) words.push_back(color_names()[*c.color]);
  words.push_back(category_names()[c.category]);

  if (c.horz.has_value() && c.vert.has_value()) {
    const char* v = *c.vert == VertBand::Top      ? "top"
                    : *c.vert == VertBand::Bottom ? "bottom"
                                                  : "middle";
    const char* h = *c.horz == HorzBand::Left    ? "left"
                    : *c.horz == HorzBand::Right ? "right"
                                                 : "center";
    push_words(words, {"in", "the", v, h});
  } else if (c.horz.has_value()) {
    if (*c.horz == HorzBand::Center) {
      push_words(words, {"in", "the", "center"});
    } else {
      push_words(words, {"on", "the",
                         *c.horz == HorzBand::Left ? "left" : "right", "side"});
    }
  } else if (c.vert.has_value()) {
    if (*c.vert == VertBand::Middle) {
      push_words(words, {"in", "the", "middle"});
    } else {
      push_words(words, {"at", "the",
                         *c.vert == VertBand::Top ? "top" : "bottom"});
    }
  }

  if (c.rel.has_value()) {
    switch (c.rel->kind) {
      case RelationKind::LeftOf: push_words(words, {"to", "the", "left", "of"}); break;
      case RelationKind::RightOf: push_words(words, {"to", "the", "right", "of"}); break;
      case RelationKind::Above: words.push_back("above"); break;
      case RelationKind::Below: words.push_back("below"); break;
    }
    words.push_back("the");
    if (c.rel->ctx_color.has_value())
      words.push_back(color_names()[*c.rel->ctx_color]);
    words.push_back(category_names()[c.rel->ctx_category]);
  }
  (void)scene;
  return words;
}

// Whether each cue is individually necessary: dropping any one cue family
// must break unique resolution. Expressions like that force multi-cue
// comprehension, which is where erased training samples matter.
inline bool all_cues_necessary(const SceneSpec& scene, const CueConstraints& c) {
  const std::set<Cue> cues = c.cues();
  if (cues.size() < 2) return false;
  for (const Cue cue : cues) {
    CueConstraints reduced = c;
    switch (cue) {
      case Cue::Attribute:
        reduced.color.reset();
        reduced.size.reset();
        break;
      case Cue::Location:
        reduced.horz.reset();
        reduced.vert.reset();
        break;
      case Cue::Relationship:
        reduced.rel.reset();
        break;
    }
    if (resolves_uniquely_to_target(scene, reduced)) return false;
  }
  return true;
}

}  // namespace detail

// One sampled realization attempt for a given cue subset; empty when the
// draw fails to resolve or exceeds the token budget.
inline std::optional<CueConstraints> try_realize(const SceneSpec& scene, Rng& rng,
                                                 bool want_attr, bool want_loc,
                                                 bool want_rel) {
  const SceneObject& target = scene.objects[scene.target_index];
  CueConstraints c;
  c.category = target.category;

  if (want_attr) {
    switch (rng.index(3)) {
      case 0: c.color = target.color; break;
      case 1: c.size = target.size; break;
      default:
        c.color = target.color;
        c.size = target.size;
        break;
    }
  }
  if (want_loc) {
    const HorzBand h = horz_band(target.box, scene.width);
    const VertBand v = vert_band(target.box, scene.height);
    const bool corner = h != HorzBand::Center && v != VertBand::Middle;
    const std::size_t pick = rng.index(corner ? 3 : 2);
    if (corner && pick == 2) {
      c.horz = h;
      c.vert = v;
    } else if (pick == 0) {
      c.horz = h;
    } else {
      c.vert = v;
    }
  }
  if (want_rel) {
    const std::size_t n = scene.objects.size();
    std::size_t ctx = rng.index(n - 1);
    if (ctx >= scene.target_index) ++ctx;
    RelConstraint rel;
    rel.kind = relation_between(target.box, scene.objects[ctx].box);
    rel.ctx_category = scene.objects[ctx].category;
    if (rng.index(2) == 0) rel.ctx_color = scene.objects[ctx].color;
    c.rel = rel;
  }

  if (!resolves_uniquely_to_target(scene, c)) return std::nullopt;
  const auto words = detail::realize_words(scene, c);
  if (words.size() < kMinExprLen || words.size() > kMaxExprLen) return std::nullopt;
  return c;
}

// Generates one expression for the scene's target. Prefers realizations where
// every cue is necessary for uniqueness; falls back to any unique one.
inline std::optional<ExpressionRecord> generate_expression(const SceneSpec& scene,
                                                           Rng& rng,
                                                           const CueMix& cue_mix,
                                                           const Vocab& vocab) {
  cue_mix.validate();
  std::vector<std::string> keys;
  std::vector<double> weights;
  for (const auto& [key, w] : cue_mix.weights) {
    keys.push_back(key);
    weights.push_back(w);
  }

  std::optional<CueConstraints> chosen;
  constexpr int kCueDraws = 10;
  constexpr int kRealizationsPerDraw = 12;
  for (int draw = 0; draw < kCueDraws && !chosen.has_value(); ++draw) {
    const std::string& key = keys[rng.multinomial(weights)];
    const bool want_attr = key.find('a') != std::string::npos;
    const bool want_loc = key.find('l') != std::string::npos;
    const bool want_rel = key.find('r') != std::string::npos;
    // Commit to the drawn cue subset if any realization of it resolves;
    // within the draw, prefer realizations whose cues are all necessary.
    std::optional<CueConstraints> first_valid;
    for (int attempt = 0; attempt < kRealizationsPerDraw; ++attempt) {
      const auto c = try_realize(scene, rng, want_attr, want_loc, want_rel);
      if (!c.has_value()) continue;
      if (c->cues().size() < 2 || detail::all_cues_necessary(scene, *c)) {
        chosen = c;
        break;
      }
      if (!first_valid.has_value()) first_valid = c;
    }
    if (!chosen.has_value()) chosen = first_valid;
  }
  if (!chosen.has_value()) return std::nullopt;
  const std::optional<CueConstraints>& fallback = chosen;

  ExpressionRecord rec;
  rec.scene_id = scene.id;
  rec.target_index = scene.target_index;
  rec.constraints = *fallback;
  rec.cues = fallback->cues();
  const auto words = detail::realize_words(scene, *fallback);
  for (const auto& w : words) {
    rec.tokens.push_back(vocab.id(w));
    if (!rec.text.empty()) rec.text += ' ';
    rec.text += w;
  }
  return rec;
}

}  // namespace egt
