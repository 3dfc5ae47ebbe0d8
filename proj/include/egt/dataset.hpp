#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egt/common.hpp"
#include "egt/container.hpp"
#include "egt/expression.hpp"
#include "egt/features.hpp"
#include "egt/scene.hpp"

namespace egt {

using nlohmann::json;

// On disk a split is a JSON manifest ("<split>.json") plus an EGT1 feature
// blob ("<split>.egt"). The manifest carries the config, the frozen
// vocabulary, scene geometry, expressions, and the byte offset of each
// scene's first tensor record in the blob.

struct SplitData {
  std::string name;
  std::vector<SceneSpec> scenes;
  std::vector<SceneFeatures> features;  // parallel to scenes
  std::vector<ExpressionRecord> expressions;
};

struct Dataset {
  GenConfig config;
  Vocab vocab = Vocab::standard();
  SplitData train, val, test;
};

// ---- config <-> json ----

inline json cue_mix_to_json(const CueMix& m) {
  json j = json::object();
  for (const auto& [k, v] : m.weights) j[k] = v;
  return j;
}

inline CueMix cue_mix_from_json(const json& j) {
  CueMix m;
  m.weights.clear();
  for (auto it = j.begin(); it != j.end(); ++it) m.weights[it.key()] = it.value();
  m.validate();
  return m;
}

inline json config_to_json(const GenConfig& c) {
  return json{{"seed", c.seed},
              {"num_scenes", c.num_scenes},
              {"feature_dim", c.feature_dim},
              {"noise_sigma", c.noise_sigma},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"num_categories", c.num_categories},
              {"num_colors", c.num_colors},
              {"attribute_twin_prob", c.attribute_twin_prob},
              {"expressions_per_scene", c.expressions_per_scene},
              {"cue_mix", cue_mix_to_json(c.cue_mix)},
              {"image_size", c.image_size},
              {"grid", c.grid}};
}

inline GenConfig config_from_json(const json& j) {
  GenConfig c;
  c.seed = j.at("seed");
  c.num_scenes = j.at("num_scenes");
  c.feature_dim = j.at("feature_dim");
  c.noise_sigma = j.at("noise_sigma");
  c.min_objects = j.at("min_objects");
  c.max_objects = j.at("max_objects");
  c.num_categories = j.at("num_categories");
  c.num_colors = j.at("num_colors");
  c.attribute_twin_prob = j.at("attribute_twin_prob");
  c.expressions_per_scene = j.at("expressions_per_scene");
  c.cue_mix = cue_mix_from_json(j.at("cue_mix"));
  c.image_size = j.at("image_size");
  c.grid = j.at("grid");
  c.validate();
  return c;
}

// ---- scene / expression <-> json ----

inline json scene_to_json(const SceneSpec& s) {
  json objs = json::array();
  for (const SceneObject& o : s.objects) {
    json jo{{"category", category_names()[o.category]},
            {"color", color_names()[o.color]},
            {"size", size_name(o.size)},
            {"box", {o.box.x_tl, o.box.y_tl, o.box.x_br, o.box.y_br}}};
    if (o.relation.has_value()) {
      jo["relation"] = {relation_name(o.relation->first), o.relation->second};
    }
    objs.push_back(jo);
  }
  return json{{"id", s.id},
              {"width", s.width},
              {"height", s.height},
              {"target", s.target_index},
              {"objects", objs}};
}

inline int index_of(const std::vector<std::string>& names, const std::string& v) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == v) return static_cast<int>(i);
  fail("unknown name: ", v);
}

inline RelationKind relation_from_name(const std::string& n) {
  for (const RelationKind k : {RelationKind::LeftOf, RelationKind::RightOf,
                               RelationKind::Above, RelationKind::Below}) {
    if (relation_name(k) == n) return k;
  }
  fail("unknown relation: ", n);
}

inline SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  s.id = j.at("id");
  s.width = j.at("width");
  s.height = j.at("height");
  s.target_index = j.at("target");
  for (const json& jo : j.at("objects")) {
    SceneObject o;
    o.category = index_of(category_names(), jo.at("category"));
    o.color = index_of(color_names(), jo.at("color"));
    o.size = jo.at("size") == "large" ? SizeClass::Large : SizeClass::Small;
    const auto& b = jo.at("box");
    o.box = Box{b.at(0), b.at(1), b.at(2), b.at(3)};
    if (jo.contains("relation")) {
      o.relation = {relation_from_name(jo.at("relation").at(0)),
                    jo.at("relation").at(1).get<std::size_t>()};
    }
    s.objects.push_back(o);
  }
  return s;
}

inline json constraints_to_json(const CueConstraints& c) {
  json j{{"category", c.category}};
  if (c.color.has_value()) j["color"] = *c.color;
  if (c.size.has_value()) j["size"] = static_cast<int>(*c.size);
  if (c.horz.has_value()) j["horz"] = static_cast<int>(*c.horz);
  if (c.vert.has_value()) j["vert"] = static_cast<int>(*c.vert);
  if (c.rel.has_value()) {
    json r{{"kind", relation_name(c.rel->kind)}, {"category", c.rel->ctx_category}};
    if (c.rel->ctx_color.has_value()) r["color"] = *c.rel->ctx_color;
    j["rel"] = r;
  }
  return j;
}

inline CueConstraints constraints_from_json(const json& j) {
  CueConstraints c;
  c.category = j.at("category");
  if (j.contains("color")) c.color = j.at("color").get<int>();
  if (j.contains("size")) c.size = static_cast<SizeClass>(j.at("size").get<int>());
  if (j.contains("horz")) c.horz = static_cast<HorzBand>(j.at("horz").get<int>());
  if (j.contains("vert")) c.vert = static_cast<VertBand>(j.at("vert").get<int>());
  if (j.contains("rel")) {
    RelConstraint r;
    r.kind = relation_from_name(j.at("rel").at("kind"));
    r.ctx_category = j.at("rel").at("category");
    if (j.at("rel").contains("color")) r.ctx_color = j.at("rel").at("color").get<int>();
    c.rel = r;
  }
  return c;
}

inline json expression_to_json(const ExpressionRecord& e) {
  json cues = json::array();
  for (const Cue c : e.cues) cues.push_back(cue_name(c));
  return json{{"id", e.id},
              {"scene", e.scene_id},
              {"target", e.target_index},
              {"tokens", e.tokens},
              {"text", e.text},
              {"cues", cues},
              {"constraints", constraints_to_json(e.constraints)}};
}

inline ExpressionRecord expression_from_json(const json& j) {
  ExpressionRecord e;
  e.id = j.at("id");
  e.scene_id = j.at("scene");
  e.target_index = j.at("target");
  e.tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
  e.text = j.at("text");
  for (const json& c : j.at("cues")) {
    for (const Cue cue : {Cue::Attribute, Cue::Location, Cue::Relationship}) {
      if (c == cue_name(cue)) e.cues.insert(cue);
    }
  }
  e.constraints = constraints_from_json(j.at("constraints"));
  return e;
}

// ---- generation ----

// Builds one split. Scene ids are assigned from *next_scene_id so splits
// stay disjoint; scenes whose target admits no unique expression are
// resampled a bounded number of times.
inline SplitData generate_split(const std::string& name, std::size_t scene_count,
                                const GenConfig& cfg, std::uint32_t* next_scene_id,
                                std::uint64_t* next_stream_id,
                                std::uint32_t* next_expr_id) {
  SplitData split;
  split.name = name;
  constexpr int kMaxSceneAttempts = 100;
  for (std::size_t s = 0; s < scene_count; ++s) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxSceneAttempts && !accepted; ++attempt) {
      Rng rng = Rng::derive(cfg.seed, (*next_stream_id)++);
      SceneSpec scene = generate_scene(rng, cfg, *next_scene_id);
      std::vector<ExpressionRecord> exprs;
      bool ok = true;
      for (std::size_t e = 0; e < cfg.expressions_per_scene && ok; ++e) {
        // Distinct targets per expression when the scene allows it keeps
        // multiple expressions from collapsing onto one object.
        if (e > 0) scene.target_index = rng.index(scene.objects.size());
        auto rec = generate_expression(scene, rng, cfg.cue_mix, Vocab::standard());
        if (!rec.has_value()) {
          ok = false;
        } else {
          exprs.push_back(std::move(*rec));
        }
      }
      if (!ok) continue;
      // Restore the manifest target to the first expression's target.
      scene.target_index = exprs.front().target_index;
      validate_scene(scene);
      split.features.push_back(synthesize_features(scene, cfg, rng));
      for (auto& e : exprs) {
        e.id = (*next_expr_id)++;
        split.expressions.push_back(std::move(e));
      }
      split.scenes.push_back(std::move(scene));
      accepted = true;
    }
    check(accepted, "split ", name, ": could not generate a resolvable scene after ",
          kMaxSceneAttempts, " attempts");
    ++*next_scene_id;
  }
  return split;
}

inline Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  std::uint32_t next_scene_id = 0;
  std::uint32_t next_expr_id = 0;
  std::uint64_t next_stream = 0;
  const std::size_t val_count = std::max<std::size_t>(1, cfg.num_scenes / 10);
  const std::size_t test_count = std::max<std::size_t>(1, cfg.num_scenes / 5);
  ds.train = generate_split("train", cfg.num_scenes, cfg, &next_scene_id,
                            &next_stream, &next_expr_id);
  ds.val = generate_split("val", val_count, cfg, &next_scene_id, &next_stream,
                          &next_expr_id);
  ds.test = generate_split("test", test_count, cfg, &next_scene_id, &next_stream,
                           &next_expr_id);
  return ds;
}

// ---- io ----

inline void write_split(const std::filesystem::path& dir, const SplitData& split,
                        const GenConfig& cfg, const Vocab& vocab) {
  std::filesystem::create_directories(dir);
  const auto blob_path = dir / (split.name + ".egt");
  std::vector<std::uint64_t> offsets;
  {
    ContainerWriter writer(blob_path.string());
    for (std::size_t s = 0; s < split.scenes.size(); ++s) {
      const std::string prefix = strcat("s", split.scenes[s].id);
      offsets.push_back(writer.add(prefix + "/img", split.features[s].image_vec));
      for (std::size_t r = 0; r < split.features[s].region_maps.size(); ++r) {
        writer.add(strcat(prefix, "/r", r), split.features[s].region_maps[r]);
      }
    }
  }

  json scenes = json::array();
  for (std::size_t s = 0; s < split.scenes.size(); ++s) {
    json js = scene_to_json(split.scenes[s]);
    js["blob_offset"] = offsets[s];
    scenes.push_back(std::move(js));
  }
  json exprs = json::array();
  for (const auto& e : split.expressions) exprs.push_back(expression_to_json(e));

  const json manifest{{"format", "egt-dataset"}, {"version", 1},
                      {"split", split.name},    {"config", config_to_json(cfg)},
                      {"vocab", vocab.words()}, {"scenes", scenes},
                      {"expressions", exprs}};
  std::ofstream os(dir / (split.name + ".json"), std::ios::binary);
  check(os.good(), "cannot write manifest for split ", split.name);
  os << manifest.dump(1, '\t') << "\n";
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  for (const SplitData* split : {&ds.train, &ds.val, &ds.test}) {
    write_split(dir, *split, ds.config, ds.vocab);
  }
}

struct LoadedSplit {
  SplitData data;
  GenConfig config;
  Vocab vocab = Vocab::standard();
};

inline LoadedSplit read_split(const std::filesystem::path& dir, const std::string& name) {
  const auto manifest_path = dir / (name + ".json");
  std::ifstream is(manifest_path, std::ios::binary);
  check(is.good(), "cannot open manifest: ", manifest_path.string());
  json manifest;
  is >> manifest;
  check(manifest.value("format", "") == "egt-dataset", "not a dataset manifest: ",
        manifest_path.string());
  check(manifest.value("version", 0) == 1, "unsupported dataset version");

  LoadedSplit out;
  out.config = config_from_json(manifest.at("config"));
  out.vocab = Vocab::from_words(manifest.at("vocab").get<std::vector<std::string>>());
  out.data.name = manifest.at("split");

  for (const json& js : manifest.at("scenes")) {
    out.data.scenes.push_back(scene_from_json(js));
  }
  for (const json& je : manifest.at("expressions")) {
    out.data.expressions.push_back(expression_from_json(je));
  }

  // Stream the blob once; verify record names and manifest offsets as we go.
  ContainerReader reader((dir / (name + ".egt")).string());
  NamedTensor nt;
  std::size_t scene_idx = 0;
  out.data.features.resize(out.data.scenes.size());
  while (reader.next(nt)) {
    check(scene_idx < out.data.scenes.size(), "blob has records past manifest scenes");
    const SceneSpec& scene = out.data.scenes[scene_idx];
    const std::string prefix = strcat("s", scene.id);
    SceneFeatures& feats = out.data.features[scene_idx];
    if (nt.name == prefix + "/img") {
      const std::uint64_t expected =
          manifest.at("scenes")[scene_idx].at("blob_offset").get<std::uint64_t>();
      check(nt.offset == expected, "scene ", scene.id, ": blob offset mismatch (",
            nt.offset, " vs manifest ", expected, ")");
      feats.image_vec = std::move(nt.tensor);
      continue;
    }
    const std::string expect_region = strcat(prefix, "/r", feats.region_maps.size());
    check(nt.name == expect_region, "unexpected blob record ", nt.name, ", wanted ",
          expect_region);
    feats.region_maps.push_back(std::move(nt.tensor));
    if (feats.region_maps.size() == scene.objects.size()) ++scene_idx;
  }
  check(scene_idx == out.data.scenes.size(), "blob ended before all scenes were read");
  for (std::size_t s = 0; s < out.data.scenes.size(); ++s) {
    check(out.data.features[s].region_maps.size() == out.data.scenes[s].objects.size(),
          "scene ", out.data.scenes[s].id, ": region map count mismatch");
  }
  return out;
}

}  // namespace egt
