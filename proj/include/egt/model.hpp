#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "egt/graph.hpp"
#include "egt/lang_attn.hpp"
#include "egt/params.hpp"
#include "egt/visual.hpp"

namespace egt {

// Every attention distribution produced while scoring one (region, query)
// pair. Guides erasing and feeds the attention dump.
struct AttentionRecord {
  std::vector<double> module_weights;                       // 3
  std::array<std::vector<double>, kNumModules> word_weights;  // T each
  std::vector<double> overall_word;                         // T
  std::vector<double> spatial;                              // 49
  std::vector<double> ctx_loc;                              // K_loc
  std::vector<double> ctx_rel;                              // K_rel

  void validate(double tol = 1e-9) const {
    auto check_dist = [tol](std::span<const double> v, const char* what) {
      if (v.empty()) return;
      double sum = 0.0;
      for (const double x : v) {
        check(x >= 0.0, what, ": negative attention weight");
        sum += x;
      }
      check(std::abs(sum - 1.0) <= tol, what, ": attention sums to ", sum);
    };
    check_dist(module_weights, "module weights");
    for (const auto& w : word_weights) check_dist(w, "word weights");
    check_dist(overall_word, "overall word significance");
    check_dist(spatial, "spatial attention");
    check_dist(ctx_loc, "location context attention");
    check_dist(ctx_rel, "relationship context attention");
  }
};

struct ScoreNodes {
  NodeId fused;                                  // scalar in [-1, 1]
  std::array<NodeId, kNumModules> module_score;  // scalars
  std::optional<NodeId> spatial_w;
  std::optional<NodeId> ctx_loc_w;
  std::optional<NodeId> ctx_rel_w;
};

// s(O,Q) = sum_m w^m s^m; a convex combination, so it stays in [-1, 1]
// whenever the per-module scores do.
inline NodeId fuse_scores(Graph& g, NodeId module_w,
                          std::span<const NodeId> module_scores) {
  check_arg(module_scores.size() == kNumModules &&
                g.value(module_w).numel() == kNumModules,
            "fuse_scores: expects one score per module");
  const NodeId score_vec =
      g.concat(0, {module_scores[0], module_scores[1], module_scores[2]});
  return g.dot(module_w, score_vec);
}

namespace detail {

inline NodeId rows_from_vectors(Graph& g, std::span<const std::vector<double>> rows) {
  std::vector<NodeId> ids;
  for (const auto& r : rows) {
    Tensor t({1, r.size()});
    t.data = r;
    ids.push_back(g.constant(std::move(t)));
  }
  return g.concat(0, std::span<const NodeId>(ids));
}

}  // namespace detail

// Builds the full modular score of one region against an encoded query:
// subject (spatial attention), location and relationship (context
// attention), each projected and compared by cosine, fused by the module
// weights. Region features enter as constants; erased regions flow through
// the identical path.
inline ScoreNodes score_region(Graph& g, ParamBinder& bind, const ModelParams& p,
                               const RegionBundle& bundle, const LangAttnNodes& lang) {
  ScoreNodes out;

  // Subject module.
  const NodeId v_mat = g.constant(bundle.subject_map);
  const AttentionPool spatial =
      subject_spatial_attention(g, bind, p, v_mat, lang.query[kModuleSubj]);
  out.spatial_w = spatial.weights;
  out.module_score[kModuleSubj] =
      cosine_score(g, bind, p.subj_score, spatial.pooled, lang.query[kModuleSubj]);

  // Location module: slot features are 5-vectors (self first).
  if (!bundle.loc_contexts.empty()) {
    std::vector<std::vector<double>> rows;
    for (const auto& c : bundle.loc_contexts) rows.emplace_back(c.begin(), c.end());
    const NodeId c_mat = detail::rows_from_vectors(g, rows);
    const AttentionPool pool =
        context_attention(g, bind, p, kModuleLoc, c_mat, lang.query[kModuleLoc]);
    out.ctx_loc_w = pool.weights;
    out.module_score[kModuleLoc] =
        cosine_score(g, bind, p.loc_score, pool.pooled, lang.query[kModuleLoc]);
  } else {
    out.module_score[kModuleLoc] = g.scalar(-1.0);  // worst match by decision
  }

  // Relationship module: slot features are D+5 vectors.
  if (!bundle.rel_contexts.empty()) {
    const NodeId c_mat = detail::rows_from_vectors(
        g, std::span<const std::vector<double>>(bundle.rel_contexts));
    const AttentionPool pool =
        context_attention(g, bind, p, kModuleRel, c_mat, lang.query[kModuleRel]);
    out.ctx_rel_w = pool.weights;
    out.module_score[kModuleRel] =
        cosine_score(g, bind, p.rel_score, pool.pooled, lang.query[kModuleRel]);
  } else {
    out.module_score[kModuleRel] = g.scalar(-1.0);
  }

  out.fused = fuse_scores(g, lang.module_w, out.module_score);
  return out;
}

inline std::vector<double> node_values(const Graph& g, NodeId id) {
  const Tensor& t = g.value(id);
  return {t.data.begin(), t.data.end()};
}

inline AttentionRecord attention_record(const Graph& g, const LangAttnNodes& lang,
                                        const ScoreNodes& score) {
  AttentionRecord rec;
  rec.module_weights = node_values(g, lang.module_w);
  for (std::size_t m = 0; m < kNumModules; ++m)
    rec.word_weights[m] = node_values(g, lang.word_w[m]);
  rec.overall_word = node_values(g, lang.overall_w);
  if (score.spatial_w.has_value()) rec.spatial = node_values(g, *score.spatial_w);
  if (score.ctx_loc_w.has_value()) rec.ctx_loc = node_values(g, *score.ctx_loc_w);
  if (score.ctx_rel_w.has_value()) rec.ctx_rel = node_values(g, *score.ctx_rel_w);
  return rec;
}

// One-shot convenience: score a (region, query) pair on a fresh graph with
// no gradient tracking. Returns the fused score and attention record.
struct EvalScore {
  double score;
  AttentionRecord attention;
};

inline EvalScore evaluate_pair(const ModelParams& p, const Tensor& image_vec,
                               std::span<const std::uint32_t> tokens,
                               const RegionBundle& bundle) {
  Graph g;
  ParamBinder bind(g, /*trainable=*/false);
  const NodeId img = g.constant(image_vec);
  const LangAttnNodes lang = encode_and_attend(g, bind, p, img, tokens);
  const ScoreNodes nodes = score_region(g, bind, p, bundle, lang);
  EvalScore out;
  out.score = g.scalar_value(nodes.fused);
  out.attention = attention_record(g, lang, nodes);
  return out;
}

}  // namespace egt
