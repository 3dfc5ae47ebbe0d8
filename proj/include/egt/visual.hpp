#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

#include "egt/common.hpp"
#include "egt/features.hpp"
#include "egt/graph.hpp"
#include "egt/lang_attn.hpp"
#include "egt/params.hpp"
#include "egt/scene.hpp"

namespace egt {

// Per-candidate inputs for the three visual modules. Context slots hold
// plain feature vectors so erasing can zero them without touching shapes.
struct RegionBundle {
  Tensor subject_map;  // [49, D], the candidate's own copy (erasable)
  std::array<double, kLocFeatDim> location{};  // l_i
  // Location module slots: slot 0 is the candidate itself carrying l_i, then
  // relative offsets of up to five nearest same-category objects.
  std::vector<std::array<double, kLocFeatDim>> loc_contexts;
  std::vector<std::size_t> loc_context_ids;
  // Relationship module slots: pooled visual feature of a nearby object (any
  // category) concatenated with its relative offset; up to five.
  std::vector<std::vector<double>> rel_contexts;  // D+5 each
  std::vector<std::size_t> rel_context_ids;
};

inline constexpr std::size_t kMaxLocContexts = 6;  // 5 neighbors + self
inline constexpr std::size_t kMaxRelContexts = 5;

// l_i = [x_tl/W, y_tl/H, x_br/W, y_br/H, wh/WH]
inline std::array<double, kLocFeatDim> location_vector(const Box& b, int image_w,
                                                       int image_h) {
  check_arg(b.width() > 0 && b.height() > 0, "location_vector: zero-area box");
  const double W = image_w, H = image_h;
  return {b.x_tl / W, b.y_tl / H, b.x_br / W, b.y_br / H,
          (b.width() * b.height()) / (W * H)};
}

// delta_l_ij = [dx_tl/w_i, dy_tl/h_i, dx_br/w_i, dy_br/h_i, w_j h_j / w_i h_i]
inline std::array<double, kLocFeatDim> location_offset(const Box& candidate,
                                                       const Box& context) {
  check_arg(candidate.width() > 0 && candidate.height() > 0,
            "location_offset: zero-area candidate");
  const double w = candidate.width(), h = candidate.height();
  return {(context.x_tl - candidate.x_tl) / w, (context.y_tl - candidate.y_tl) / h,
          (context.x_br - candidate.x_br) / w, (context.y_br - candidate.y_br) / h,
          (context.width() * context.height()) / (w * h)};
}

// Average-pooled visual feature over the 49 cells of a region map.
inline std::vector<double> mean_pool_map(const Tensor& map) {
  check_arg(map.rank() == 2 && map.shape[0] == kMapCells,
            "mean_pool_map: expected [49,D] map");
  const std::size_t dim = map.shape[1];
  std::vector<double> out(dim, 0.0);
  for (std::size_t cell = 0; cell < kMapCells; ++cell)
    for (std::size_t d = 0; d < dim; ++d) out[d] += map.at(cell, d);
  for (double& v : out) v /= static_cast<double>(kMapCells);
  return out;
}

// Nearest-first neighbor order; ties in center distance break by ascending
// object index.
inline std::vector<std::size_t> nearest_neighbors(const SceneSpec& scene,
                                                  std::size_t candidate,
                                                  bool same_category_only,
                                                  std::size_t max_count) {
  const SceneObject& cand = scene.objects[candidate];
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    if (j == candidate) continue;
    if (same_category_only && scene.objects[j].category != cand.category) continue;
    order.emplace_back(center_distance(cand.box, scene.objects[j].box), j);
  }
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < order.size() && k < max_count; ++k)
    out.push_back(order[k].second);
  return out;
}

inline RegionBundle build_region_bundle(const SceneSpec& scene,
                                        const SceneFeatures& feats,
                                        std::size_t region) {
  check_arg(region < scene.objects.size(), "build_region_bundle: bad region index");
  RegionBundle bundle;
  bundle.subject_map = feats.region_maps[region];
  bundle.subject_map.requires_grad = false;
  const SceneObject& cand = scene.objects[region];
  bundle.location = location_vector(cand.box, scene.width, scene.height);

  bundle.loc_contexts.push_back(bundle.location);  // the candidate itself
  bundle.loc_context_ids.push_back(region);
  for (const std::size_t j :
       nearest_neighbors(scene, region, /*same_category_only=*/true,
                         kMaxLocContexts - 1)) {
    bundle.loc_contexts.push_back(location_offset(cand.box, scene.objects[j].box));
    bundle.loc_context_ids.push_back(j);
  }

  for (const std::size_t j :
       nearest_neighbors(scene, region, /*same_category_only=*/false,
                         kMaxRelContexts)) {
    std::vector<double> feat = mean_pool_map(feats.region_maps[j]);
    const auto offset = location_offset(cand.box, scene.objects[j].box);
    feat.insert(feat.end(), offset.begin(), offset.end());
    bundle.rel_contexts.push_back(std::move(feat));
    bundle.rel_context_ids.push_back(j);
  }
  return bundle;
}

// ---- attention over features (Eqs. 8-11 shape) ----

struct AttentionPool {
  NodeId weights;  // softmax over rows
  NodeId pooled;   // attention-weighted sum of rows
};

// score_j = w2 . tanh(W1 [row_j, query] + b1) + b2 over the rows of
// `rows` [N, F]; the query is tiled across rows (zeros in self mode).
inline AttentionPool attend_rows(Graph& g, ParamBinder& bind, const AttnMlpParams& mlp,
                                 NodeId rows, NodeId query, bool use_query) {
  const std::size_t n = g.value(rows).shape[0];
  const std::size_t q_dim = g.value(query).shape[0];
  NodeId q_row;
  if (use_query) {
    q_row = g.reshape(query, {1, q_dim});
  } else {
    q_row = g.constant(Tensor({1, q_dim}));
  }
  const NodeId ones = g.constant(Tensor({n, 1}, 1.0));
  const NodeId tiled = g.matmul(ones, q_row);                   // [N, q_dim]
  const NodeId joint = g.concat(1, {rows, tiled});              // [N, F+q_dim]
  const NodeId pre = g.tanh(g.add(g.matmul(joint, bind(mlp.w1)), bind(mlp.b1)));
  const NodeId scores = g.add(g.matmul(pre, bind(mlp.w2)), bind(mlp.b2));  // [N]
  AttentionPool out;
  out.weights = g.softmax(scores);
  const std::size_t feat_dim = g.value(rows).shape[1];
  out.pooled = g.reshape(
      g.matmul(g.reshape(out.weights, {1, n}), rows), {feat_dim});
  return out;
}

// Spatial attention over the subject map (J=49 rows).
inline AttentionPool subject_spatial_attention(Graph& g, ParamBinder& bind,
                                               const ModelParams& p, NodeId v_mat,
                                               NodeId query) {
  check_arg(g.value(v_mat).shape[0] == kMapCells,
            "subject_spatial_attention: expected 49 spatial rows");
  return attend_rows(g, bind, p.subj_attn, v_mat, query, p.config.cross_modal);
}

// Object-level attention over K >= 1 context slots.
inline AttentionPool context_attention(Graph& g, ParamBinder& bind,
                                       const ModelParams& p, std::size_t module,
                                       NodeId c_mat, NodeId query) {
  check_arg(g.value(c_mat).shape[0] >= 1, "context_attention: K must be >= 1");
  return attend_rows(g, bind, p.attn(module), c_mat, query, p.config.cross_modal);
}

// Cosine of the two projected vectors; the epsilon keeps the gradient finite
// on zeroed (erased) features.
inline NodeId cosine_score(Graph& g, ParamBinder& bind, const ScoreHeadParams& head,
                           NodeId feature, NodeId query) {
  const NodeId pf = g.tanh(g.add(g.matmul(bind(head.feat_w), feature), bind(head.feat_b)));
  const NodeId pq = g.tanh(g.add(g.matmul(bind(head.query_w), query), bind(head.query_b)));
  const NodeId eps = g.scalar(1e-12);
  const NodeId inv_f = g.rsqrt(g.add(g.dot(pf, pf), eps));
  const NodeId inv_q = g.rsqrt(g.add(g.dot(pq, pq), eps));
  return g.mul(g.mul(g.dot(pf, pq), inv_f), inv_q);
}

}  // namespace egt
