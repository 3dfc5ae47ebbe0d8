#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "egt/common.hpp"
#include "egt/graph.hpp"
#include "egt/params.hpp"

namespace egt {

// Binds parameter tensors into a graph once each, and copies the graph's
// gradients back out after backward(). One binder per graph.
class ParamBinder {
 public:
  ParamBinder(Graph& g, bool trainable) : graph_(g), trainable_(trainable) {}

  NodeId operator()(const Tensor& param) {
    const auto it = ids_.find(&param);
    if (it != ids_.end()) return it->second;
    Tensor copy = param;
    copy.requires_grad = trainable_;
    copy.grad.clear();
    const NodeId id = graph_.input(std::move(copy));
    ids_.emplace(&param, id);
    return id;
  }

  bool trainable() const { return trainable_; }

  // Adds this graph's parameter gradients into a flat buffer laid out by the
  // table (which must index the same Tensor objects).
  void accumulate_grads(const ParamTable& table, std::vector<double>& flat) const {
    flat.resize(table.size(), 0.0);
    for (std::size_t i = 0; i < table.count(); ++i) {
      const auto it = ids_.find(&table.tensor(i));
      if (it == ids_.end()) continue;
      const auto grad = graph_.grad(it->second);
      if (grad.empty()) continue;
      double* dst = flat.data() + table.offset(i);
      for (std::size_t k = 0; k < grad.size(); ++k) dst[k] += grad[k];
    }
  }

 private:
  Graph& graph_;
  bool trainable_;
  std::unordered_map<const Tensor*, NodeId> ids_;
};

// Image-aware language attention: the query encoder consumes the projected
// image feature at step 0 and one word embedding per step; module- and
// word-level attention read the hidden states.
struct LangAttnNodes {
  std::vector<NodeId> hidden;             // h_1..h_T, [H] each
  NodeId embed_mat;                       // [T, E] word embeddings in order
  NodeId module_w;                        // [3] softmax over modules
  std::array<NodeId, kNumModules> word_w; // [T] softmax over words, per module
  std::array<NodeId, kNumModules> query;  // [E] attention-pooled query embeddings
  NodeId overall_w;                       // [T] module-weighted word significance
};

namespace detail {

struct LstmState {
  NodeId h;
  NodeId c;
};

inline LstmState lstm_step(Graph& g, ParamBinder& bind, const ModelParams& p,
                           NodeId x, const LstmState& prev) {
  const std::size_t H = p.config.hidden_dim;
  NodeId gates = g.add(g.matmul(bind(p.lstm_wi), x), g.matmul(bind(p.lstm_wh), prev.h));
  gates = g.add(gates, bind(p.lstm_b));
  const NodeId in_gate = g.sigmoid(g.slice(gates, 0, 0, H));
  const NodeId forget_gate = g.sigmoid(g.slice(gates, 0, H, H));
  const NodeId cell_cand = g.tanh(g.slice(gates, 0, 2 * H, H));
  const NodeId out_gate = g.sigmoid(g.slice(gates, 0, 3 * H, H));
  LstmState next;
  next.c = g.add(g.mul(forget_gate, prev.c), g.mul(in_gate, cell_cand));
  next.h = g.mul(out_gate, g.tanh(next.c));
  return next;
}

}  // namespace detail

// Runs the encoder; returns h_1..h_T and the [T,E] embedding matrix.
inline std::vector<NodeId> encode_query(Graph& g, ParamBinder& bind,
                                        const ModelParams& p, NodeId image_feat,
                                        std::span<const std::uint32_t> tokens,
                                        NodeId* embed_mat_out = nullptr) {
  check_arg(!tokens.empty(), "encode_query: empty token sequence");
  const std::size_t E = p.config.embed_dim;

  NodeId step0;
  if (p.config.cross_modal) {
    step0 = g.add(g.matmul(bind(p.img_w), image_feat), bind(p.img_b));
  } else {
    step0 = g.constant(Tensor({E}));  // self-attention ablation: no image cue
  }

  detail::LstmState state{g.constant(Tensor({p.config.hidden_dim})),
                          g.constant(Tensor({p.config.hidden_dim}))};
  state = detail::lstm_step(g, bind, p, step0, state);

  const NodeId table = bind(p.embed);
  std::vector<NodeId> hidden;
  std::vector<NodeId> embed_rows;
  for (const std::uint32_t tok : tokens) {
    check_arg(tok < p.config.vocab_size, "encode_query: token id ", tok,
              " outside vocabulary of size ", p.config.vocab_size);
    const NodeId row = g.slice(table, 0, tok, 1);  // [1,E]
    embed_rows.push_back(row);
    state = detail::lstm_step(g, bind, p, g.reshape(row, {E}), state);
    hidden.push_back(state.h);
  }
  if (embed_mat_out != nullptr) {
    *embed_mat_out = g.concat(0, std::span<const NodeId>(embed_rows));
  }
  return hidden;
}

// alpha_t = sum_m w^m alpha_t^m. Valid distribution by construction since it
// is a convex combination of distributions.
inline NodeId overall_word_significance(Graph& g, NodeId module_w,
                                        std::span<const NodeId> word_w) {
  check_arg(word_w.size() == kNumModules &&
                g.value(module_w).numel() == kNumModules,
            "overall_word_significance: expects one weight per module");
  NodeId overall = g.mul(word_w[0], g.slice(module_w, 0, 0, 1));
  for (std::size_t m = 1; m < kNumModules; ++m) {
    overall = g.add(overall, g.mul(word_w[m], g.slice(module_w, 0, m, 1)));
  }
  return overall;
}

// Module weights from h_T, per-module word attention from h_1..h_T, and the
// attention-pooled query embedding per module.
inline LangAttnNodes attend_language(Graph& g, ParamBinder& bind, const ModelParams& p,
                                     std::vector<NodeId> hidden, NodeId embed_mat) {
  check_arg(!hidden.empty(), "attend_language: need at least one hidden state");
  const std::size_t T = hidden.size();
  const std::size_t H = p.config.hidden_dim;
  const std::size_t E = p.config.embed_dim;

  LangAttnNodes out;
  out.hidden = std::move(hidden);
  out.embed_mat = embed_mat;

  out.module_w = g.softmax(g.matmul(bind(p.module_heads), out.hidden.back()));

  std::vector<NodeId> h_rows;
  for (const NodeId h : out.hidden) h_rows.push_back(g.reshape(h, {1, H}));
  const NodeId h_mat = g.concat(0, std::span<const NodeId>(h_rows));  // [T,H]

  for (std::size_t m = 0; m < kNumModules; ++m) {
    const NodeId head = g.reshape(g.slice(bind(p.word_heads), 0, m, 1), {H});
    const NodeId scores = g.matmul(h_mat, head);  // [T]
    out.word_w[m] = g.softmax(scores);
    out.query[m] =
        g.reshape(g.matmul(g.reshape(out.word_w[m], {1, T}), embed_mat), {E});
  }

  out.overall_w = overall_word_significance(g, out.module_w, out.word_w);
  return out;
}

inline LangAttnNodes encode_and_attend(Graph& g, ParamBinder& bind,
                                       const ModelParams& p, NodeId image_feat,
                                       std::span<const std::uint32_t> tokens) {
  NodeId embed_mat{};
  std::vector<NodeId> hidden = encode_query(g, bind, p, image_feat, tokens, &embed_mat);
  return attend_language(g, bind, p, std::move(hidden), embed_mat);
}

}  // namespace egt
