#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "egt/common.hpp"
#include "egt/container.hpp"
#include "egt/finite_diff.hpp"
#include "egt/rng.hpp"
#include "egt/tensor.hpp"

namespace egt {

// Module index order used everywhere: subject, location, relationship.
inline constexpr std::size_t kModuleSubj = 0;
inline constexpr std::size_t kModuleLoc = 1;
inline constexpr std::size_t kModuleRel = 2;
inline constexpr std::size_t kNumModules = 3;
inline constexpr std::size_t kLocFeatDim = 5;

inline const char* module_name(std::size_t m) {
  switch (m) {
    case kModuleSubj: return "subj";
    case kModuleLoc: return "loc";
    case kModuleRel: return "rel";
  }
  return "?";
}

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 16;  // D
  std::size_t embed_dim = 32;    // E
  std::size_t hidden_dim = 64;   // H
  std::size_t attn_hidden = 32;  // A
  std::size_t score_dim = 32;    // S
  // Cross-modal attention feeds the image into the query encoder and the
  // query embedding into the visual attention MLPs; the self-attention
  // ablation replaces both with zeros.
  bool cross_modal = true;

  std::size_t rel_feat_dim() const { return feature_dim + kLocFeatDim; }

  void validate() const {
    check_arg(vocab_size >= 2, "model config: vocab_size must cover pad/unk");
    check_arg(feature_dim > 0 && embed_dim > 0 && hidden_dim > 0 &&
                  attn_hidden > 0 && score_dim > 0,
              "model config: zero dimension");
  }
};

// One attention MLP: score(x) = w2 . tanh(W1 x + b1) + b2.
struct AttnMlpParams {
  Tensor w1;  // [in_dim, attn_hidden]
  Tensor b1;  // [attn_hidden]
  Tensor w2;  // [attn_hidden]
  Tensor b2;  // [1]
};

// Linear+tanh projections of a module feature and its query embedding into
// the shared score space the cosine is taken in.
struct ScoreHeadParams {
  Tensor feat_w;   // [score_dim, feat_dim]
  Tensor feat_b;   // [score_dim]
  Tensor query_w;  // [score_dim, embed_dim]
  Tensor query_b;  // [score_dim]
};

struct ModelParams {
  ModelConfig config;

  Tensor embed;    // [V, E]
  Tensor img_w;    // [E, D] projection feeding the encoder's step 0
  Tensor img_b;    // [E]
  Tensor lstm_wi;  // [4H, E], gate order i, f, g, o
  Tensor lstm_wh;  // [4H, H]
  Tensor lstm_b;   // [4H]
  Tensor module_heads;  // f_m rows: [3, H]
  Tensor word_heads;    // g_m rows: [3, H]
  AttnMlpParams subj_attn;  // input [v_j, q^subj]: D+E
  AttnMlpParams loc_attn;   // input [c_k^loc, q^loc]: 5+E
  AttnMlpParams rel_attn;   // input [c_k^rel, q^rel]: D+5+E
  ScoreHeadParams subj_score;  // feature dim D
  ScoreHeadParams loc_score;   // feature dim 5
  ScoreHeadParams rel_score;   // feature dim D+5

  const AttnMlpParams& attn(std::size_t m) const {
    return m == kModuleSubj ? subj_attn : m == kModuleLoc ? loc_attn : rel_attn;
  }
  const ScoreHeadParams& score_head(std::size_t m) const {
    return m == kModuleSubj ? subj_score : m == kModuleLoc ? loc_score : rel_score;
  }

  template <typename F>
  void for_each(F&& f) {
    f("embed", embed);
    f("img_proj/w", img_w);
    f("img_proj/b", img_b);
    f("lstm/w_input", lstm_wi);
    f("lstm/w_hidden", lstm_wh);
    f("lstm/bias", lstm_b);
    f("lang/module_heads", module_heads);
    f("lang/word_heads", word_heads);
    const char* names[kNumModules] = {"subj", "loc", "rel"};
    AttnMlpParams* attns[kNumModules] = {&subj_attn, &loc_attn, &rel_attn};
    ScoreHeadParams* heads[kNumModules] = {&subj_score, &loc_score, &rel_score};
    for (std::size_t m = 0; m < kNumModules; ++m) {
      f(strcat("attn/", names[m], "/w1"), attns[m]->w1);
      f(strcat("attn/", names[m], "/b1"), attns[m]->b1);
      f(strcat("attn/", names[m], "/w2"), attns[m]->w2);
      f(strcat("attn/", names[m], "/b2"), attns[m]->b2);
      f(strcat("score/", names[m], "/feat_w"), heads[m]->feat_w);
      f(strcat("score/", names[m], "/feat_b"), heads[m]->feat_b);
      f(strcat("score/", names[m], "/query_w"), heads[m]->query_w);
      f(strcat("score/", names[m], "/query_b"), heads[m]->query_b);
    }
  }

  ParamTable table() {
    ParamTable t;
    for_each([&](const std::string& name, Tensor& tensor) { t.add(name, &tensor); });
    return t;
  }

  static ModelParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t V = cfg.vocab_size, D = cfg.feature_dim, E = cfg.embed_dim,
                      H = cfg.hidden_dim, A = cfg.attn_hidden, S = cfg.score_dim;
    ModelParams p;
    p.config = cfg;

    auto uniform_init = [&rng](Tensor& t, std::size_t fan_in) {
      const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
      t.fill_uniform(rng, -r, r);
    };

    p.embed = Tensor({V, E});
    uniform_init(p.embed, E);
    p.img_w = Tensor({E, D});
    uniform_init(p.img_w, D);
    p.img_b = Tensor({E});
    p.lstm_wi = Tensor({4 * H, E});
    uniform_init(p.lstm_wi, E);
    p.lstm_wh = Tensor({4 * H, H});
    uniform_init(p.lstm_wh, H);
    p.lstm_b = Tensor({4 * H});
    for (std::size_t i = H; i < 2 * H; ++i) p.lstm_b.data[i] = 1.0;  // forget gate
    p.module_heads = Tensor({kNumModules, H});
    uniform_init(p.module_heads, H);
    p.word_heads = Tensor({kNumModules, H});
    uniform_init(p.word_heads, H);

    auto init_attn = [&](AttnMlpParams& a, std::size_t in_dim) {
      a.w1 = Tensor({in_dim, A});
      uniform_init(a.w1, in_dim);
      a.b1 = Tensor({A});
      a.w2 = Tensor({A});
      uniform_init(a.w2, A);
      a.b2 = Tensor({1});
    };
    init_attn(p.subj_attn, D + E);
    init_attn(p.loc_attn, kLocFeatDim + E);
    init_attn(p.rel_attn, cfg.rel_feat_dim() + E);

    auto init_score = [&](ScoreHeadParams& s, std::size_t feat_dim) {
      s.feat_w = Tensor({S, feat_dim});
      uniform_init(s.feat_w, feat_dim);
      s.feat_b = Tensor({S});
      s.query_w = Tensor({S, E});
      uniform_init(s.query_w, E);
      s.query_b = Tensor({S});
    };
    init_score(p.subj_score, D);
    init_score(p.loc_score, kLocFeatDim);
    init_score(p.rel_score, cfg.rel_feat_dim());
    return p;
  }
};

// ---- checkpoint io ----

inline void save_params(const std::string& path, ModelParams& params) {
  ContainerWriter writer(path);
  params.for_each(
      [&](const std::string& name, Tensor& t) { writer.add(name, t); });
}

inline void load_params(const std::string& path, ModelParams& params) {
  ContainerReader reader(path);
  const auto all = reader.read_all();
  std::size_t idx = 0;
  params.for_each([&](const std::string& name, Tensor& t) {
    check(idx < all.size(), "checkpoint ", path, " missing tensor ", name);
    check(all[idx].name == name, "checkpoint tensor order mismatch: wanted ", name,
          ", found ", all[idx].name);
    check(all[idx].tensor.shape == t.shape || t.numel() == 0,
          "checkpoint tensor ", name, " has unexpected shape");
    t = all[idx].tensor;
    ++idx;
  });
  check(idx == all.size(), "checkpoint has ", all.size() - idx, " extra tensors");
}

}  // namespace egt
