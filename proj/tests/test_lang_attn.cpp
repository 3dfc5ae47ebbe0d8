#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "egt/finite_diff.hpp"
#include "egt/lang_attn.hpp"
#include "egt/params.hpp"

using namespace egt;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.vocab_size = 9;
  cfg.feature_dim = 4;
  cfg.embed_dim = 5;
  cfg.hidden_dim = 6;
  cfg.attn_hidden = 4;
  cfg.score_dim = 4;
  return cfg;
}

ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return ModelParams::init(cfg, rng);
}

Tensor image_vec(const ModelConfig& cfg, double fill) {
  return Tensor({cfg.feature_dim}, fill);
}

}  // namespace

TEST_CASE("zero parameters give zero hidden states") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = random_params(cfg, 1);
  p.for_each([](const std::string&, Tensor& t) {
    for (double& v : t.data) v = 0.0;
  });
  Graph g;
  ParamBinder bind(g, false);
  const std::vector<std::uint32_t> tokens = {2, 3, 4};
  const auto hidden =
      encode_query(g, bind, p, g.constant(image_vec(cfg, 0.0)), tokens);
  REQUIRE(hidden.size() == tokens.size());
  for (const NodeId h : hidden) {
    for (const double v : g.value(h).data) REQUIRE(v == 0.0);
  }
}

TEST_CASE("token order changes the final hidden state") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = random_params(cfg, 2);
  auto run = [&](std::vector<std::uint32_t> tokens) {
    Graph g;
    ParamBinder bind(g, false);
    const auto hidden =
        encode_query(g, bind, p, g.constant(image_vec(cfg, 0.3)), tokens);
    return g.value(hidden.back()).data;
  };
  REQUIRE(run({2, 3, 4}) != run({4, 3, 2}));
}

TEST_CASE("single-token query still sees the image step") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = random_params(cfg, 3);
  auto run = [&](double image_fill) {
    Graph g;
    ParamBinder bind(g, false);
    const auto hidden =
        encode_query(g, bind, p, g.constant(image_vec(cfg, image_fill)), {{5}});
    REQUIRE(hidden.size() == 1);
    return g.value(hidden[0]).data;
  };
  // h_1 reacts to the image because the encoder consumed it at step 0.
  REQUIRE(run(0.0) != run(1.0));
}

TEST_CASE("empty token sequences are rejected") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = random_params(cfg, 4);
  Graph g;
  ParamBinder bind(g, false);
  REQUIRE_THROWS_AS(
      encode_query(g, bind, p, g.constant(image_vec(cfg, 0.0)), {}),
      std::invalid_argument);
}

TEST_CASE("equal module heads give uniform module weights") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = random_params(cfg, 5);
  for (std::size_t col = 0; col < cfg.hidden_dim; ++col) {
    const double v = p.module_heads.at(0, col);
    p.module_heads.at(1, col) = v;
    p.module_heads.at(2, col) = v;
  }
  Graph g;
  ParamBinder bind(g, false);
  const LangAttnNodes lang = encode_and_attend(
      g, bind, p, g.constant(image_vec(cfg, 0.5)), {{2, 7, 3}});
  for (const double w : g.value(lang.module_w).data)
    REQUIRE(w == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("zero word heads give uniform word attention and mean query") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = random_params(cfg, 6);
  for (double& v : p.word_heads.data) v = 0.0;
  Graph g;
  ParamBinder bind(g, false);
  const std::vector<std::uint32_t> tokens = {2, 7, 3, 8};
  const LangAttnNodes lang =
      encode_and_attend(g, bind, p, g.constant(image_vec(cfg, 0.5)), tokens);
  const double uniform = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t m = 0; m < kNumModules; ++m) {
    for (const double a : g.value(lang.word_w[m]).data)
      REQUIRE(a == Catch::Approx(uniform).margin(1e-12));
    // q^m equals the mean embedding.
    for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
      double mean = 0.0;
      for (const std::uint32_t t : tokens) mean += p.embed.at(t, e);
      mean *= uniform;
      REQUIRE(g.value(lang.query[m]).data[e] == Catch::Approx(mean).margin(1e-12));
    }
  }
}

TEST_CASE("word attention softmax matches scalar arithmetic") {
  // Craft hidden states and a head so the word scores are exactly [1, 2].
  ModelConfig cfg = tiny_config();
  cfg.hidden_dim = 1;
  ModelParams p = random_params(cfg, 7);
  p.word_heads = Tensor({kNumModules, 1}, 1.0);
  Graph g;
  ParamBinder bind(g, false);
  std::vector<NodeId> hidden = {g.constant(Tensor::vector({1.0})),
                                g.constant(Tensor::vector({2.0}))};
  Tensor embed_rows({2, cfg.embed_dim});
  const LangAttnNodes lang =
      attend_language(g, bind, p, hidden, g.constant(embed_rows));
  const double e = std::exp(1.0);
  for (std::size_t m = 0; m < kNumModules; ++m) {
    REQUIRE(g.value(lang.word_w[m]).data[0] ==
            Catch::Approx(1.0 / (1.0 + e)).margin(1e-12));
    REQUIRE(g.value(lang.word_w[m]).data[1] ==
            Catch::Approx(e / (1.0 + e)).margin(1e-12));
  }
}

TEST_CASE("overall significance is the module-weighted word attention") {
  Graph g;
  const NodeId w = g.constant(Tensor::vector({0.5, 0.3, 0.2}));
  // One-hot word attention: subj at t=2, loc at t=5, rel at t=2 (T=6).
  Tensor a_subj({6}), a_loc({6}), a_rel({6});
  a_subj.data[2] = 1.0;
  a_loc.data[5] = 1.0;
  a_rel.data[2] = 1.0;
  const std::vector<NodeId> word_w = {g.constant(a_subj), g.constant(a_loc),
                                      g.constant(a_rel)};
  const NodeId overall = overall_word_significance(g, w, word_w);
  const auto& v = g.value(overall).data;
  REQUIRE(v[2] == Catch::Approx(0.7).margin(1e-15));
  REQUIRE(v[5] == Catch::Approx(0.3).margin(1e-15));
  for (const std::size_t t : {0, 1, 3, 4}) REQUIRE(v[t] == 0.0);
}

TEST_CASE("identical per-module word attention passes through") {
  Graph g;
  const NodeId w = g.constant(Tensor::vector({0.2, 0.5, 0.3}));
  Tensor common = Tensor::vector({0.1, 0.6, 0.3});
  const std::vector<NodeId> word_w = {g.constant(common), g.constant(common),
                                      g.constant(common)};
  const auto& v = g.value(overall_word_significance(g, w, word_w)).data;
  REQUIRE(v[0] == Catch::Approx(0.1).margin(1e-15));
  REQUIRE(v[1] == Catch::Approx(0.6).margin(1e-15));
  REQUIRE(v[2] == Catch::Approx(0.3).margin(1e-15));
}

TEST_CASE("language attention outputs are valid distributions") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = random_params(cfg, 8);
  Rng rng(9);
  for (int iter = 0; iter < 25; ++iter) {
    Graph g;
    ParamBinder bind(g, false);
    std::vector<std::uint32_t> tokens;
    const std::size_t T = 1 + rng.index(8);
    for (std::size_t t = 0; t < T; ++t)
      tokens.push_back(2 + static_cast<std::uint32_t>(rng.index(cfg.vocab_size - 2)));
    Tensor img({cfg.feature_dim});
    img.fill_uniform(rng, -1.0, 1.0);
    const LangAttnNodes lang = encode_and_attend(g, bind, p, g.constant(img), tokens);

    auto sum_of = [&](NodeId id) {
      double s = 0.0;
      for (const double v : g.value(id).data) {
        REQUIRE(v >= 0.0);
        s += v;
      }
      return s;
    };
    REQUIRE(sum_of(lang.module_w) == Catch::Approx(1.0).margin(1e-9));
    for (std::size_t m = 0; m < kNumModules; ++m)
      REQUIRE(sum_of(lang.word_w[m]) == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(sum_of(lang.overall_w) == Catch::Approx(1.0).margin(1e-12));

    // q^m = sum_t alpha_t^m e_t, by recomputation.
    for (std::size_t m = 0; m < kNumModules; ++m) {
      const auto& alpha = g.value(lang.word_w[m]).data;
      for (std::size_t e = 0; e < cfg.embed_dim; ++e) {
        double expect = 0.0;
        for (std::size_t t = 0; t < T; ++t)
          expect += alpha[t] * p.embed.at(tokens[t], e);
        REQUIRE(g.value(lang.query[m]).data[e] ==
                Catch::Approx(expect).margin(1e-12));
      }
    }
  }
}

TEST_CASE("replacing the image feature moves attention") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = random_params(cfg, 10);
  const std::vector<std::uint32_t> tokens = {2, 3, 4, 5};
  auto run = [&](double fill) {
    Graph g;
    ParamBinder bind(g, false);
    const LangAttnNodes lang =
        encode_and_attend(g, bind, p, g.constant(image_vec(cfg, fill)), tokens);
    auto w = g.value(lang.module_w).data;
    auto a = g.value(lang.word_w[0]).data;
    w.insert(w.end(), a.begin(), a.end());
    return w;
  };
  REQUIRE(run(0.25) != run(-0.75));
}

TEST_CASE("self-attention mode ignores the image feature") {
  ModelConfig cfg = tiny_config();
  cfg.cross_modal = false;
  const ModelParams p = random_params(cfg, 11);
  const std::vector<std::uint32_t> tokens = {2, 3, 4};
  auto run = [&](double fill) {
    Graph g;
    ParamBinder bind(g, false);
    const LangAttnNodes lang =
        encode_and_attend(g, bind, p, g.constant(image_vec(cfg, fill)), tokens);
    return g.value(lang.module_w).data;
  };
  REQUIRE(run(0.25) == run(-0.75));
}

TEST_CASE("gradients through language attention pass finite differences") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = random_params(cfg, 12);
  ParamTable table = p.table();
  const std::vector<std::uint32_t> tokens = {2, 7, 3};
  Rng rng(13);
  Tensor img({cfg.feature_dim});
  img.fill_uniform(rng, -1.0, 1.0);
  Tensor probe_q({cfg.embed_dim});
  probe_q.fill_uniform(rng, -1.0, 1.0);
  Tensor probe_w({kNumModules});
  probe_w.fill_uniform(rng, -1.0, 1.0);
  Tensor probe_a({tokens.size()});
  probe_a.fill_uniform(rng, -1.0, 1.0);

  auto eval = [&](bool with_grads) {
    Graph g;
    ParamBinder bind(g, with_grads);
    const LangAttnNodes lang = encode_and_attend(g, bind, p, g.constant(img), tokens);
    NodeId loss = g.dot(lang.module_w, g.constant(probe_w));
    loss = g.add(loss, g.dot(lang.overall_w, g.constant(probe_a)));
    for (std::size_t m = 0; m < kNumModules; ++m)
      loss = g.add(loss, g.dot(lang.query[m], g.constant(probe_q)));
    if (with_grads) {
      g.backward(loss);
      std::vector<double> flat;
      bind.accumulate_grads(table, flat);
      std::size_t idx = 0;
      p.for_each([&](const std::string&, Tensor& t) {
        t.grad.assign(flat.begin() + table.offset(idx),
                      flat.begin() + table.offset(idx) + t.numel());
        ++idx;
      });
    }
    return g.scalar_value(loss);
  };
  // atol 1e-9: coordinates below the central-difference truncation floor
  // count as matching when analytic and numeric agree absolutely.
  const FinDiffReport report = finite_diff_check(eval, table, 1e-5, 1e-9);
  INFO("max rel err " << report.max_rel_err);
  REQUIRE(report.max_rel_err < 1e-6);
}
