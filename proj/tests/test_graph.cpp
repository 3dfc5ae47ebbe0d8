#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "egt/finite_diff.hpp"
#include "egt/graph.hpp"
#include "egt/rng.hpp"
#include "egt/tensor.hpp"

using namespace egt;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, bool grad = true,
                     double lo = -1.5, double hi = 1.5) {
  Tensor t(std::move(shape));
  t.fill_uniform(rng, lo, hi);
  t.requires_grad = grad;
  return t;
}

}  // namespace

TEST_CASE("matmul identity passes 3x3 through") {
  Rng rng(11);
  Graph g;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  const Tensor a = random_tensor(rng, {3, 3}, false);
  const NodeId out = g.matmul(g.constant(eye), g.input(a));
  REQUIRE(g.value(out).data == a.data);
}

TEST_CASE("softmax of [ln 2, 0, 0] is [0.5, 0.25, 0.25]") {
  Graph g;
  const NodeId out = g.softmax(g.constant(Tensor::vector({std::log(2.0), 0.0, 0.0})));
  const auto& v = g.value(out).data;
  REQUIRE(v[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(v[1] == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(v[2] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("hinge clamps negatives and keeps positives") {
  Graph g;
  const NodeId out = g.hinge(g.constant(Tensor::vector({-0.3, 0.3})));
  REQUIRE(g.value(out).data[0] == 0.0);
  REQUIRE(g.value(out).data[1] == 0.3);
}

TEST_CASE("backward of dot(x,x) is 2x") {
  Graph g;
  Tensor x = Tensor::vector({3.0});
  x.requires_grad = true;
  const NodeId xid = g.input(x);
  g.backward(g.dot(xid, xid));
  REQUIRE(g.grad(xid)[0] == Catch::Approx(6.0).margin(1e-14));
}

TEST_CASE("sum of softmax has zero gradient") {
  Rng rng(5);
  Graph g;
  const NodeId z = g.input(random_tensor(rng, {7}));
  g.backward(g.sum(g.softmax(z)));
  for (double gr : g.grad(z)) REQUIRE(std::abs(gr) < 1e-12);
}

TEST_CASE("softmax rows are valid distributions") {
  Rng rng(17);
  for (int iter = 0; iter < 50; ++iter) {
    Graph g;
    const NodeId z = g.input(random_tensor(rng, {4, 9}, false, -30.0, 30.0));
    const Tensor& y = g.value(g.softmax(z));
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        REQUIRE(y.at(r, c) >= 0.0);
        sum += y.at(r, c);
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("graph replay is bit-identical") {
  auto run = [] {
    Rng rng(99);
    Graph g;
    const NodeId a = g.input(random_tensor(rng, {5, 4}));
    const NodeId b = g.input(random_tensor(rng, {4, 3}));
    const NodeId out = g.sum(g.tanh(g.matmul(a, b)));
    g.backward(out);
    std::vector<double> result(g.grad(a).begin(), g.grad(a).end());
    result.push_back(g.scalar_value(out));
    return result;
  };
  REQUIRE(run() == run());
}

TEST_CASE("shape mismatches are rejected with offending shapes") {
  Graph g;
  const NodeId a = g.constant(Tensor({2, 3}));
  const NodeId b = g.constant(Tensor({2, 3}));
  REQUIRE_THROWS_WITH(g.matmul(a, b), Catch::Matchers::ContainsSubstring("[2,3]"));
  REQUIRE_THROWS_AS(g.dot(a, b), std::invalid_argument);
  const NodeId v = g.constant(Tensor({4}));
  REQUIRE_THROWS_AS(g.add(a, v), std::invalid_argument);
}

TEST_CASE("backward requires a scalar root") {
  Graph g;
  Tensor t({3});
  t.requires_grad = true;
  const NodeId x = g.input(t);
  REQUIRE_THROWS_AS(g.backward(x), std::invalid_argument);
}

TEST_CASE("unreachable parameters get zero gradient") {
  Graph g;
  Tensor used = Tensor::vector({2.0});
  used.requires_grad = true;
  Tensor unused = Tensor::vector({5.0});
  unused.requires_grad = true;
  const NodeId u = g.input(used);
  const NodeId w = g.input(unused);
  g.backward(g.dot(u, u));
  REQUIRE(g.grad(w).size() == 1);
  REQUIRE(g.grad(w)[0] == 0.0);
}

TEST_CASE("finite differences on x^2 at x=3") {
  Tensor x = Tensor::scalar(3.0);
  x.requires_grad = true;
  ParamTable table;
  table.add("x", &x);
  auto eval = [&](bool with_grads) {
    Graph g;
    const NodeId xin = g.input(x);
    const NodeId y = g.mul(xin, xin);
    if (with_grads) {
      g.backward(y);
      const auto gr = g.grad(xin);
      x.grad.assign(gr.begin(), gr.end());
    }
    return g.scalar_value(y);
  };
  const FinDiffReport report = finite_diff_check(eval, table, 1e-5);
  REQUIRE(report.max_rel_err < 1e-8);
  REQUIRE(std::abs(report.per_tensor[0].analytic - 6.0) < 1e-12);
}

TEST_CASE("finite differences on a constant function are zero") {
  Tensor x = Tensor::vector({1.0, 2.0});
  x.requires_grad = true;
  ParamTable table;
  table.add("x", &x);
  auto eval = [&](bool with_grads) {
    if (with_grads) x.zero_grad();
    return 4.25;
  };
  const FinDiffReport report = finite_diff_check(eval, table, 1e-5);
  REQUIRE(report.max_rel_err == 0.0);
}

// Every kernel, checked against central differences on random inputs.
TEST_CASE("per-kernel gradients pass finite differences") {
  Rng rng(2024);

  struct Case {
    const char* name;
    std::vector<std::vector<std::size_t>> in_shapes;
    std::function<NodeId(Graph&, const std::vector<NodeId>&)> build;
  };

  const std::vector<Case> cases = {
      {"matmul [3,4]@[4,2]", {{3, 4}, {4, 2}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.matmul(in[0], in[1]); }},
      {"matmul [3,4]@[4]", {{3, 4}, {4}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.matmul(in[0], in[1]); }},
      {"matmul [3]@[3,2]", {{3}, {3, 2}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.matmul(in[0], in[1]); }},
      {"add same", {{3, 2}, {3, 2}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.add(in[0], in[1]); }},
      {"add row broadcast", {{3, 4}, {4}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.add(in[0], in[1]); }},
      {"add scalar broadcast", {{3, 4}, {1}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.add(in[0], in[1]); }},
      {"concat axis0", {{2, 3}, {1, 3}, {2, 3}},
       [](Graph& g, const std::vector<NodeId>& in) {
         return g.concat(0, {in[0], in[1], in[2]});
       }},
      {"concat axis1", {{2, 3}, {2, 2}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.concat(1, {in[0], in[1]}); }},
      {"slice axis0", {{5, 3}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.slice(in[0], 0, 1, 2); }},
      {"slice axis1", {{2, 6}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.slice(in[0], 1, 2, 3); }},
      {"mul", {{4}, {4}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.mul(in[0], in[1]); }},
      {"mul scalar", {{4}, {1}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.mul(in[0], in[1]); }},
      {"tanh", {{6}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.tanh(in[0]); }},
      {"sigmoid", {{6}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.sigmoid(in[0]); }},
      {"softmax vec", {{5}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.softmax(in[0]); }},
      {"softmax rows", {{3, 4}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.softmax(in[0]); }},
      {"mean", {{7}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.mean(in[0]); }},
      {"dot", {{5}, {5}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.dot(in[0], in[1]); }},
      {"scalar-mul", {{5}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.scalar_mul(-2.5, in[0]); }},
      {"hinge", {{6}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.hinge(in[0]); }},
      {"reshape", {{6}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.reshape(in[0], {2, 3}); }},
      {"rsqrt", {{5}},
       [](Graph& g, const std::vector<NodeId>& in) { return g.rsqrt(in[0]); }},
  };

  for (const Case& c : cases) {
    CAPTURE(c.name);
    std::vector<Tensor> inputs;
    for (const auto& shape : c.in_shapes) {
      // Keep hinge inputs away from the kink and rsqrt inputs positive.
      Tensor t = random_tensor(rng, shape);
      for (double& v : t.data) {
        if (std::string(c.name) == "hinge" && std::abs(v) < 0.05) v = 0.3;
        if (std::string(c.name) == "rsqrt") v = 0.2 + std::abs(v);
      }
      inputs.push_back(std::move(t));
    }
    ParamTable table;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      table.add(strcat("in", i), &inputs[i]);

    // Reduce with a fixed random projection so every output coordinate
    // contributes to the scalar.
    Tensor proj;
    {
      Graph probe;
      std::vector<NodeId> ids;
      for (const Tensor& t : inputs) ids.push_back(probe.input(t));
      const Tensor& out = probe.value(c.build(probe, ids));
      proj = random_tensor(rng, out.shape, false);
    }

    auto eval = [&](bool with_grads) {
      Graph g;
      std::vector<NodeId> ids;
      for (const Tensor& t : inputs) ids.push_back(g.input(t));
      const NodeId out = c.build(g, ids);
      const NodeId flat_out = g.reshape(out, {g.value(out).numel()});
      const NodeId flat_proj =
          g.constant(Tensor::from({proj.numel()}, proj.data));
      const NodeId scalar = g.dot(flat_out, flat_proj);
      if (with_grads) {
        g.backward(scalar);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          const auto gr = g.grad(ids[i]);
          inputs[i].grad.assign(gr.begin(), gr.end());
        }
      }
      return g.scalar_value(scalar);
    };
    const FinDiffReport report = finite_diff_check(eval, table, 1e-5);
    INFO("kernel " << c.name << " max rel err " << report.max_rel_err);
    REQUIRE(report.max_rel_err < 1e-6);
  }
}

TEST_CASE("masked-fill forward and gradient routing") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {2, 3});
  Tensor mask({2, 3});
  mask.data = {0, 1, 0, 1, 0, 0};
  Graph g;
  const NodeId xid = g.input(x);
  const NodeId out = g.masked_fill(xid, g.constant(mask), 0.0);
  const Tensor& y = g.value(out);
  REQUIRE(y.data[1] == 0.0);
  REQUIRE(y.data[3] == 0.0);
  REQUIRE(y.data[0] == x.data[0]);
  g.backward(g.sum(out));
  const auto gx = g.grad(xid);
  REQUIRE(gx[0] == 1.0);
  REQUIRE(gx[1] == 0.0);
  REQUIRE(gx[3] == 0.0);
  REQUIRE(gx[5] == 1.0);

  Tensor grad_mask = mask;
  grad_mask.requires_grad = true;
  REQUIRE_THROWS_AS(g.masked_fill(xid, g.input(grad_mask), 0.0), std::invalid_argument);
}

TEST_CASE("multinomial sampling matches target distribution") {
  Rng rng(123);
  const std::vector<double> probs = {0.7, 0.2, 0.1};
  const std::size_t draws = 100000;
  std::vector<std::size_t> counts(3, 0);
  for (std::size_t i = 0; i < draws; ++i) ++counts[rng.multinomial(probs)];
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = probs[i] * draws;
    const double sigma = std::sqrt(probs[i] * (1 - probs[i]) * draws);
    REQUIRE(std::abs(counts[i] - expected) <= 3.0 * sigma);
  }
}

TEST_CASE("rng stream derivation is deterministic and decorrelated") {
  Rng a = Rng::derive(42, 7);
  Rng b = Rng::derive(42, 7);
  Rng c = Rng::derive(42, 8);
  REQUIRE(a.bits() == b.bits());
  Rng a2 = Rng::derive(42, 7);
  REQUIRE(a2.bits() != c.bits());
}
