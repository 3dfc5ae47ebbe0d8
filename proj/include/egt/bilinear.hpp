#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "egt/common.hpp"
#include "egt/graph.hpp"
#include "egt/rng.hpp"
#include "egt/tensor.hpp"

namespace egt {

// Attention-weighted bilinear similarity between two feature families:
//   s = (sum_i alpha_i f_i)^T (sum_j beta_j g_j)
// with closed-form gradients. This is the analytic reference the autodiff
// engine is validated against, and the basis of the gradient amplification
// identity |ds/df_i| = alpha_i * |g_tilde|.
struct BilinearInstance {
  std::vector<std::vector<double>> f;  // m visual features, each d-dim
  std::vector<double> alpha;           // m weights, valid distribution
  std::vector<std::vector<double>> g;  // n textual features, each d-dim
  std::vector<double> beta;            // n weights, valid distribution

  std::size_t m() const { return f.size(); }
  std::size_t n() const { return g.size(); }
  std::size_t dim() const { return f.empty() ? 0 : f[0].size(); }

  void validate() const {
    check_arg(!f.empty() && !g.empty(), "BilinearInstance: empty feature family");
    check_arg(alpha.size() == f.size() && beta.size() == g.size(),
              "BilinearInstance: weight/feature count mismatch");
    const std::size_t d = f[0].size();
    for (const auto& v : f) check_arg(v.size() == d, "BilinearInstance: f dim mismatch");
    for (const auto& v : g) check_arg(v.size() == d, "BilinearInstance: g dim mismatch");
    auto check_dist = [](const std::vector<double>& w, const char* label) {
      double sum = 0.0;
      for (double x : w) {
        check_arg(x >= 0.0 && std::isfinite(x), label, ": weights must be nonnegative");
        sum += x;
      }
      check_arg(std::abs(sum - 1.0) <= 1e-9, label, ": weights must sum to 1, got ", sum);
    };
    check_dist(alpha, "alpha");
    check_dist(beta, "beta");
  }
};

inline std::vector<double> weighted_sum(const std::vector<std::vector<double>>& vs,
                                        const std::vector<double>& w) {
  std::vector<double> out(vs[0].size(), 0.0);
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] * vs[i][k];
  return out;
}

inline double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double vec_norm(const std::vector<double>& a) { return std::sqrt(vec_dot(a, a)); }

// Aggregated-dot route: s = f_tilde . g_tilde.
inline double bilinear_similarity(const BilinearInstance& inst) {
  inst.validate();
  return vec_dot(weighted_sum(inst.f, inst.alpha), weighted_sum(inst.g, inst.beta));
}

// Double-sum route: s = sum_i sum_j alpha_i beta_j f_i . g_j. Kept separate
// so the two algebraic forms can be checked against each other.
inline double bilinear_similarity_double_sum(const BilinearInstance& inst) {
  inst.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < inst.m(); ++i)
    for (std::size_t j = 0; j < inst.n(); ++j)
      s += inst.alpha[i] * inst.beta[j] * vec_dot(inst.f[i], inst.g[j]);
  return s;
}

struct BilinearGrads {
  std::vector<double> d_alpha;               // m
  std::vector<std::vector<double>> d_f;      // m x d
  std::vector<double> d_beta;                // n
  std::vector<std::vector<double>> d_g;      // n x d
};

//   ds/dalpha_i = f_i . g_tilde
//   ds/df_i     = alpha_i * g_tilde
//   ds/dbeta_j  = f_tilde . g_j
//   ds/dg_j     = beta_j * f_tilde
inline BilinearGrads closed_form_grads(const BilinearInstance& inst) {
  inst.validate();
  const std::vector<double> f_tilde = weighted_sum(inst.f, inst.alpha);
  const std::vector<double> g_tilde = weighted_sum(inst.g, inst.beta);
  BilinearGrads out;
  out.d_alpha.resize(inst.m());
  out.d_f.resize(inst.m());
  for (std::size_t i = 0; i < inst.m(); ++i) {
    out.d_alpha[i] = vec_dot(inst.f[i], g_tilde);
    out.d_f[i].resize(inst.dim());
    for (std::size_t k = 0; k < inst.dim(); ++k)
      out.d_f[i][k] = inst.alpha[i] * g_tilde[k];
  }
  out.d_beta.resize(inst.n());
  out.d_g.resize(inst.n());
  for (std::size_t j = 0; j < inst.n(); ++j) {
    out.d_beta[j] = vec_dot(f_tilde, inst.g[j]);
    out.d_g[j].resize(inst.dim());
    for (std::size_t k = 0; k < inst.dim(); ++k)
      out.d_g[j][k] = inst.beta[j] * f_tilde[k];
  }
  return out;
}

// Same similarity built on the autodiff graph, with every alpha/f/beta/g a
// leaf. Returns the gradients the engine computed.
inline BilinearGrads autodiff_grads(const BilinearInstance& inst, double* score_out = nullptr) {
  inst.validate();
  Graph g;
  auto leaf_vec = [&](const std::vector<double>& v) {
    Tensor t({v.size()});
    t.data = v;
    t.requires_grad = true;
    return g.input(std::move(t));
  };
  const NodeId alpha = leaf_vec(inst.alpha);
  const NodeId beta = leaf_vec(inst.beta);
  std::vector<NodeId> f_ids, g_ids;
  std::vector<NodeId> f_rows, g_rows;
  for (const auto& v : inst.f) {
    const NodeId id = leaf_vec(v);
    f_ids.push_back(id);
    f_rows.push_back(g.reshape(id, {1, v.size()}));
  }
  for (const auto& v : inst.g) {
    const NodeId id = leaf_vec(v);
    g_ids.push_back(id);
    g_rows.push_back(g.reshape(id, {1, v.size()}));
  }
  const NodeId f_mat = g.concat(0, std::span<const NodeId>(f_rows));  // [m,d]
  const NodeId g_mat = g.concat(0, std::span<const NodeId>(g_rows));  // [n,d]
  const NodeId f_tilde = g.matmul(alpha, f_mat);                      // [d]
  const NodeId g_tilde = g.matmul(beta, g_mat);                       // [d]
  const NodeId s = g.dot(f_tilde, g_tilde);
  if (score_out != nullptr) *score_out = g.scalar_value(s);
  g.backward(s);

  BilinearGrads out;
  auto copy_grad = [&](NodeId id) {
    const auto span = g.grad(id);
    return std::vector<double>(span.begin(), span.end());
  };
  out.d_alpha = copy_grad(alpha);
  out.d_beta = copy_grad(beta);
  for (const NodeId id : f_ids) out.d_f.push_back(copy_grad(id));
  for (const NodeId id : g_ids) out.d_g.push_back(copy_grad(id));
  return out;
}

struct AmplificationRow {
  std::size_t index;
  double weight;      // alpha_i or beta_j
  double grad_norm;   // |ds/df_i| or |ds/dg_j|
};

struct AmplificationReport {
  std::vector<AmplificationRow> visual;   // (i, alpha_i, |ds/df_i|)
  std::vector<AmplificationRow> textual;  // (j, beta_j, |ds/dg_j|)
  std::size_t violations = 0;
  double max_identity_err = 0.0;
};

// Verifies |ds/df_i| = alpha_i * |g_tilde| exactly (and the beta side), so
// larger attention weights get strictly larger gradient norms. Flags both
// identity deviations beyond tol and monotonicity violations.
inline AmplificationReport amplification_report(const BilinearInstance& inst,
                                                double tol = 1e-12) {
  inst.validate();
  const BilinearGrads grads = closed_form_grads(inst);
  const double f_norm = vec_norm(weighted_sum(inst.f, inst.alpha));
  const double g_norm = vec_norm(weighted_sum(inst.g, inst.beta));

  AmplificationReport report;
  auto fill_side = [&](const std::vector<double>& w,
                       const std::vector<std::vector<double>>& dv, double agg_norm,
                       std::vector<AmplificationRow>& rows) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gn = vec_norm(dv[i]);
      rows.push_back({i, w[i], gn});
      const double err = std::abs(gn - w[i] * agg_norm);
      report.max_identity_err = std::max(report.max_identity_err, err);
      if (err > tol * std::max(1.0, w[i] * agg_norm)) ++report.violations;
    }
    if (agg_norm > 0.0) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
          if (rows[i].weight > rows[j].weight && !(rows[i].grad_norm > rows[j].grad_norm))
            ++report.violations;
        }
      }
    }
  };
  fill_side(inst.alpha, grads.d_f, g_norm, report.visual);
  fill_side(inst.beta, grads.d_g, f_norm, report.textual);
  return report;
}

inline std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (double& x : w) {
    x = -std::log(1.0 - rng.uniform());  // Exp(1) -> Dirichlet(1,..,1) after normalizing
    sum += x;
  }
  for (double& x : w) x /= sum;
  return w;
}

inline BilinearInstance random_bilinear_instance(Rng& rng, std::size_t max_features = 6,
                                                 std::size_t max_dim = 8) {
  BilinearInstance inst;
  const std::size_t m = 1 + rng.index(max_features);
  const std::size_t n = 1 + rng.index(max_features);
  const std::size_t d = 1 + rng.index(max_dim);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    inst.f.push_back(std::move(v));
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.uniform(-2.0, 2.0);
    inst.g.push_back(std::move(v));
  }
  inst.alpha = random_distribution(rng, m);
  inst.beta = random_distribution(rng, n);
  return inst;
}

}  // namespace egt
