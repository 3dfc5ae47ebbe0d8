#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "egt/common.hpp"
#include "egt/tensor.hpp"

namespace egt {

// A named view over a set of parameter tensors, flattened into one coordinate
// space. Shared by the optimizer, checkpointing and the finite-difference
// verifier so they all agree on ordering.
class ParamTable {
 public:
  void add(std::string name, Tensor* t) {
    check_arg(t != nullptr, "ParamTable: null tensor");
    entries_.push_back({std::move(name), t, total_});
    total_ += t->numel();
  }

  std::size_t size() const { return total_; }
  std::size_t count() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& tensor(std::size_t i) const { return *entries_[i].tensor; }
  std::size_t offset(std::size_t i) const { return entries_[i].offset; }

  double get(std::size_t coord) const {
    const Entry& e = locate(coord);
    return e.tensor->data[coord - e.offset];
  }
  void set(std::size_t coord, double v) const {
    const Entry& e = locate(coord);
    e.tensor->data[coord - e.offset] = v;
  }

  void gather(std::vector<double>& out) const {
    out.resize(total_);
    for (const Entry& e : entries_) {
      for (std::size_t i = 0; i < e.tensor->numel(); ++i)
        out[e.offset + i] = e.tensor->data[i];
    }
  }
  void scatter(const std::vector<double>& in) const {
    check_arg(in.size() == total_, "ParamTable::scatter: size mismatch");
    for (const Entry& e : entries_) {
      for (std::size_t i = 0; i < e.tensor->numel(); ++i)
        e.tensor->data[i] = in[e.offset + i];
    }
  }

  void gather_grad(std::vector<double>& out) const {
    out.assign(total_, 0.0);
    for (const Entry& e : entries_) {
      if (e.tensor->grad.empty()) continue;
      for (std::size_t i = 0; i < e.tensor->numel(); ++i)
        out[e.offset + i] = e.tensor->grad[i];
    }
  }

  // Tensor index and local offset for a flat coordinate.
  std::pair<std::size_t, std::size_t> locate_index(std::size_t coord) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const Entry& e = entries_[i];
      if (coord < e.offset + e.tensor->numel())
        return {i, coord - e.offset};
    }
    fail("ParamTable: coordinate out of range");
  }

 private:
  struct Entry {
    std::string name;
    Tensor* tensor;
    std::size_t offset;
  };

  const Entry& locate(std::size_t coord) const {
    check_arg(coord < total_, "ParamTable: coordinate out of range");
    // Linear scan is fine: tables have tens of entries.
    for (const Entry& e : entries_) {
      if (coord < e.offset + e.tensor->numel()) return e;
    }
    fail("ParamTable: unreachable");
  }

  std::vector<Entry> entries_;
  std::size_t total_ = 0;
};

struct FinDiffEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_coord = 0;   // local coordinate within the tensor
  double analytic = 0.0;
  double numeric = 0.0;
  bool non_finite = false;       // flagged when fn returned NaN/Inf at a probe
};

struct FinDiffReport {
  std::vector<FinDiffEntry> per_tensor;
  double max_rel_err = 0.0;
  bool any_non_finite = false;
};

// Central-difference check of analytic gradients. `eval` must be
// deterministic: eval(true) computes the scalar AND fills every table
// tensor's grad; eval(false) computes the scalar only. Relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator.
//
// `atol`: absolute agreement below which a coordinate counts as matching
// regardless of relative error. Central differences at step eps carry
// truncation error ~|f'''| eps^2/6, so coordinates whose true gradient sits
// below that floor cannot be measured relatively; 0 keeps the strict
// behavior.
inline FinDiffReport finite_diff_check(const std::function<double(bool)>& eval,
                                       const ParamTable& params, double eps,
                                       double atol = 0.0) {
  check_arg(eps > 0.0, "finite_diff_check: eps must be positive");
  FinDiffReport report;
  (void)eval(true);
  std::vector<double> analytic;
  params.gather_grad(analytic);

  report.per_tensor.resize(params.count());
  for (std::size_t i = 0; i < params.count(); ++i)
    report.per_tensor[i].name = params.name(i);

  for (std::size_t coord = 0; coord < params.size(); ++coord) {
    const double saved = params.get(coord);
    params.set(coord, saved + eps);
    const double up = eval(false);
    params.set(coord, saved - eps);
    const double down = eval(false);
    params.set(coord, saved);

    const auto [tensor_idx, local] = params.locate_index(coord);
    FinDiffEntry& entry = report.per_tensor[tensor_idx];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      entry.non_finite = true;
      report.any_non_finite = true;
      continue;
    }
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[coord];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err <= atol ? 0.0 : abs_err / denom;
    if (rel > entry.max_rel_err) {
      entry.max_rel_err = rel;
      entry.worst_coord = local;
      entry.analytic = a;
      entry.numeric = numeric;
    }
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  return report;
}

}  // namespace egt
