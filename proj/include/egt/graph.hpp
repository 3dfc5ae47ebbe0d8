#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "egt/common.hpp"
#include "egt/tensor.hpp"

namespace egt {

// Define-by-run computation graph over Tensor with reverse-mode
// differentiation. Nodes are appended in topological order; backward walks
// them once in reverse. Graphs are single-owner values; kernels are pure
// given their inputs, so distinct graphs may live on distinct threads.

enum class Kernel : std::uint8_t {
  Input,
  Matmul,
  Add,        // same shape, row broadcast [M,N]+[N], or scalar rhs
  Concat,     // n-ary along an axis
  Slice,      // contiguous range along an axis
  Mul,        // elementwise, same shape or scalar rhs
  Tanh,
  Sigmoid,
  Softmax,    // last axis, max-subtracted
  Sum,        // full reduction to a scalar
  Mean,       // full reduction to a scalar
  Dot,        // rank-1 . rank-1 -> scalar
  ScalarMul,  // constant * tensor
  Hinge,      // max(x, 0) elementwise
  MaskedFill, // x where mask==0, attr value where mask==1
  Reshape,
  Rsqrt,      // elementwise x^(-1/2), x > 0
};

inline const char* kernel_name(Kernel k) {
  switch (k) {
    case Kernel::Input: return "input";
    case Kernel::Matmul: return "matmul";
    case Kernel::Add: return "add";
    case Kernel::Concat: return "concat";
    case Kernel::Slice: return "slice";
    case Kernel::Mul: return "mul";
    case Kernel::Tanh: return "tanh";
    case Kernel::Sigmoid: return "sigmoid";
    case Kernel::Softmax: return "softmax";
    case Kernel::Sum: return "sum";
    case Kernel::Mean: return "mean";
    case Kernel::Dot: return "dot";
    case Kernel::ScalarMul: return "scalar-mul";
    case Kernel::Hinge: return "hinge";
    case Kernel::MaskedFill: return "masked-fill";
    case Kernel::Reshape: return "reshape";
    case Kernel::Rsqrt: return "rsqrt";
  }
  return "?";
}

struct NodeId {
  std::uint32_t idx = 0;
  friend bool operator==(NodeId a, NodeId b) { return a.idx == b.idx; }
};

// Per-op attributes (axis/range for concat/slice, constant for scalar-mul
// and masked-fill, target shape for reshape).
struct OpAttrs {
  std::size_t axis = 0;
  std::size_t start = 0;
  std::size_t len = 0;
  double scalar = 0.0;
  std::vector<std::size_t> shape;
};

class Graph {
 public:
  Graph() { nodes_.reserve(256); }

  std::size_t size() const { return nodes_.size(); }

  NodeId input(Tensor t) {
    Node n;
    n.kind = Kernel::Input;
    n.needs_grad = t.requires_grad;
    n.value = std::move(t);
    return push(std::move(n));
  }

  NodeId constant(Tensor t) {
    t.requires_grad = false;
    return input(std::move(t));
  }

  NodeId scalar(double v) { return constant(Tensor::scalar(v)); }

  // Generic dispatcher; the typed helpers below all route through it.
  NodeId apply(Kernel kind, std::span<const NodeId> inputs, const OpAttrs& attrs = {}) {
    switch (kind) {
      case Kernel::Input:
        fail_invalid("apply: input nodes are created via input()");
      case Kernel::Matmul: return binary(kind, inputs, attrs);
      case Kernel::Add: return binary(kind, inputs, attrs);
      case Kernel::Concat: return nary(kind, inputs, attrs);
      case Kernel::Slice: return unary(kind, inputs, attrs);
      case Kernel::Mul: return binary(kind, inputs, attrs);
      case Kernel::Tanh: return unary(kind, inputs, attrs);
      case Kernel::Sigmoid: return unary(kind, inputs, attrs);
      case Kernel::Softmax: return unary(kind, inputs, attrs);
      case Kernel::Sum: return unary(kind, inputs, attrs);
      case Kernel::Mean: return unary(kind, inputs, attrs);
      case Kernel::Dot: return binary(kind, inputs, attrs);
      case Kernel::ScalarMul: return unary(kind, inputs, attrs);
      case Kernel::Hinge: return unary(kind, inputs, attrs);
      case Kernel::MaskedFill: return binary(kind, inputs, attrs);
      case Kernel::Reshape: return unary(kind, inputs, attrs);
      case Kernel::Rsqrt: return unary(kind, inputs, attrs);
    }
    fail_invalid("apply: unknown kernel id ", static_cast<int>(kind));
  }

  NodeId matmul(NodeId a, NodeId b) { return apply(Kernel::Matmul, ids(a, b)); }
  NodeId add(NodeId a, NodeId b) { return apply(Kernel::Add, ids(a, b)); }
  NodeId sub(NodeId a, NodeId b) { return add(a, scalar_mul(-1.0, b)); }
  NodeId mul(NodeId a, NodeId b) { return apply(Kernel::Mul, ids(a, b)); }
  NodeId tanh(NodeId x) { return apply(Kernel::Tanh, ids(x)); }
  NodeId sigmoid(NodeId x) { return apply(Kernel::Sigmoid, ids(x)); }
  NodeId softmax(NodeId x) { return apply(Kernel::Softmax, ids(x)); }
  NodeId sum(NodeId x) { return apply(Kernel::Sum, ids(x)); }
  NodeId mean(NodeId x) { return apply(Kernel::Mean, ids(x)); }
  NodeId dot(NodeId a, NodeId b) { return apply(Kernel::Dot, ids(a, b)); }
  NodeId hinge(NodeId x) { return apply(Kernel::Hinge, ids(x)); }
  NodeId rsqrt(NodeId x) { return apply(Kernel::Rsqrt, ids(x)); }

  NodeId scalar_mul(double c, NodeId x) {
    OpAttrs a;
    a.scalar = c;
    return apply(Kernel::ScalarMul, ids(x), a);
  }

  NodeId concat(std::size_t axis, std::span<const NodeId> parts) {
    OpAttrs a;
    a.axis = axis;
    return apply(Kernel::Concat, parts, a);
  }

  NodeId concat(std::size_t axis, std::initializer_list<NodeId> parts) {
    std::vector<NodeId> v(parts);
    return concat(axis, std::span<const NodeId>(v));
  }

  NodeId slice(NodeId x, std::size_t axis, std::size_t start, std::size_t len) {
    OpAttrs a;
    a.axis = axis;
    a.start = start;
    a.len = len;
    return apply(Kernel::Slice, ids(x), a);
  }

  NodeId reshape(NodeId x, std::vector<std::size_t> shape) {
    OpAttrs a;
    a.shape = std::move(shape);
    return apply(Kernel::Reshape, ids(x), a);
  }

  NodeId masked_fill(NodeId x, NodeId mask, double value) {
    OpAttrs a;
    a.scalar = value;
    return apply(Kernel::MaskedFill, ids(x, mask), a);
  }

  const Tensor& value(NodeId id) const { return node(id).value; }
  double scalar_value(NodeId id) const {
    const Tensor& t = node(id).value;
    check_arg(t.numel() == 1, "scalar_value: node is not scalar");
    return t.data[0];
  }

  bool needs_grad(NodeId id) const { return node(id).needs_grad; }

  // Gradient of the last backward() root w.r.t. this node. Empty span if the
  // node does not require gradients.
  std::span<const double> grad(NodeId id) const {
    const Node& n = node(id);
    return {n.grad.data(), n.grad.size()};
  }

  // Reverse-mode sweep from a scalar root. Gradients of every needs_grad
  // node are (re)computed; unreachable ones stay zero.
  void backward(NodeId root) {
    Node& r = node(root);
    check_arg(r.value.numel() == 1, "backward: root must be scalar, got shape ",
              shape_str(r.value.shape));
    for (Node& n : nodes_) {
      if (n.needs_grad) {
        n.grad.assign(n.value.numel(), 0.0);
      }
    }
    if (!r.needs_grad) return;
    r.grad[0] = 1.0;
    for (std::size_t i = root.idx + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.kind == Kernel::Input) continue;
      backward_node(n);
    }
  }

 private:
  struct Node {
    Kernel kind = Kernel::Input;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;

  static std::array<NodeId, 1> ids(NodeId a) { return {a}; }
  static std::array<NodeId, 2> ids(NodeId a, NodeId b) { return {a, b}; }

  Node& node(NodeId id) {
    check_arg(id.idx < nodes_.size(), "bad node id");
    return nodes_[id.idx];
  }
  const Node& node(NodeId id) const {
    check_arg(id.idx < nodes_.size(), "bad node id");
    return nodes_[id.idx];
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  NodeId unary(Kernel k, std::span<const NodeId> in, const OpAttrs& attrs) {
    check_arg(in.size() == 1, kernel_name(k), ": expects 1 input, got ", in.size());
    return make(k, in, attrs);
  }
  NodeId binary(Kernel k, std::span<const NodeId> in, const OpAttrs& attrs) {
    check_arg(in.size() == 2, kernel_name(k), ": expects 2 inputs, got ", in.size());
    return make(k, in, attrs);
  }
  NodeId nary(Kernel k, std::span<const NodeId> in, const OpAttrs& attrs) {
    check_arg(!in.empty(), kernel_name(k), ": expects at least 1 input");
    return make(k, in, attrs);
  }

  NodeId make(Kernel k, std::span<const NodeId> in, const OpAttrs& attrs) {
    Node n;
    n.kind = k;
    n.attrs = attrs;
    n.inputs.assign(in.begin(), in.end());
    n.needs_grad = false;
    for (NodeId id : in) {
      check_arg(id.idx < nodes_.size(), kernel_name(k), ": input id out of range");
      n.needs_grad = n.needs_grad || nodes_[id.idx].needs_grad;
    }
    if (k == Kernel::MaskedFill) {
      // The mask selects inputs; it is not differentiable.
      check_arg(!nodes_[in[1].idx].needs_grad,
                "masked-fill: mask must not require gradients");
    }
    n.value = forward_node(n);
    n.value.requires_grad = n.needs_grad;
    return push(std::move(n));
  }

  const Tensor& in_val(const Node& n, std::size_t i) const {
    return nodes_[n.inputs[i].idx].value;
  }
  std::vector<double>& in_grad(Node& n, std::size_t i) {
    return nodes_[n.inputs[i].idx].grad;
  }
  bool in_needs(const Node& n, std::size_t i) const {
    return nodes_[n.inputs[i].idx].needs_grad;
  }

  // ---- forward kernels ----

  Tensor forward_node(const Node& n) {
    switch (n.kind) {
      case Kernel::Matmul: return fwd_matmul(in_val(n, 0), in_val(n, 1));
      case Kernel::Add: return fwd_add(in_val(n, 0), in_val(n, 1));
      case Kernel::Concat: return fwd_concat(n);
      case Kernel::Slice: return fwd_slice(in_val(n, 0), n.attrs);
      case Kernel::Mul: return fwd_mul(in_val(n, 0), in_val(n, 1));
      case Kernel::Tanh: return fwd_map(in_val(n, 0), [](double x) { return std::tanh(x); });
      case Kernel::Sigmoid:
        return fwd_map(in_val(n, 0), [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      case Kernel::Softmax: return fwd_softmax(in_val(n, 0));
      case Kernel::Sum: return fwd_reduce(in_val(n, 0), false);
      case Kernel::Mean: return fwd_reduce(in_val(n, 0), true);
      case Kernel::Dot: return fwd_dot(in_val(n, 0), in_val(n, 1));
      case Kernel::ScalarMul:
        return fwd_map(in_val(n, 0), [c = n.attrs.scalar](double x) { return c * x; });
      case Kernel::Hinge:
        return fwd_map(in_val(n, 0), [](double x) { return x > 0.0 ? x : 0.0; });
      case Kernel::MaskedFill: return fwd_masked_fill(in_val(n, 0), in_val(n, 1), n.attrs.scalar);
      case Kernel::Reshape: return fwd_reshape(in_val(n, 0), n.attrs.shape);
      case Kernel::Rsqrt: return fwd_rsqrt(in_val(n, 0));
      case Kernel::Input: break;
    }
    fail_invalid("forward: unknown kernel");
  }

  static Tensor fwd_matmul(const Tensor& a, const Tensor& b) {
    // [M,K]@[K,N] -> [M,N];  [M,K]@[K] -> [M];  [K]@[K,N] -> [N]
    std::size_t m, k, n;
    std::vector<std::size_t> out_shape;
    if (a.rank() == 2 && b.rank() == 2) {
      m = a.shape[0]; k = a.shape[1]; n = b.shape[1];
      check_arg(b.shape[0] == k, "matmul: inner dims differ, ",
                shape_str(a.shape), " @ ", shape_str(b.shape));
      out_shape = {m, n};
    } else if (a.rank() == 2 && b.rank() == 1) {
      m = a.shape[0]; k = a.shape[1]; n = 1;
      check_arg(b.shape[0] == k, "matmul: inner dims differ, ",
                shape_str(a.shape), " @ ", shape_str(b.shape));
      out_shape = {m};
    } else if (a.rank() == 1 && b.rank() == 2) {
      m = 1; k = a.shape[0]; n = b.shape[1];
      check_arg(b.shape[0] == k, "matmul: inner dims differ, ",
                shape_str(a.shape), " @ ", shape_str(b.shape));
      out_shape = {n};
    } else {
      fail_invalid("matmul: unsupported ranks ", shape_str(a.shape), " @ ",
                   shape_str(b.shape), " (use dot for two vectors)");
    }
    Tensor out(out_shape);
    gemm(a.data.data(), b.data.data(), out.data.data(), m, k, n);
    return out;
  }

  // C[m,n] += A[m,k] * B[k,n], row-major, C pre-zeroed.
  static void gemm(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  // C[m,k] += A[m,n] * B^T[n,k]  (B given row-major [k,n])
  static void gemm_bt(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * n;
      double* crow = c + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
        crow[p] += acc;
      }
    }
  }

  // C[k,n] += A^T[k,m] * B[m,n]  (A given row-major [m,k])
  static void gemm_at(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* brow = b + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        double* crow = c + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  enum class AddMode { Same, Row, Scalar };

  static AddMode add_mode(const Tensor& a, const Tensor& b) {
    if (same_shape(a, b)) return AddMode::Same;
    if (b.numel() == 1) return AddMode::Scalar;
    if (a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1]) return AddMode::Row;
    fail_invalid("add: incompatible shapes ", shape_str(a.shape), " + ",
                 shape_str(b.shape));
  }

  static Tensor fwd_add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out.requires_grad = false;
    out.grad.clear();
    switch (add_mode(a, b)) {
      case AddMode::Same:
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
        break;
      case AddMode::Scalar:
        for (double& x : out.data) x += b.data[0];
        break;
      case AddMode::Row: {
        const std::size_t rows = a.shape[0], cols = a.shape[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] += b.data[c];
        break;
      }
    }
    return out;
  }

  Tensor fwd_concat(const Node& n) const {
    const std::size_t axis = n.attrs.axis;
    const Tensor& first = in_val(n, 0);
    const std::size_t rank = first.rank();
    check_arg(axis < rank, "concat: axis ", axis, " out of range for rank ", rank);
    std::vector<std::size_t> shape = first.shape;
    std::size_t total_axis = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const Tensor& t = in_val(n, i);
      check_arg(t.rank() == rank, "concat: rank mismatch");
      for (std::size_t d = 0; d < rank; ++d) {
        if (d == axis) continue;
        check_arg(t.shape[d] == shape[d], "concat: shape mismatch at dim ", d,
                  ": ", shape_str(t.shape), " vs ", shape_str(shape));
      }
      total_axis += t.shape[axis];
    }
    shape[axis] = total_axis;
    Tensor out(shape);
    // Row-major: iterate outer block, copy each input's contiguous chunk.
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= shape[d];
    std::size_t axis_off = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const Tensor& t = in_val(n, i);
      const std::size_t t_axis = t.shape[axis];
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = t.data.data() + o * t_axis * inner;
        double* dst = out.data.data() + (o * total_axis + axis_off) * inner;
        for (std::size_t q = 0; q < t_axis * inner; ++q) dst[q] = src[q];
      }
      axis_off += t_axis;
    }
    return out;
  }

  static Tensor fwd_slice(const Tensor& x, const OpAttrs& a) {
    check_arg(a.axis < x.rank(), "slice: axis out of range");
    check_arg(a.len > 0 && a.start + a.len <= x.shape[a.axis],
              "slice: range [", a.start, ",", a.start + a.len, ") exceeds dim ",
              x.shape[a.axis]);
    std::vector<std::size_t> shape = x.shape;
    shape[a.axis] = a.len;
    Tensor out(shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < a.axis; ++d) outer *= x.shape[d];
    for (std::size_t d = a.axis + 1; d < x.rank(); ++d) inner *= x.shape[d];
    const std::size_t x_axis = x.shape[a.axis];
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = x.data.data() + (o * x_axis + a.start) * inner;
      double* dst = out.data.data() + o * a.len * inner;
      for (std::size_t q = 0; q < a.len * inner; ++q) dst[q] = src[q];
    }
    return out;
  }

  static Tensor fwd_mul(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out.requires_grad = false;
    out.grad.clear();
    if (same_shape(a, b)) {
      for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.data[i];
    } else if (b.numel() == 1) {
      for (double& x : out.data) x *= b.data[0];
    } else {
      fail_invalid("mul: incompatible shapes ", shape_str(a.shape), " * ",
                   shape_str(b.shape));
    }
    return out;
  }

  template <typename F>
  static Tensor fwd_map(const Tensor& x, F&& f) {
    Tensor out = x;
    out.requires_grad = false;
    out.grad.clear();
    for (double& v : out.data) v = f(v);
    return out;
  }

  static Tensor fwd_softmax(const Tensor& x) {
    check_arg(x.rank() >= 1 && x.rank() <= 2, "softmax: rank must be 1 or 2");
    const std::size_t cols = x.rank() == 2 ? x.shape[1] : x.shape[0];
    const std::size_t rows = x.numel() / cols;
    Tensor out = x;
    out.requires_grad = false;
    out.grad.clear();
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = out.data.data() + r * cols;
      double mx = row[0];
      for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
      double sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        row[c] = std::exp(row[c] - mx);
        sum += row[c];
      }
      for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
#ifndef NDEBUG
      double check_sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        assert(row[c] >= 0.0);
        check_sum += row[c];
      }
      assert(std::abs(check_sum - 1.0) <= 1e-9);
#endif
    }
    return out;
  }

  static Tensor fwd_reduce(const Tensor& x, bool mean) {
    double acc = 0.0;
    for (double v : x.data) acc += v;
    if (mean) acc /= static_cast<double>(x.numel());
    return Tensor::scalar(acc);
  }

  static Tensor fwd_dot(const Tensor& a, const Tensor& b) {
    check_arg(a.rank() == 1 && b.rank() == 1 && a.numel() == b.numel(),
              "dot: expects two equal-length vectors, got ", shape_str(a.shape),
              " . ", shape_str(b.shape));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.data[i] * b.data[i];
    return Tensor::scalar(acc);
  }

  static Tensor fwd_masked_fill(const Tensor& x, const Tensor& mask, double value) {
    check_arg(same_shape(x, mask), "masked-fill: mask shape ", shape_str(mask.shape),
              " differs from input ", shape_str(x.shape));
    Tensor out = x;
    out.requires_grad = false;
    out.grad.clear();
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double m = mask.data[i];
      check_arg(m == 0.0 || m == 1.0, "masked-fill: mask entries must be 0 or 1");
      if (m == 1.0) out.data[i] = value;
    }
    return out;
  }

  static Tensor fwd_reshape(const Tensor& x, const std::vector<std::size_t>& shape) {
    check_arg(!shape.empty(), "reshape: empty target shape");
    check_arg(Tensor::numel_of(shape) == x.numel(), "reshape: numel mismatch, ",
              shape_str(x.shape), " -> ", shape_str(shape));
    Tensor out = x;
    out.requires_grad = false;
    out.grad.clear();
    out.shape = shape;
    return out;
  }

  static Tensor fwd_rsqrt(const Tensor& x) {
    Tensor out = x;
    out.requires_grad = false;
    out.grad.clear();
    for (double& v : out.data) {
      check_arg(v > 0.0, "rsqrt: input must be positive, got ", v);
      v = 1.0 / std::sqrt(v);
    }
    return out;
  }

  // ---- backward kernels ----

  void backward_node(Node& n) {
    const std::vector<double>& gy = n.grad;
    switch (n.kind) {
      case Kernel::Matmul: bwd_matmul(n, gy); return;
      case Kernel::Add: bwd_add(n, gy); return;
      case Kernel::Concat: bwd_concat(n, gy); return;
      case Kernel::Slice: bwd_slice(n, gy); return;
      case Kernel::Mul: bwd_mul(n, gy); return;
      case Kernel::Tanh: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          const double y = n.value.data[i];
          gx[i] += gy[i] * (1.0 - y * y);
        }
        return;
      }
      case Kernel::Sigmoid: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          const double y = n.value.data[i];
          gx[i] += gy[i] * y * (1.0 - y);
        }
        return;
      }
      case Kernel::Softmax: bwd_softmax(n, gy); return;
      case Kernel::Sum: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        for (double& g : gx) g += gy[0];
        return;
      }
      case Kernel::Mean: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        const double s = gy[0] / static_cast<double>(gx.size());
        for (double& g : gx) g += s;
        return;
      }
      case Kernel::Dot: {
        const Tensor& a = in_val(n, 0);
        const Tensor& b = in_val(n, 1);
        if (in_needs(n, 0)) {
          std::vector<double>& ga = in_grad(n, 0);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[0] * b.data[i];
        }
        if (in_needs(n, 1)) {
          std::vector<double>& gb = in_grad(n, 1);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[0] * a.data[i];
        }
        return;
      }
      case Kernel::ScalarMul: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += n.attrs.scalar * gy[i];
        return;
      }
      case Kernel::Hinge: {
        if (!in_needs(n, 0)) return;
        const Tensor& x = in_val(n, 0);
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          if (x.data[i] > 0.0) gx[i] += gy[i];
        }
        return;
      }
      case Kernel::MaskedFill: {
        if (!in_needs(n, 0)) return;
        const Tensor& mask = in_val(n, 1);
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          if (mask.data[i] == 0.0) gx[i] += gy[i];
        }
        return;
      }
      case Kernel::Reshape: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        return;
      }
      case Kernel::Rsqrt: {
        if (!in_needs(n, 0)) return;
        std::vector<double>& gx = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) {
          const double y = n.value.data[i];
          gx[i] += gy[i] * (-0.5 * y * y * y);
        }
        return;
      }
      case Kernel::Input:
        return;
    }
  }

  void bwd_matmul(Node& n, const std::vector<double>& gy) {
    const Tensor& a = in_val(n, 0);
    const Tensor& b = in_val(n, 1);
    std::size_t m, k, nn;
    if (a.rank() == 2 && b.rank() == 2) {
      m = a.shape[0]; k = a.shape[1]; nn = b.shape[1];
    } else if (a.rank() == 2) {
      m = a.shape[0]; k = a.shape[1]; nn = 1;
    } else {
      m = 1; k = a.shape[0]; nn = b.shape[1];
    }
    if (in_needs(n, 0)) gemm_bt(gy.data(), b.data.data(), in_grad(n, 0).data(), m, nn, k);
    if (in_needs(n, 1)) gemm_at(a.data.data(), gy.data(), in_grad(n, 1).data(), m, k, nn);
  }

  void bwd_add(Node& n, const std::vector<double>& gy) {
    const Tensor& a = in_val(n, 0);
    const Tensor& b = in_val(n, 1);
    if (in_needs(n, 0)) {
      std::vector<double>& ga = in_grad(n, 0);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (in_needs(n, 1)) {
      std::vector<double>& gb = in_grad(n, 1);
      switch (add_mode(a, b)) {
        case AddMode::Same:
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
          break;
        case AddMode::Scalar: {
          double acc = 0.0;
          for (double g : gy) acc += g;
          gb[0] += acc;
          break;
        }
        case AddMode::Row: {
          const std::size_t rows = a.shape[0], cols = a.shape[1];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += gy[r * cols + c];
          break;
        }
      }
    }
  }

  void bwd_concat(Node& n, const std::vector<double>& gy) {
    const std::size_t axis = n.attrs.axis;
    const Tensor& out = n.value;
    const std::size_t rank = out.rank();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= out.shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= out.shape[d];
    const std::size_t total_axis = out.shape[axis];
    std::size_t axis_off = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const Tensor& t = in_val(n, i);
      const std::size_t t_axis = t.shape[axis];
      if (in_needs(n, i)) {
        std::vector<double>& gx = in_grad(n, i);
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = gy.data() + (o * total_axis + axis_off) * inner;
          double* dst = gx.data() + o * t_axis * inner;
          for (std::size_t q = 0; q < t_axis * inner; ++q) dst[q] += src[q];
        }
      }
      axis_off += t_axis;
    }
  }

  void bwd_slice(Node& n, const std::vector<double>& gy) {
    if (!in_needs(n, 0)) return;
    const Tensor& x = in_val(n, 0);
    const OpAttrs& a = n.attrs;
    std::vector<double>& gx = in_grad(n, 0);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < a.axis; ++d) outer *= x.shape[d];
    for (std::size_t d = a.axis + 1; d < x.rank(); ++d) inner *= x.shape[d];
    const std::size_t x_axis = x.shape[a.axis];
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = gy.data() + o * a.len * inner;
      double* dst = gx.data() + (o * x_axis + a.start) * inner;
      for (std::size_t q = 0; q < a.len * inner; ++q) dst[q] += src[q];
    }
  }

  void bwd_mul(Node& n, const std::vector<double>& gy) {
    const Tensor& a = in_val(n, 0);
    const Tensor& b = in_val(n, 1);
    if (same_shape(a, b)) {
      if (in_needs(n, 0)) {
        std::vector<double>& ga = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.data[i];
      }
      if (in_needs(n, 1)) {
        std::vector<double>& gb = in_grad(n, 1);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a.data[i];
      }
    } else {  // b is scalar
      if (in_needs(n, 0)) {
        std::vector<double>& ga = in_grad(n, 0);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.data[0];
      }
      if (in_needs(n, 1)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * a.data[i];
        in_grad(n, 1)[0] += acc;
      }
    }
  }

  void bwd_softmax(Node& n, const std::vector<double>& gy) {
    if (!in_needs(n, 0)) return;
    const Tensor& y = n.value;
    const std::size_t cols = y.rank() == 2 ? y.shape[1] : y.shape[0];
    const std::size_t rows = y.numel() / cols;
    std::vector<double>& gx = in_grad(n, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data.data() + r * cols;
      const double* gr = gy.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
      double* gxr = gx.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) gxr[c] += yr[c] * (gr[c] - dot);
    }
  }
};

}  // namespace egt
