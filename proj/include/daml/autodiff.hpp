#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "daml/tensor.hpp"

namespace daml {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode graph.
///
/// `backward_fn` reads this node's grad and accumulates into the grads of
/// `parents`. Leaves have no backward_fn. Gradient buffers of parameters
/// persist across backward() calls and accumulate; gradients of interior
/// nodes are reset at the start of every backward().
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  bool requires_grad = false;
  // Set when backward() delivered a gradient here, or the grad was written
  // through Var::mutable_grad(), since the last zero_grad().
  bool grad_populated = false;

  Tensor& ensure_grad();
};

/// Value handle onto a graph node. Cheap to copy; copies alias the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var parameter(Tensor value);
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const;
  Tensor& mutable_grad() {
    node_->grad_populated = true;
    return node_->ensure_grad();
  }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool grad_populated() const { return node_->grad_populated; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

  void zero_grad();

 private:
  NodePtr node_;
};

/// Disables graph recording on this thread while alive. Results become
/// constants with no parents; use for evaluation-only forward passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Fault injection for the gradient checker: while alive, grad_reverse
/// passes +eta instead of -eta upstream on this thread.
class ScopedGrlSignFault {
 public:
  ScopedGrlSignFault();
  ~ScopedGrlSignFault();
  ScopedGrlSignFault(const ScopedGrlSignFault&) = delete;
  ScopedGrlSignFault& operator=(const ScopedGrlSignFault&) = delete;

 private:
  bool previous_;
};

// Linear algebra.
Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_bt(const Var& a, const Var& b);  // [m,k] x [n,k]^T
Var linear(const Var& x, const Var& weight, const Var& bias);  // x W^T + b, W is [out,in]

// Elementwise, same shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var maximum(const Var& a, double floor);
Var affine(const Var& a, double scale, double shift);  // scale * a + shift
inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

// Broadcasting.
Var add_row(const Var& a, const Var& row);  // [m,n] + [n] on every row
Var mul_col(const Var& a, const Var& col);  // [m,n] * [m,1] on every column

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);  // argument clamped below at kLogFloor

Var softmax(const Var& a);  // over the last axis
// Softmax over the last axis restricted to entries with mask != 0. Masked
// entries are exactly 0. Every row needs at least one unmasked entry.
Var masked_softmax(const Var& a, const Tensor& mask);

Var sum(const Var& a);   // -> shape {1}
Var mean(const Var& a);  // -> shape {1}

Var concat_cols(std::span<const Var> parts);  // all parts share row count
Var gather_rows(const Var& table, std::span<const std::int64_t> ids);
// Sum_k alpha[:,k] * states[k] for states of shape [m,n] and alpha [m,K].
Var weighted_sum(std::span<const Var> states, const Var& alpha);

/// Identity forward; multiplies the incoming gradient by -eta.
Var grad_reverse(const Var& x, double eta);
/// Copies the value into a fresh constant; no gradient flows back.
Var detach(const Var& x);

/// Accumulates d(root)/d(node) into every reachable requires-grad node.
void backward(const Var& root);

void zero_grads(std::span<Var> params);

inline constexpr double kLogFloor = 1e-12;

}  // namespace daml
