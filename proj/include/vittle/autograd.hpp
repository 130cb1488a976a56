// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vittle/tensor.hpp"

namespace vittle {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand; same shape as value
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  const char* op = "leaf";

  Tensor& grad_buffer();
};

/// Handle to a node in the reverse-mode graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool valid() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// Parameters only: in-place updates by the optimizer.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const;
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->parents.empty(); }
  void zero_grad();

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Populates gradients of every leaf parameter reachable from `root`.
/// Leaf gradients accumulate across calls; intermediate gradients are reset.
void backward(const Var& root);

/// While alive, operations on this thread record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled() noexcept;

// Elementwise and algebraic ops. Shapes must match exactly unless stated.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a: [m, n]; row: [n], broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var sub_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);
/// s * a + c
Var affine(const Var& a, double s, double c = 0.0);
inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
Var neg(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
/// Clamp into [lo, hi]; gradient is zero where clamping is active.
Var clamp(const Var& a, double lo, double hi);
/// Exact GELU, x * Phi(x).
Var gelu(const Var& a);

Var matmul(const Var& a, const Var& b);

/// Row-wise layer normalization over the last axis of a [m, n] input.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Softmax along `axis` (max-subtracted).
Var softmax(const Var& x, std::size_t axis);
/// Mean over rows of -log softmax(logits)[target]; logits [n, V].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of a [m, n] table picked by index; repeated indices accumulate.
Var gather_rows(const Var& table, std::span<const std::size_t> indices);

Var sum(const Var& x);
Var mean(const Var& x);

/// Multi-head causal self-attention core. q, k, v are [batch*seq, heads*head_dim]
/// row blocks of `seq` consecutive rows per sample; returns softmax(qk^T/sqrt(dh)) v
/// with future positions masked, in the same layout.
Var causal_attention(const Var& q, const Var& k, const Var& v, std::size_t batch,
                     std::size_t seq, std::size_t heads);

}  // namespace vittle
