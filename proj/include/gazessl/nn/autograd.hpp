// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gazessl/nn/tensor.hpp"

namespace gazessl::nn {

/// Graph node. `backward` reads `grad` and accumulates into the parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros_like(value);
    return grad;
  }
};

/// Handle to a value in the recorded computation.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Leaf variable: a parameter (requires_grad) or a constant input.
  static Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient accumulated by backward(); zeros if none reached this node.
  const Tensor& grad() const { return node_->ensure_grad(); }
  Tensor& grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad = Tensor(); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Records an op result. The backward closure is kept only if some parent
/// requires a gradient.
Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward);

/// Reverse-mode sweep from a scalar. Throws std::logic_error if `loss` was not
/// produced by a recorded computation.
void backward(const Var& loss);

/// Same value, cut from the graph.
Var detach(const Var& v);

}  // namespace gazessl::nn
