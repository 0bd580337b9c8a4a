// SPDX-License-Identifier: Apache-2.0
#include "gazessl/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace gazessl::nn {

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (!loss) throw std::logic_error("backward: empty variable");
  Node& root = loss.node();
  if (root.value.numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!root.requires_grad || !root.backward) throw std::logic_error("backward: loss has no recorded graph");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.ensure_grad().fill(1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->ensure_grad();
    n->backward(*n);
  }
}

Var detach(const Var& v) { return Var::leaf(v.value(), false); }

}  // namespace gazessl::nn
