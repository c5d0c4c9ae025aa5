// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The n2n-denoise Authors

#pragma once

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "n2n/cx/tensor.h"
#include "n2n/error.h"

namespace n2n::cx {

// Reverse-mode tape node. A node is created by every tracked op; its
// backward_fn reads node.grad and accumulates into the inputs' grads.
template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(value.data.size(), T(0));
    return grad;
  }
  void accumulate(std::span<const T> g) {
    auto dst = grad_buffer();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }
};

// Handle to a tape node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  // Mutating a value that has already been consumed by an op invalidates
  // that op's gradient; intended for parameter updates between steps.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Creates the output node of an op. Gradient bookkeeping is attached only
// when some input requires it, so inference builds no tape.
template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const auto& in : inputs) n->inputs.push_back(in.defined() ? in.node() : nullptr);
    n->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(n));
}

// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
// loss must be a single-element tensor produced by tracked ops.
template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) throw ConfigError("backward: loss must be a scalar");
  if (!loss.requires_grad()) throw ConfigError("backward: loss is not connected to any tracked tensor");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Intermediate gradients are not needed after the sweep.
  for (Node<T>* n : order) {
    if (n->backward_fn) n->grad.clear();
  }
}

template <typename T>
inline Node<T>* input_needing_grad(Node<T>& n, std::size_t i) {
  Node<T>* in = n.inputs[i].get();
  return (in && in->requires_grad) ? in : nullptr;
}

}  // namespace n2n::cx
