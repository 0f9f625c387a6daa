// Copyright 2026 The mRadNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mradnet/tensor.hpp"

namespace mradnet {

// Minimal reverse-mode differentiation. A graph is recorded only while at
// least one input of an operation requires a gradient; a forward pass over a
// frozen parameter store therefore keeps no intermediates alive.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_slot() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty() || value.empty(); }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <class T>
Var<T> variable(Tensor<T> value) {
  auto n = constant(std::move(value));
  n->requires_grad = true;
  return n;
}

/// Wraps an operation result. The backward closure receives the result node;
/// it reads `grad` and accumulates into inputs that require gradients.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in && in->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

template <class T>
bool wants_grad(const Var<T>& v) {
  return v && v->requires_grad;
}

/// Runs reverse accumulation from a scalar root. Gradients accumulate into
/// every reachable node; interior graph edges are released afterwards.
template <class T>
void backward(const Var<T>& root) {
  if (root->value.numel() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_slot().fill(T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node<T>* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->inputs.clear();
    }
  }
}

}  // namespace mradnet
