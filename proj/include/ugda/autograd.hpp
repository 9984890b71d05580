// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>

#include "ugda/tensor.hpp"

namespace ugda {

/// A trainable tensor plus its gradient accumulator. Gradients accumulate
/// across backward passes until the optimizer clears them.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename Scalar>
class Tape;

/// Lightweight handle to a node on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  Index id = -1;

  bool valid() const { return tape != nullptr; }
  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Reverse-mode tape. Ops push nodes in evaluation order; backward() walks
/// the tape in reverse, accumulating into lazily allocated gradient buffers.
/// Interior values and gradients are released as soon as the walk passes
/// them, so peak memory stays near the live working set.
template <typename Scalar>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Non-differentiable input (targets, weight maps, ...).
  Var<Scalar> constant(Tensor<Scalar> v) { return push(std::move(v), false); }

  /// Differentiable input whose gradient is kept on the tape.
  Var<Scalar> leaf(Tensor<Scalar> v) { return push(std::move(v), grad_enabled_); }

  /// Parameter leaf: the node aliases the parameter's value and accumulates
  /// directly into its grad buffer. `p` must outlive the tape.
  Var<Scalar> param(Parameter<Scalar>& p) {
    Node node;
    node.value = &p.value;
    node.grad = &p.grad;
    node.requires_grad = grad_enabled_;
    node.external = true;
    nodes_.push_back(std::move(node));
    return {this, static_cast<Index>(nodes_.size()) - 1};
  }

  /// Low-level node creation for op implementations.
  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad) {
    Node node;
    node.value_own = std::move(value);
    node.value = &node.value_own;
    node.requires_grad = requires_grad && grad_enabled_;
    nodes_.push_back(std::move(node));
    Node& stored = nodes_.back();
    stored.value = &stored.value_own;  // repoint after move
    return {this, static_cast<Index>(nodes_.size()) - 1};
  }

  void set_backward(Index id, std::function<void()> fn) {
    nodes_[id].backward = std::move(fn);
    nodes_[id].backward_was_set = true;
  }

  static bool any_requires_grad(std::initializer_list<Var<Scalar>> vars) {
    for (const auto& v : vars)
      if (v.valid() && v.requires_grad()) return true;
    return false;
  }

  const Tensor<Scalar>& value(Index id) const { return *nodes_[id].value; }
  bool requires_grad(Index id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer for node `id`, zero-initialized on first touch.
  Tensor<Scalar>& grad(Index id) {
    Node& n = nodes_[id];
    if (n.external) {
      n.grad_touched = true;
      return *n.grad;
    }
    if (!n.grad_touched) {
      n.grad_own = Tensor<Scalar>(n.value->shape());
      n.grad = &n.grad_own;
      n.grad_touched = true;
    }
    return *n.grad;
  }

  bool grad_touched(Index id) const { return nodes_[id].grad_touched; }

  /// Reverse pass from a scalar root. Seeds d(root)=1 and runs each reached
  /// node's backward closure in reverse creation order.
  void backward(Var<Scalar> root) {
    check(root.valid() && root.tape == this, "backward: root not on this tape");
    check(value(root.id).size() == 1, "backward: root must be scalar");
    grad(root.id).fill(Scalar(1));
    for (Index i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad_touched) n.backward();
      n.backward = nullptr;  // drop saved tensors
      if (!n.external && n.backward_was_set) {
        // Interior node: value and grad are dead once its closure has run.
        if (i != root.id) n.value_own.release();
        if (n.grad_touched) n.grad_own.release();
        n.grad_touched = false;
      }
    }
  }

  Index size() const { return static_cast<Index>(nodes_.size()); }

 private:
  struct Node {
    Tensor<Scalar> value_own;
    const Tensor<Scalar>* value = nullptr;
    Tensor<Scalar> grad_own;
    Tensor<Scalar>* grad = nullptr;
    std::function<void()> backward;
    bool requires_grad = false;
    bool external = false;
    bool grad_touched = false;
    bool backward_was_set = false;
  };

  // deque: stable element addresses under push_back.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;

  friend struct Var<Scalar>;
};

}  // namespace ugda
