#pragma once

// Reverse-mode automatic differentiation over Tensors.
//
// A Tape records nodes in creation order, which is already a topological
// order: every node's inputs precede it. backward() walks the nodes once in
// reverse. Parameters are referenced, not copied, so inference tapes can
// share one immutable model across threads.

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phiscrub/error.hpp"
#include "phiscrub/numerics/tensor.hpp"

namespace phiscrub::num {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)), trainable(train) {}

  void zero_grad() {
    if (grad.size() != value.size()) grad = Tensor::zeros_like(value);
    grad.fill(0.0);
  }
};

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // A non-recording tape evaluates values only (inference).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor t) {
    Node n;
    n.own = std::move(t);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // Leaf referencing `p.value`; gradients flow into `p.grad` on backward().
  Var parameter(Parameter& p) {
    Node n;
    n.ext = &p.value;
    if (record_ && p.trainable) {
      n.param = &p;
      n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // Read-only parameter: a leaf that never receives gradients.
  Var parameter(const Parameter& p) { return constant_ref(p.value); }

  // Leaf referencing an external tensor that is never differentiated.
  Var constant_ref(const Tensor& t) {
    Node n;
    n.ext = &t;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // Appends an op result. `fn` is kept only if some input needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    Node n;
    n.own = std::move(value);
    if (record_) {
      for (const Var& v : inputs) {
        if (v.tape != this) throw InvalidArgument("tape: input belongs to a different tape");
        n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
      }
      if (n.needs_grad) n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.ext ? *n.ext : n.own;
  }
  const Tensor& value(Var v) const { return value(v.id); }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id); }

  // Gradient accumulator of a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != value(id).size()) n.grad = Tensor(value(id).shape());
    return n.grad;
  }
  Tensor& grad(Var v) { return grad(v.id); }

  // Runs reverse accumulation from a scalar root. Parameter gradients are
  // added to Parameter::grad. A tape can be differentiated once.
  void backward(Var loss) {
    if (!record_) throw InvalidArgument("backward: tape was created without recording");
    if (backward_done_) throw InvalidArgument("backward: already called on this tape");
    if (loss.tape != this) throw InvalidArgument("backward: root belongs to a different tape");
    if (value(loss).size() != 1) {
      throw ShapeError("backward: root must be scalar, got shape " + shape_string(value(loss).shape()));
    }
    backward_done_ = true;
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Tensor own;
    const Tensor* ext = nullptr;
    Tensor grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };

  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace phiscrub::num
