// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "endomim/numerics/tensor.hpp"

namespace endomim {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, Index id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  Index id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix<Scalar>& value() const { return tape_->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  Index id_ = -1;
};

/// Records a forward pass so it can be replayed backward.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order; backward() walks them once from the loss down to the first node.
/// A tape is not thread-safe. Independent forward passes use separate tapes.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix<Scalar>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix<Scalar> value) { return push(std::move(value), false, {}); }

  Var<Scalar> variable(Matrix<Scalar> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, {});
  }

  /// Records an op result. `backward` runs only if some input needs a gradient.
  Var<Scalar> record(Matrix<Scalar> value, std::initializer_list<Var<Scalar>> inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Matrix<Scalar>& value(Var<Scalar> v) const { return node(v).value; }
  bool requires_grad(Var<Scalar> v) const { return node(v).requires_grad; }

  /// Gradient of the last backward() w.r.t. `v`; zeros when `v` did not influence the loss.
  Matrix<Scalar> grad(Var<Scalar> v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) return Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `g` into the gradient slot of `v`. Used by op backward closures.
  template <typename Derived>
  void accumulate(Var<Scalar> v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse-mode sweep from a scalar loss.
  void backward(Var<Scalar> loss) {
    const Node& l = node(loss);
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      throw ContractError("backward requires a scalar loss, got " + std::to_string(l.value.rows()) + "x" +
                          std::to_string(l.value.cols()));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!l.requires_grad) return;
    node(loss).grad = Matrix<Scalar>::Ones(1, 1);
    for (Index id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<Scalar> push(Matrix<Scalar> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Matrix<Scalar>(), requires_grad, std::move(backward)});
    return Var<Scalar>(this, static_cast<Index>(nodes_.size()) - 1);
  }

  Node& node(Var<Scalar> v) {
    if (v.id() < 0 || v.id() >= static_cast<Index>(nodes_.size()) || &v.tape() != this) {
      throw ContractError("variable does not belong to this tape");
    }
    return nodes_[static_cast<std::size_t>(v.id())];
  }
  const Node& node(Var<Scalar> v) const { return const_cast<Tape*>(this)->node(v); }

  std::vector<Node> nodes_;
};

}  // namespace endomim
