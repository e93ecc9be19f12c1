// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "endomim/numerics/tape.hpp"

namespace endomim {

/// Ordered collection of named, trainable tensors.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
  };

  Tensor<Scalar>& add(std::string name, Tensor<Scalar> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  Tensor<Scalar>& operator[](const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor<Scalar>& operator[](const std::string& name) const { return entries_[index_of(name)].value; }

  std::size_t size() const { return entries_.size(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

  /// Copies every tensor from `other` (matched by name, shapes must agree).
  void assign_from(const ParameterSet& other) {
    for (auto& e : entries_) {
      const auto& src = other[e.name];
      if (src.shape() != e.value.shape()) {
        throw DimensionError("parameter " + e.name + " shape " + to_string(src.shape()) + " vs " +
                             to_string(e.value.shape()));
      }
      e.value.flat() = src.flat();
    }
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Per-parameter gradients aligned with a ParameterSet.
template <typename Scalar>
using Gradients = std::vector<Matrix<Scalar>>;

template <typename Scalar>
Gradients<Scalar> zero_gradients(const ParameterSet<Scalar>& params) {
  Gradients<Scalar> g;
  g.reserve(params.size());
  for (const auto& e : params) g.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
  return g;
}

/// Parameters placed on a tape as leaf variables for one forward pass.
template <typename Scalar>
class Binding {
 public:
  /// `trainable(name)` decides whether a leaf requests gradients; frozen leaves are constants.
  template <typename Pred>
  Binding(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, Pred trainable) : params_(&params) {
    vars_.reserve(params.size());
    for (const auto& e : params) {
      vars_.push_back(tape.variable(e.value.matrix(), trainable(e.name)));
    }
  }

  Binding(Tape<Scalar>& tape, const ParameterSet<Scalar>& params)
      : Binding(tape, params, [](const std::string&) { return true; }) {}

  Var<Scalar> operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }

  /// Adds this pass's gradients into `acc` scaled by `weight`.
  void accumulate_into(Gradients<Scalar>& acc, Scalar weight = Scalar(1)) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (!vars_[i].requires_grad()) continue;
      acc[i] += weight * vars_[i].tape().grad(vars_[i]);
    }
  }

  Gradients<Scalar> gradients() const {
    Gradients<Scalar> g;
    g.reserve(vars_.size());
    for (const auto& v : vars_) g.push_back(v.tape().grad(v));
    return g;
  }

 private:
  const ParameterSet<Scalar>* params_;
  std::vector<Var<Scalar>> vars_;
};

/// Xavier-uniform init for an in x out weight.
template <typename Scalar>
Tensor<Scalar> xavier_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Scalar> t({fan_in, fan_out});
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
  return t;
}

template <typename Scalar>
Tensor<Scalar> normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
  return t;
}

}  // namespace endomim
