// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "endomim/error.hpp"

namespace endomim {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Shape = std::vector<Index>;

inline Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense n-dimensional array stored row-major.
///
/// Rank-2 views (`matrix()`) fold every leading axis into rows and keep the
/// last axis as columns, which is how all model code consumes tensors.
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<Matrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), data_(Vector<Scalar>::Zero(element_count(shape_))), requires_grad_(requires_grad) {
    validate_shape();
  }

  Tensor(Shape shape, Vector<Scalar> data, bool requires_grad = false)
      : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
    validate_shape();
    if (element_count(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           to_string(shape_));
    }
  }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m, bool requires_grad = false) {
    Tensor t({m.rows(), m.cols()}, requires_grad);
    t.matrix() = m.template cast<Scalar>();
    return t;
  }

  static Tensor filled(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool value) { requires_grad_ = value; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Vector<Scalar>& flat() { return data_; }
  const Vector<Scalar>& flat() const { return data_; }

  Index rows() const {
    if (shape_.empty()) return 1;
    return shape_.size() == 1 ? 1 : data_.size() / shape_.back();
  }
  Index cols() const { return shape_.empty() ? 1 : shape_.back(); }

  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  /// Row-major element access for arbitrary rank.
  Scalar& at(std::initializer_list<Index> index) { return data_[offset(index)]; }
  Scalar at(std::initializer_list<Index> index) const { return data_[offset(index)]; }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_, requires_grad_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>(), requires_grad_);
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape_));
    }
  }

  Index offset(std::initializer_list<Index> index) const {
    if (index.size() != shape_.size()) throw DimensionError("index rank does not match tensor rank");
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : index) {
      if (i < 0 || i >= shape_[axis]) throw DimensionError("index out of range for shape " + to_string(shape_));
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  Vector<Scalar> data_;
  bool requires_grad_ = false;
};

}  // namespace endomim
