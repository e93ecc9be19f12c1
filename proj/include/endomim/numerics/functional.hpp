// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "endomim/numerics/tensor.hpp"

namespace endomim {

// Value-only kernels shared by the differentiable ops and by inference code.

template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    Scalar total = 0;
    for (Index c = 0; c < x.cols(); ++c) {
      y(r, c) = std::exp(x(r, c) - m);
      total += y(r, c);
    }
    y.row(r) /= total;
  }
  return y;
}

template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    Scalar total = 0;
    for (Index c = 0; c < x.cols(); ++c) total += std::exp(x(r, c) - m);
    const Scalar lse = m + std::log(total);
    y.row(r) = x.row(r).array() - lse;
  }
  return y;
}

/// Softmax along any axis of an n-d tensor.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw DimensionError("softmax axis out of range for shape " + to_string(x.shape()));
  Index outer = 1, inner = 1;
  for (Index a = 0; a < axis; ++a) outer *= x.dim(a);
  for (Index a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const Index n = x.dim(axis);
  Tensor<Scalar> y(x.shape());
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * n * inner + i;
      Scalar m = x[base];
      for (Index k = 1; k < n; ++k) m = std::max(m, x[base + k * inner]);
      Scalar total = 0;
      for (Index k = 0; k < n; ++k) {
        y[base + k * inner] = std::exp(x[base + k * inner] - m);
        total += y[base + k * inner];
      }
      for (Index k = 0; k < n; ++k) y[base + k * inner] /= total;
    }
  }
  return y;
}

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;
  Vector<Scalar> inv_std;
};

template <typename Derived>
LayerNormCache<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x,
                                                        typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  LayerNormCache<Scalar> cache{Matrix<Scalar>(x.rows(), x.cols()), Vector<Scalar>(x.rows())};
  const Scalar d = static_cast<Scalar>(x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / d;
    const Scalar var = (x.row(r).array() - mean).square().sum() / d;
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
    cache.inv_std[r] = inv;
  }
  return cache;
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * Scalar(M_PI));
  return cdf + x * pdf;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace endomim
