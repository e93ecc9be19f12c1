// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "endomim/numerics/functional.hpp"
#include "endomim/numerics/tape.hpp"

// Differentiable primitives over 2-D values recorded on a Tape.
// Every op computes its result eagerly and registers a closure that maps the
// output gradient onto its inputs.

namespace endomim {

namespace detail {

inline std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename Scalar>
void require_same_shape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + dims(a.rows(), a.cols()) + " vs " +
                         dims(b.rows(), b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + detail::dims(a.rows(), a.cols()) + " * " +
                         detail::dims(b.rows(), b.cols()));
  }
  Matrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "mul");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  return a.tape().record(a.value() * s, {a}, [a, s](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g * s);
  });
}

/// Adds a 1 x c row to every row of x.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> x, Var<Scalar> row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError("add_row: row " + detail::dims(row.rows(), row.cols()) + " does not broadcast over " +
                         detail::dims(x.rows(), x.cols()));
  }
  Matrix<Scalar> out = x.value().rowwise() + row.value().row(0);
  return x.tape().record(std::move(out), {x, row}, [x, row](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(x, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

/// x * weight + bias, weight stored as in x out.
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias) {
  return add_row(matmul(x, weight), bias);
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  return a.tape().record(a.value().transpose(), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.transpose());
  });
}

template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar v) { return gelu(v); });
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct(a.value().unaryExpr([](Scalar v) { return gelu_derivative(v); })));
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, (a.value().array() > Scalar(0)).select(g, Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> a) {
  return a.tape().record(a.value().cwiseAbs2(), {a}, [a](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, Scalar(2) * g.cwiseProduct(a.value()));
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(out), {a}, [a, r, c](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, Matrix<Scalar>::Constant(r, c, g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Row-wise softmax, max-subtracted.
template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> a) {
  Matrix<Scalar> y = softmax_rows(a.value());
  return a.tape().record(y, {a}, [a, y](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Vector<Scalar> dot = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(a, y.cwiseProduct(g.colwise() - dot));
  });
}

template <typename Scalar>
Var<Scalar> log_softmax(Var<Scalar> a) {
  Matrix<Scalar> y = log_softmax_rows(a.value());
  Matrix<Scalar> p = y.array().exp();
  return a.tape().record(std::move(y), {a}, [a, p](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const Vector<Scalar> total = g.rowwise().sum();
    t.accumulate(a, g - (p.array().colwise() * total.array()).matrix());
  });
}

/// Row-wise layer normalization with affine gain/bias (each 1 x d).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-6)) {
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(x.cols()));
  }
  auto cache = normalize_rows(x.value(), eps);
  Matrix<Scalar> out = (cache.normalized.array().rowwise() * gain.value().row(0).array()).rowwise() +
                       bias.value().row(0).array();
  return x.tape().record(std::move(out), {x, gain, bias},
                         [x, gain, bias, cache = std::move(cache)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           const auto& xhat = cache.normalized;
                           if (gain.requires_grad()) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                           if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
                           if (!x.requires_grad()) return;
                           const Scalar d = static_cast<Scalar>(xhat.cols());
                           Matrix<Scalar> dxhat = g.array().rowwise() * gain.value().row(0).array();
                           Matrix<Scalar> dx(xhat.rows(), xhat.cols());
                           for (Index r = 0; r < xhat.rows(); ++r) {
                             const Scalar m1 = dxhat.row(r).sum() / d;
                             const Scalar m2 = dxhat.row(r).dot(xhat.row(r)) / d;
                             dx.row(r) = cache.inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                           }
                           t.accumulate(x, dx);
                         });
}

/// Multi-head self-attention core on packed [q | k | v] columns (T x 3D -> T x D).
template <typename Scalar>
Var<Scalar> multi_head_attention(Var<Scalar> qkv, Index num_heads) {
  const Index tokens = qkv.rows();
  if (qkv.cols() % (3 * num_heads) != 0) {
    throw DimensionError("attention: packed width " + std::to_string(qkv.cols()) + " not divisible by 3*" +
                         std::to_string(num_heads));
  }
  const Index dim = qkv.cols() / 3;
  const Index head_dim = dim / num_heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  const auto& x = qkv.value();
  std::vector<Matrix<Scalar>> weights(static_cast<std::size_t>(num_heads));
  Matrix<Scalar> out(tokens, dim);
  for (Index h = 0; h < num_heads; ++h) {
    const auto q = x.middleCols(h * head_dim, head_dim);
    const auto k = x.middleCols(dim + h * head_dim, head_dim);
    const auto v = x.middleCols(2 * dim + h * head_dim, head_dim);
    Matrix<Scalar> scores(tokens, tokens);
    scores.noalias() = (q * k.transpose()) * inv_sqrt;
    auto& p = weights[static_cast<std::size_t>(h)];
    p = softmax_rows(scores);
    out.middleCols(h * head_dim, head_dim).noalias() = p * v;
  }
  return qkv.tape().record(
      std::move(out), {qkv},
      [qkv, num_heads, dim, head_dim, inv_sqrt, weights = std::move(weights)](Tape<Scalar>& t,
                                                                             const Matrix<Scalar>& g) {
        const auto& x = qkv.value();
        Matrix<Scalar> dx(x.rows(), x.cols());
        for (Index h = 0; h < num_heads; ++h) {
          const auto& p = weights[static_cast<std::size_t>(h)];
          const auto q = x.middleCols(h * head_dim, head_dim);
          const auto k = x.middleCols(dim + h * head_dim, head_dim);
          const auto v = x.middleCols(2 * dim + h * head_dim, head_dim);
          const auto go = g.middleCols(h * head_dim, head_dim);
          Matrix<Scalar> dp(p.rows(), p.cols());
          dp.noalias() = go * v.transpose();
          const Vector<Scalar> dot = dp.cwiseProduct(p).rowwise().sum();
          Matrix<Scalar> ds = p.cwiseProduct(dp.colwise() - dot) * inv_sqrt;
          dx.middleCols(h * head_dim, head_dim).noalias() = ds * k;
          dx.middleCols(dim + h * head_dim, head_dim).noalias() = ds.transpose() * q;
          dx.middleCols(2 * dim + h * head_dim, head_dim).noalias() = p.transpose() * go;
        }
        t.accumulate(qkv, dx);
      });
}

/// Selects rows by index; gradient scatters back only into the selected rows.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> x, std::span<const Index> indices) {
  Matrix<Scalar> out(static_cast<Index>(indices.size()), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= x.rows()) throw ContractError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = x.value().row(indices[i]);
  }
  std::vector<Index> idx(indices.begin(), indices.end());
  return x.tape().record(std::move(out), {x}, [x, idx](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(x, dx);
  });
}

/// Builds an n-row matrix holding `rows[i]` at position `positions[i]` and `fill` everywhere else.
template <typename Scalar>
Var<Scalar> scatter_rows(Var<Scalar> rows, Var<Scalar> fill, std::span<const Index> positions, Index n) {
  if (fill.rows() != 1 || fill.cols() != rows.cols() || rows.rows() != static_cast<Index>(positions.size())) {
    throw DimensionError("scatter_rows: operand shapes disagree");
  }
  std::vector<Index> slot(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Index p = positions[i];
    if (p < 0 || p >= n || slot[static_cast<std::size_t>(p)] != -1) {
      throw ContractError("scatter_rows: positions must be distinct and in range");
    }
    slot[static_cast<std::size_t>(p)] = static_cast<Index>(i);
  }
  Matrix<Scalar> out(n, rows.cols());
  for (Index r = 0; r < n; ++r) {
    const Index s = slot[static_cast<std::size_t>(r)];
    out.row(r) = s >= 0 ? rows.value().row(s) : fill.value().row(0);
  }
  return rows.tape().record(std::move(out), {rows, fill}, [rows, fill, slot](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> dr = Matrix<Scalar>::Zero(rows.rows(), rows.cols());
    Matrix<Scalar> df = Matrix<Scalar>::Zero(1, fill.cols());
    for (std::size_t r = 0; r < slot.size(); ++r) {
      if (slot[r] >= 0) {
        dr.row(slot[r]) = g.row(static_cast<Index>(r));
      } else {
        df += g.row(static_cast<Index>(r));
      }
    }
    t.accumulate(rows, dr);
    t.accumulate(fill, df);
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.cols()) throw DimensionError("concat_rows: column counts differ");
  Matrix<Scalar> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  const Index ra = a.rows(), rb = b.rows();
  return a.tape().record(std::move(out), {a, b}, [a, b, ra, rb](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(a, g.topRows(ra));
    t.accumulate(b, g.bottomRows(rb));
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  Matrix<Scalar> out = x.value().middleRows(begin, count);
  return x.tape().record(std::move(out), {x}, [x, begin, count](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(x.rows(), x.cols());
    dx.middleRows(begin, count) = g;
    t.accumulate(x, dx);
  });
}

/// Causal shift along time: out[t] = x[t - offset], zero for t < offset.
template <typename Scalar>
Var<Scalar> shift_rows(Var<Scalar> x, Index offset) {
  if (offset < 0) throw ContractError("shift_rows: offset must be non-negative");
  const Index n = x.rows();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, x.cols());
  if (offset < n) out.bottomRows(n - offset) = x.value().topRows(n - offset);
  return x.tape().record(std::move(out), {x}, [x, offset, n](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(n, x.cols());
    if (offset < n) dx.topRows(n - offset) = g.bottomRows(n - offset);
    t.accumulate(x, dx);
  });
}

/// Mean cross-entropy of row-wise logits against integer class targets.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != logits.rows()) throw DimensionError("cross_entropy: target count mismatch");
  Matrix<Scalar> logp = log_softmax_rows(logits.value());
  const Scalar n = static_cast<Scalar>(targets.size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0 || targets[r] >= logits.cols()) throw ContractError("cross_entropy: target out of range");
    out(0, 0) -= logp(static_cast<Index>(r), targets[r]);
  }
  out(0, 0) /= n;
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape().record(std::move(out), {logits},
                              [logits, logp = std::move(logp), tg, n](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                                Matrix<Scalar> d = logp.array().exp();
                                for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Index>(r), tg[r]) -= 1;
                                t.accumulate(logits, d * (g(0, 0) / n));
                              });
}

}  // namespace endomim

namespace endomim {

/// Runs the reverse sweep for `loss` on its tape. Gradients are then read per
/// variable with Tape::grad (or Binding::gradients for a parameter set).
template <typename Scalar>
void backward(Var<Scalar> loss) {
  loss.tape().backward(loss);
}

}  // namespace endomim
