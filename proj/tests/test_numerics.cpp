// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "endomim/numerics/ops.hpp"
#include "gradcheck.hpp"

using namespace endomim;
using endomim::testing::gradient_check;

namespace {

Matrix<double> random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix<double> m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor<double>({2, 3}, Vector<double>::Zero(5)), DimensionError);
  EXPECT_THROW(Tensor<double>({2, 0}), DimensionError);
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(t.rows(), 6);
  EXPECT_EQ(t.cols(), 4);
  t.at({1, 2, 3}) = 7;
  EXPECT_EQ(t[23], 7);
}

TEST(Matmul, IdentityAndZero) {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  auto b = tape.constant(random_matrix(3, 2, rng));
  auto id = tape.constant(Matrix<double>::Identity(3, 3));
  EXPECT_EQ(matmul(id, b).value(), b.value());
  auto z = tape.constant(Matrix<double>::Zero(2, 2));
  auto any = tape.constant(random_matrix(2, 2, rng));
  EXPECT_EQ(matmul(z, any).value(), Matrix<double>::Zero(2, 2));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  const Matrix<double> a = random_matrix(4, 5, rng), b = random_matrix(5, 3, rng);
  Matrix<double> expected = Matrix<double>::Zero(4, 3);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index k = 0; k < 5; ++k) expected(i, j) += a(i, k) * b(k, j);
  Tape<double> tape;
  const auto out = matmul(tape.constant(a), tape.constant(b)).value();
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<double> tape;
  auto a = tape.constant(Matrix<double>::Zero(2, 3));
  auto b = tape.constant(Matrix<double>::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3 * 2x3"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformAndStable) {
  Tape<double> tape;
  auto u = softmax(tape.constant(Matrix<double>::Zero(1, 4))).value();
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(u(0, i), 0.25);
  Matrix<double> big(1, 2);
  big << 1000, 0;
  auto s = softmax(tape.constant(big)).value();
  EXPECT_NEAR(s(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-12);
}

TEST(Softmax, MatchesDirectFormula) {
  std::mt19937_64 rng(3);
  const Matrix<double> x = random_matrix(1, 7, rng);
  Tape<double> tape;
  auto s = softmax(tape.constant(x)).value();
  const double denom = x.array().exp().sum();
  for (Index i = 0; i < 7; ++i) EXPECT_NEAR(s(0, i), std::exp(x(0, i)) / denom, 1e-12);
}

TEST(Softmax, SlicesSumToOneUpToLargeMagnitudes) {
  std::mt19937_64 rng(4);
  for (double scale : {1.0, 10.0, 100.0, 1e4}) {
    Tensor<double> x({3, 4, 5}, Vector<double>(Eigen::Map<Vector<double>>(random_matrix(60, 1, rng, scale).data(), 60)));
    for (Index axis = 0; axis < 3; ++axis) {
      auto y = softmax(x, axis);
      for (Index i = 0; i < y.size(); ++i) EXPECT_GT(y[i], -1e-300);
      // Sum along the axis.
      Index outer = 1, inner = 1;
      for (Index a = 0; a < axis; ++a) outer *= x.dim(a);
      for (Index a = axis + 1; a < 3; ++a) inner *= x.dim(a);
      for (Index o = 0; o < outer; ++o)
        for (Index in = 0; in < inner; ++in) {
          double total = 0;
          for (Index k = 0; k < x.dim(axis); ++k) total += y[(o * x.dim(axis) + k) * inner + in];
          EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
  }
}

TEST(LayerNorm, ConstantSliceGivesZeros) {
  Tape<double> tape;
  auto out = layer_norm(tape.constant(Matrix<double>::Constant(2, 6, 3.5)), tape.constant(Matrix<double>::Ones(1, 6)),
                        tape.constant(Matrix<double>::Zero(1, 6)), 1e-6)
                 .value();
  EXPECT_EQ(out, Matrix<double>::Zero(2, 6));
}

TEST(LayerNorm, StandardizedInputIsFixedPoint) {
  std::mt19937_64 rng(5);
  Matrix<double> x = random_matrix(3, 16, rng);
  for (Index r = 0; r < 3; ++r) {
    const double m = x.row(r).mean();
    const double sd = std::sqrt((x.row(r).array() - m).square().mean());
    x.row(r) = (x.row(r).array() - m) / sd;
  }
  Tape<double> tape;
  auto out = layer_norm(tape.constant(x), tape.constant(Matrix<double>::Ones(1, 16)),
                        tape.constant(Matrix<double>::Zero(1, 16)), 1e-12)
                 .value();
  EXPECT_LT((out - x).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(LayerNorm, MomentsOfRandomSlices) {
  std::mt19937_64 rng(6);
  Tape<double> tape;
  auto out = layer_norm(tape.constant(random_matrix(5, 32, rng, 3.0)), tape.constant(Matrix<double>::Ones(1, 32)),
                        tape.constant(Matrix<double>::Zero(1, 32)), 1e-12)
                 .value();
  for (Index r = 0; r < 5; ++r) {
    const double m = out.row(r).mean();
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR((out.row(r).array() - m).square().mean(), 1.0, 1e-6);
  }
}

TEST(Backward, LinearAndQuadratic) {
  std::mt19937_64 rng(7);
  const Matrix<double> w = random_matrix(3, 4, rng);
  {
    Tape<double> tape;
    auto v = tape.variable(w);
    tape.backward(sum(v));
    EXPECT_EQ(tape.grad(v), Matrix<double>::Ones(3, 4));
  }
  {
    Tape<double> tape;
    auto v = tape.variable(w);
    tape.backward(scale(sum(square(v)), 0.5));
    EXPECT_LT((tape.grad(v) - w).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape<double> tape;
  auto v = tape.variable(Matrix<double>::Ones(2, 2));
  EXPECT_THROW(tape.backward(v), ContractError);
}

TEST(Backward, DisconnectedParameterGetsExactZero) {
  Tape<double> tape;
  auto used = tape.variable(Matrix<double>::Ones(2, 2));
  auto unused = tape.variable(Matrix<double>::Constant(3, 1, 2.0));
  tape.backward(sum(square(used)));
  EXPECT_EQ(tape.grad(unused), Matrix<double>::Zero(3, 1));
}

TEST(Backward, EachNodeVisitedOnce) {
  // y = x + x + x through a shared node: gradient must be exactly 3, not more.
  Tape<double> tape;
  auto x = tape.variable(Matrix<double>::Constant(1, 1, 2.0));
  auto y = scale(x, 1.0);
  tape.backward(sum(add(add(y, y), y)));
  EXPECT_EQ(tape.grad(x)(0, 0), 3.0);
}

// Finite-difference property over every primitive, 20 seeds each.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) * 7919 + 11);
  ParameterSet<double> p;
  p.add("a", Tensor<double>::from_matrix(random_matrix(4, 6, rng)));
  p.add("b", Tensor<double>::from_matrix(random_matrix(6, 3, rng)));
  p.add("c", Tensor<double>::from_matrix(random_matrix(4, 6, rng)));
  p.add("row", Tensor<double>::from_matrix(random_matrix(1, 6, rng)));
  p.add("gain", Tensor<double>::from_matrix(random_matrix(1, 6, rng)));
  p.add("qkv", Tensor<double>::from_matrix(random_matrix(5, 12, rng)));
  p.add("fill", Tensor<double>::from_matrix(random_matrix(1, 6, rng)));
  const std::vector<Index> pick = {3, 0, 2};
  const std::vector<Index> place = {1, 4, 6};
  const std::vector<int> classes = {2, 0, 1, 2};

  using Fn = std::function<Var<double>(Tape<double>&, const Binding<double>&)>;
  auto weighted = [&](Tape<double>& t, Var<double> v) {
    Matrix<double> w(v.rows(), v.cols());
    std::mt19937_64 r2(99);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = std::normal_distribution<double>(0, 1)(r2);
    return sum(mul(v, t.constant(w)));
  };
  const std::vector<std::pair<std::string, Fn>> cases = {
      {"matmul", [&](auto& t, const auto& b) { return weighted(t, matmul(b["a"], b["b"])); }},
      {"add_sub_mul", [&](auto& t, const auto& b) { return weighted(t, mul(b["a"] - b["c"], b["a"] + b["c"])); }},
      {"add_row", [&](auto& t, const auto& b) { return weighted(t, add_row(b["a"], b["row"])); }},
      {"transpose", [&](auto& t, const auto& b) { return weighted(t, transpose(b["a"])); }},
      {"gelu", [&](auto& t, const auto& b) { return weighted(t, gelu(b["a"])); }},
      {"relu", [&](auto& t, const auto& b) { return weighted(t, relu(b["a"])); }},
      {"softmax", [&](auto& t, const auto& b) { return weighted(t, softmax(b["a"])); }},
      {"log_softmax", [&](auto& t, const auto& b) { return weighted(t, log_softmax(b["a"])); }},
      {"layer_norm", [&](auto& t, const auto& b) { return weighted(t, layer_norm(b["a"], b["gain"], b["row"], 1e-6)); }},
      {"attention", [&](auto& t, const auto& b) { return weighted(t, multi_head_attention(b["qkv"], 2)); }},
      {"gather", [&](auto& t, const auto& b) { return weighted(t, gather_rows(b["a"], pick)); }},
      {"scatter", [&](auto& t, const auto& b) { return weighted(t, scatter_rows(gather_rows(b["a"], pick), b["fill"], place, 7)); }},
      {"concat_slice", [&](auto& t, const auto& b) { return weighted(t, slice_rows(concat_rows(b["row"], b["a"]), 1, 3)); }},
      {"shift", [&](auto& t, const auto& b) { return weighted(t, shift_rows(b["a"], 2)); }},
      {"square_mean", [&](auto&, const auto& b) { return mean(square(b["a"])); }},
      {"cross_entropy", [&](auto&, const auto& b) { return cross_entropy(matmul(b["a"], b["b"]), classes); }},
  };
  for (const auto& [name, fn] : cases) {
    auto r = gradient_check(p, fn, 1e-4, 1, 1e-6);
    EXPECT_LT(r.max_relative_error, 1e-4) << name << " worst " << r.worst_parameter;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradients, ::testing::Range(0, 20));
