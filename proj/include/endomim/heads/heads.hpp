// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "endomim/numerics/ops.hpp"
#include "endomim/numerics/parameters.hpp"
#include "endomim/vit/vit.hpp"

namespace endomim {

// ---------------------------------------------------------------------------
// Linear head on the class token

inline const std::string kHeadName = "head";

template <typename Scalar>
void add_linear_head(ParameterSet<Scalar>& params, Index in, Index classes, std::mt19937_64& rng) {
  add_linear(params, kHeadName, in, classes, rng);
}

/// One affine map of the class token (row 0 of the latent tokens): 1 x C.
template <typename Scalar>
Var<Scalar> linear_head(const Binding<Scalar>& p, Var<Scalar> latent) {
  return apply_linear(p, kHeadName, slice_rows(latent, 0, 1));
}

template <typename Scalar>
RowVector<Scalar> linear_head(const ParameterSet<Scalar>& params, const LatentTokens<Scalar>& latent) {
  const Matrix<Scalar> w = params[kHeadName + ".weight"].matrix();
  const Matrix<Scalar> b = params[kHeadName + ".bias"].matrix();
  return latent.class_token() * w + b;
}

// ---------------------------------------------------------------------------
// Focal loss

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;

  void validate() const {
    require_config(alpha >= 0 && alpha <= 1, "focal loss: alpha must lie in [0, 1]");
    require_config(gamma >= 0, "focal loss: gamma must be >= 0");
  }
};

namespace detail {

inline constexpr double kLogClamp = 1e-12;

struct FocalTerm {
  double loss;
  double dlogit;
};

/// Loss and d(loss)/d(logit) for one (logit, label) entry.
inline FocalTerm focal_term(double z, double y, const FocalConfig& cfg) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  const double q = 1.0 / (1.0 + std::exp(z));  // 1 - p without cancellation
  const double logp = std::log(std::max(p, kLogClamp));
  const double logq = std::log(std::max(q, kLogClamp));
  const double a = cfg.alpha, g = cfg.gamma;
  const double qg = std::pow(q, g), pg = std::pow(p, g);
  const double loss = -(a * y * qg * logp + (1 - a) * (1 - y) * pg * logq);
  // dp/dz = p q folded into each term so no negative powers appear.
  const double dpos = -a * (-g * p * qg * logp + (p > kLogClamp ? qg * q : 0.0));
  const double dneg = -(1 - a) * (g * pg * q * logq - (q > kLogClamp ? pg * p : 0.0));
  return {loss, y * dpos + (1 - y) * dneg};
}

}  // namespace detail

/// Mean over every (row, class) entry of the sigmoid focal loss; labels are 0/1.
template <typename Scalar>
Scalar focal_loss(const Matrix<Scalar>& logits, const Matrix<Scalar>& labels, const FocalConfig& cfg = {}) {
  cfg.validate();
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) throw DimensionError("focal_loss: label shape mismatch");
  double total = 0;
  for (Index i = 0; i < logits.size(); ++i) {
    total += detail::focal_term(static_cast<double>(logits.data()[i]), static_cast<double>(labels.data()[i]), cfg).loss;
  }
  return static_cast<Scalar>(total / static_cast<double>(logits.size()));
}

template <typename Scalar>
Var<Scalar> focal_loss(Var<Scalar> logits, const Matrix<Scalar>& labels, const FocalConfig& cfg = {}) {
  cfg.validate();
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) throw DimensionError("focal_loss: label shape mismatch");
  const double n = static_cast<double>(labels.size());
  Matrix<Scalar> dlogit(labels.rows(), labels.cols());
  double total = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    const auto term = detail::focal_term(static_cast<double>(logits.value().data()[i]), static_cast<double>(labels.data()[i]), cfg);
    total += term.loss;
    dlogit.data()[i] = static_cast<Scalar>(term.dlogit / n);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(total / n);
  return logits.tape().record(std::move(out), {logits}, [logits, dlogit = std::move(dlogit)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(logits, dlogit * g(0, 0));
  });
}

// ---------------------------------------------------------------------------
// Causal multi-stage temporal convolutional network

struct MSTCNConfig {
  Index num_stages = 2;
  Index layers_per_stage = 8;
  Index channels = 64;
  Index num_classes = 4;

  void validate() const {
    require_config(num_stages >= 1 && layers_per_stage >= 1 && channels >= 1 && num_classes >= 1,
                   "MS-TCN: stages, layers, channels and classes must all be >= 1");
  }

  /// Frames visible to one stage, the current frame included.
  Index receptive_field() const { return (Index{1} << (layers_per_stage + 1)) - 1; }
};

inline const std::string kTemporalPrefix = "tcn.";

namespace names {
inline std::string stage(Index s) { return kTemporalPrefix + "stage" + std::to_string(s) + "."; }
inline std::string layer(Index s, Index l) { return stage(s) + "layer" + std::to_string(l) + "."; }
}  // namespace names

template <typename Scalar>
ParameterSet<Scalar> init_mstcn(const MSTCNConfig& cfg, Index feature_dim, std::uint64_t seed) {
  cfg.validate();
  require_config(feature_dim >= 1, "MS-TCN: feature_dim must be >= 1");
  std::mt19937_64 rng(seed);
  ParameterSet<Scalar> params;
  const Index C = cfg.channels;
  for (Index s = 0; s < cfg.num_stages; ++s) {
    add_linear(params, names::stage(s) + "in", s == 0 ? feature_dim : cfg.num_classes, C, rng);
    for (Index l = 0; l < cfg.layers_per_stage; ++l) {
      const std::string L = names::layer(s, l);
      // Taps act on x[t - 2d], x[t - d], x[t].
      for (const char* tap : {"conv.tap0", "conv.tap1", "conv.tap2"}) params.add(L + tap, xavier_uniform<Scalar>(C, C, rng));
      params.add(L + "conv.bias", Tensor<Scalar>({1, C}));
      add_linear(params, L + "mix", C, C, rng);
    }
    add_linear(params, names::stage(s) + "out", C, cfg.num_classes, rng);
  }
  return params;
}

/// Per-stage T x num_classes logits; row t depends on feature rows 0..t only.
template <typename Scalar>
std::vector<Var<Scalar>> mstcn_forward(const Binding<Scalar>& p, const MSTCNConfig& cfg, Var<Scalar> features) {
  cfg.validate();
  require(features.rows() >= 1, "mstcn_forward: need at least one frame");
  std::vector<Var<Scalar>> stages;
  Var<Scalar> input = features;
  for (Index s = 0; s < cfg.num_stages; ++s) {
    if (s > 0) input = softmax(stages.back());
    Var<Scalar> x = apply_linear(p, names::stage(s) + "in", input);
    for (Index l = 0; l < cfg.layers_per_stage; ++l) {
      const std::string L = names::layer(s, l);
      const Index d = Index{1} << l;
      Var<Scalar> h = linear(x, p[L + "conv.tap2"], p[L + "conv.bias"]);
      h = h + matmul(shift_rows(x, d), p[L + "conv.tap1"]);
      h = h + matmul(shift_rows(x, 2 * d), p[L + "conv.tap0"]);
      x = x + apply_linear(p, L + "mix", relu(h));
    }
    stages.push_back(apply_linear(p, names::stage(s) + "out", x));
  }
  return stages;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> mstcn_forward(const ParameterSet<Scalar>& params, const MSTCNConfig& cfg, const Matrix<Scalar>& features) {
  Tape<Scalar> tape;
  const Binding<Scalar> p(tape, params, [](const std::string&) { return false; });
  std::vector<Matrix<Scalar>> out;
  for (auto v : mstcn_forward(p, cfg, tape.constant(features))) out.push_back(v.value());
  return out;
}

/// Sum over stages of the mean per-frame cross-entropy.
template <typename Scalar>
Var<Scalar> mstcn_loss(const std::vector<Var<Scalar>>& stages, std::span<const int> targets) {
  require(!stages.empty(), "mstcn_loss: no stages");
  Var<Scalar> total = cross_entropy(stages.front(), targets);
  for (std::size_t s = 1; s < stages.size(); ++s) total = total + cross_entropy(stages[s], targets);
  return total;
}

}  // namespace endomim
