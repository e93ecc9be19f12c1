// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "endomim/numerics/parameters.hpp"

namespace endomim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

template <typename Scalar>
struct AdamWState {
  AdamWConfig config;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  std::int64_t step = 0;

  AdamWState() = default;
  AdamWState(const ParameterSet<Scalar>& params, AdamWConfig cfg) : config(cfg) {
    first_moment = zero_gradients(params);
    second_moment = zero_gradients(params);
  }
};

/// One AdamW update on a single tensor. Decay is decoupled and applied before
/// the adaptive step: p <- p - lr*wd*p, then p <- p - lr*m_hat/(sqrt(v_hat)+eps).
/// `step` is the 1-based step index used for bias correction.
template <typename Scalar>
void adamw_update(Eigen::Ref<Matrix<Scalar>> param, const Matrix<Scalar>& grad, Matrix<Scalar>& m, Matrix<Scalar>& v,
                  std::int64_t step, double lr, double weight_decay, const AdamWConfig& cfg) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols() || m.rows() != param.rows() || m.cols() != param.cols()) {
    throw DimensionError("adamw: gradient/moment shape does not match parameter");
  }
  require(lr >= 0, "adamw: learning rate must be non-negative");
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, static_cast<double>(step)));
  const Scalar c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, static_cast<double>(step)));
  if (weight_decay != 0) param *= Scalar(1) - static_cast<Scalar>(lr * weight_decay);
  const Scalar lr_s = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  param.array() -= lr_s * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

/// Updates every parameter. `lr_for(i)` and `decay_for(i)` give the effective
/// learning rate and weight decay for parameter i.
template <typename Scalar, typename LrFn, typename DecayFn>
void adamw_step(ParameterSet<Scalar>& params, const Gradients<Scalar>& grads, AdamWState<Scalar>& state, LrFn lr_for,
                DecayFn decay_for) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adamw_step: gradient list does not match parameter set");
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params.entry(i).value;
    adamw_update<Scalar>(t.matrix(), grads[i], state.first_moment[i], state.second_moment[i], state.step, lr_for(i),
                         decay_for(i), state.config);
  }
}

/// Uniform learning rate and the configured weight decay on every parameter.
template <typename Scalar>
void adamw_step(ParameterSet<Scalar>& params, const Gradients<Scalar>& grads, AdamWState<Scalar>& state, double lr) {
  const double wd = state.config.weight_decay;
  adamw_step(params, grads, state, [lr](std::size_t) { return lr; }, [wd](std::size_t) { return wd; });
}

}  // namespace endomim
