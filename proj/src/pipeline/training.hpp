// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared pieces of the pretraining and finetuning loops.

#include <cmath>
#include <string>
#include <vector>

#include "endomim/data/augment.hpp"
#include "endomim/error.hpp"
#include "endomim/numerics/parameters.hpp"
#include "endomim/optim/adamw.hpp"
#include "endomim/optim/llrd.hpp"
#include "endomim/random.hpp"
#include "endomim/vit/vit.hpp"

namespace endomim::detail {

/// Seeded permutation of [0, n) for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, {0xe90c4, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// Weight decay applies to matrices only: linear weights and convolution taps.
inline bool is_decayed(const std::string& name) {
  auto ends_with = [&](const std::string& s) { return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0; };
  return ends_with(".weight") || ends_with(".tap0") || ends_with(".tap1") || ends_with(".tap2");
}

/// Per-parameter learning-rate multipliers and weight decays, aligned with `params`.
struct UpdateRule {
  std::vector<double> multiplier;
  std::vector<double> decay;
};

inline UpdateRule make_update_rule(const ParameterSet<float>& params, const LLRDPlan* plan, double weight_decay) {
  UpdateRule rule;
  for (const auto& e : params) {
    rule.multiplier.push_back(plan ? plan->multiplier(e.name) : 1.0);
    rule.decay.push_back(is_decayed(e.name) ? weight_decay : 0.0);
  }
  return rule;
}

inline void apply_update(ParameterSet<float>& params, const Gradients<float>& grads, AdamWState<float>& state,
                         const UpdateRule& rule, double lr) {
  adamw_step(params, grads, state, [&](std::size_t i) { return lr * rule.multiplier[i]; },
             [&](std::size_t i) { return rule.decay[i]; });
}

/// Frame brought to the model's input size without randomness.
inline Tensor<float> model_input(const Tensor<float>& frame, Index image_size) {
  if (frame.dim(0) == image_size && frame.dim(1) == image_size) return frame;
  return resize_bilinear(frame, CropWindow{0, 0, frame.dim(0), frame.dim(1)}, image_size, image_size);
}

inline void require_finite(double loss, std::int64_t step, double epoch, double lr) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss " + std::to_string(loss) + " at step " + std::to_string(step) + " (epoch " +
                       std::to_string(epoch) + ", lr " + std::to_string(lr) + ")");
  }
}

}  // namespace endomim::detail
