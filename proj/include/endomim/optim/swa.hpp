// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "endomim/numerics/parameters.hpp"

namespace endomim {

/// Running arithmetic mean of weight snapshots.
template <typename Scalar>
struct SWAState {
  std::optional<ParameterSet<Scalar>> average;
  std::int64_t count = 0;
};

/// avg <- (avg * n + w) / (n + 1). Accumulates in double so the mean stays exact
/// to rounding even for 32-bit weights.
template <typename Scalar>
void swa_update(SWAState<Scalar>& state, const ParameterSet<Scalar>& weights) {
  if (!state.average) {
    state.average = weights;
    state.count = 1;
    return;
  }
  auto& avg = *state.average;
  if (avg.size() != weights.size()) throw DimensionError("swa_update: parameter count changed");
  const double n = static_cast<double>(state.count);
  for (std::size_t i = 0; i < avg.size(); ++i) {
    auto& a = avg.entry(i);
    const auto& w = weights.entry(i);
    if (a.name != w.name || a.value.shape() != w.value.shape()) {
      throw DimensionError("swa_update: parameter " + w.name + " does not match the running average");
    }
    a.value.flat() = ((a.value.flat().template cast<double>() * n + w.value.flat().template cast<double>()) / (n + 1.0))
                         .template cast<Scalar>();
  }
  ++state.count;
}

}  // namespace endomim
