// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "endomim/vit/vit.hpp"

namespace endomim {

struct GroupMultiplier {
  std::string group;
  int distance = 0;
  double multiplier = 1.0;
};

/// Layer-wise learning-rate decay anchored at the latent boundary: groups next to
/// the latent space get 1.0, each step away multiplies by `decay`.
struct LLRDPlan {
  double decay = 0.65;
  std::vector<GroupMultiplier> groups;
  std::map<std::string, double> by_parameter;

  double multiplier(const std::string& parameter) const {
    auto it = by_parameter.find(parameter);
    if (it == by_parameter.end()) throw ContractError("parameter " + parameter + " is not in any LLRD group");
    return it->second;
  }
};

inline LLRDPlan llrd_multipliers(const std::vector<ParameterGroup>& layers, double decay) {
  require_config(decay > 0.0 && decay <= 1.0, "layer decay must lie in (0, 1], got " + std::to_string(decay));
  LLRDPlan plan;
  plan.decay = decay;
  for (const auto& g : layers) {
    require(g.distance >= 0, "group " + g.name + " has a negative distance");
    const double m = std::pow(decay, g.distance);
    plan.groups.push_back({g.name, g.distance, m});
    for (const auto& p : g.parameters) {
      if (!plan.by_parameter.emplace(p, m).second) throw ContractError("parameter " + p + " appears in two groups");
    }
  }
  return plan;
}

}  // namespace endomim
