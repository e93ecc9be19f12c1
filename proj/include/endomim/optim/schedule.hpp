// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "endomim/error.hpp"

namespace endomim {

/// Linear warmup, then a cosine laid over (total - warmup) epochs that is cut
/// off at `cosine_end_epoch`; the rate then stays at its value there.
struct ScheduleConfig {
  double peak_lr = 1.5e-3;
  double warmup_epochs = 3;
  double cosine_end_epoch = 10;
  double total_epochs = 15;
  double min_lr = 0;

  void validate() const {
    require_config(warmup_epochs >= 0 && warmup_epochs < cosine_end_epoch && cosine_end_epoch <= total_epochs,
                   "schedule requires 0 <= warmup < cosine_end <= total");
    require_config(peak_lr > min_lr && min_lr >= 0, "schedule requires peak_lr > min_lr >= 0");
  }
};

inline double lr_at(double epoch, const ScheduleConfig& cfg) {
  cfg.validate();
  if (!(epoch >= 0 && epoch <= cfg.total_epochs)) {
    throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.total_epochs) + "]");
  }
  if (epoch < cfg.warmup_epochs) return cfg.peak_lr * epoch / cfg.warmup_epochs;
  const double e = std::min(epoch, cfg.cosine_end_epoch);
  const double progress = (e - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs);
  return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace endomim
