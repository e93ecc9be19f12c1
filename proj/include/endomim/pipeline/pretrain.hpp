// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include <json.hpp>

#include "endomim/io/checkpoint.hpp"
#include "endomim/pipeline/corpus.hpp"
#include "endomim/pipeline/run_config.hpp"

namespace endomim {

struct TrainLogEntry {
  std::int64_t step = 0;
  double epoch_fraction = 0;
  double lr = 0;
  double loss = 0;
  std::optional<double> val_loss;
  std::int64_t swa_count = 0;
};

nlohmann::json to_json(const TrainLogEntry& entry);

using LogSink = std::function<void(const TrainLogEntry&)>;

/// Validation points in one epoch of `steps` steps: after in-epoch step j
/// (1-based) as many as floor(per_epoch*j/steps) - floor(per_epoch*(j-1)/steps).
/// Summed over an epoch this is exactly `per_epoch`.
int validation_crossings(Index j, Index steps, int per_epoch);

struct PretrainResult {
  Checkpoint best_swa;  // lowest validation loss among SWA evaluations
  ParameterSet<float> final_weights;
  std::vector<TrainLogEntry> log;
  std::int64_t swa_updates = 0;
  std::vector<double> swa_val_losses;
  double best_swa_val_loss = 0;
  double initial_loss = 0;  // first batch
  std::vector<double> epoch_losses;
  std::vector<std::string> validation_videos;
};

/// Holds out round(fraction * videos) videos (at least one) for validation.
std::pair<FrameSet, FrameSet> split_holdout(const FrameSet& pretrain, double fraction, std::uint64_t seed);

/// Mean masked reconstruction loss over `frames`, each with a fixed per-index mask.
double validation_loss(const ParameterSet<float>& params, const RunConfig& cfg, const FrameSet& frames);

/// Throws LeakageError before any training if `pretrain` touches `holdout`.
PretrainResult pretrain_run(const RunConfig& cfg, const FrameSet& pretrain, const std::set<VideoKey>& holdout,
                            const LogSink& sink = {});

}  // namespace endomim
