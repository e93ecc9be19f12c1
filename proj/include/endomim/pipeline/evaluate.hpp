// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "endomim/io/checkpoint.hpp"
#include "endomim/pipeline/corpus.hpp"

namespace endomim {

/// Frames x classes sigmoid scores of a triplet model.
Eigen::MatrixXd triplet_scores(const Checkpoint& model, const FrameSet& frames);

/// Predicted phase per frame, grouped per video as in video_sequences().
/// Stage-1 models classify frames independently; stage-2 models use the final MS-TCN stage.
std::vector<std::vector<int>> phase_predictions(const Checkpoint& model, const FrameSet& frames);

/// mAP for triplet models, mean per-video phase accuracy for phase models.
double evaluate_checkpoint(const Checkpoint& model, const FrameSet& frames);

struct MetricEntry {
  std::string setting;
  int k = 0;  // training videos; 0 when not a few-shot run
  std::uint64_t seed = 0;
  double value = 0;
};

struct MetricAggregate {
  std::string setting;
  int k = 0;
  std::size_t n = 0;
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 when n == 1
  bool single_run = false;
};

struct MetricReport {
  std::string metric;
  std::vector<MetricEntry> entries;

  /// One aggregate per (setting, k), in first-appearance order.
  std::vector<MetricAggregate> aggregates() const;
};

/// Evaluates one checkpoint per seed on the same frames.
MetricReport evaluate_run(const std::vector<std::pair<std::uint64_t, Checkpoint>>& models, const FrameSet& frames,
                          const std::string& setting);

/// Newline-delimited JSON: one "entry" record per run, then one "aggregate" record per setting.
void write_report(std::ostream& out, const MetricReport& report);

std::string metric_name(const Checkpoint& model);

}  // namespace endomim
