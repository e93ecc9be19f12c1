// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "endomim/io/checkpoint.hpp"
#include "endomim/pipeline/corpus.hpp"
#include "endomim/pipeline/evaluate.hpp"
#include "endomim/pipeline/run_config.hpp"

namespace endomim {

inline const std::vector<std::string> kBackboneArms = {"pretrained", "random"};

struct FewShotCell {
  int k = 0;
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<std::string> videos;  // training videos picked for this (k, seed)
  double value = 0;
};

struct FewShotTable {
  std::string metric;
  std::vector<FewShotCell> cells;

  /// Entries use the arm as the setting.
  MetricReport report() const;
  double mean(const std::string& arm, int k) const;
  /// Rows are k, columns are arms, cells "mean ± std".
  std::string render() const;
};

struct FewShotOptions {
  std::vector<int> ks = {2, 4, 8};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::string> arms = kBackboneArms;
};

using CellSink = std::function<void(const FewShotCell&)>;

/// One inner run per (k, seed, arm): few_shot_select over the training videos of
/// `downstream`, finetune_run with cfg.init = arm, evaluation on its test split.
/// cfg.task is triplet or phase-stage1.
FewShotTable fewshot_grid(const RunConfig& cfg, const FrameSet& downstream, const std::optional<Checkpoint>& pretrained,
                          const FewShotOptions& options = {}, const CellSink& sink = {});

/// The single (k, seed, arm) cell of the grid, runnable in isolation.
FewShotCell fewshot_cell(const RunConfig& cfg, const FrameSet& downstream, const std::optional<Checkpoint>& pretrained, int k,
                         std::uint64_t seed, const std::string& arm);

}  // namespace endomim
