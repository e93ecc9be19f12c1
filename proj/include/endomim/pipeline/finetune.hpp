// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "endomim/io/checkpoint.hpp"
#include "endomim/pipeline/corpus.hpp"
#include "endomim/pipeline/pretrain.hpp"
#include "endomim/pipeline/run_config.hpp"

namespace endomim {

struct FinetuneResult {
  Checkpoint model;
  std::vector<TrainLogEntry> log;
};

/// cfg.task selects the recipe:
///   triplet       full-visibility encoder, linear head, focal loss
///   phase-stage1  full-visibility encoder, linear head, cross-entropy
///   phase-stage2  frozen stage-1 features, causal MS-TCN
/// `init` is the pretrained checkpoint (triplet/stage-1 with init "pretrained")
/// or the stage-1 checkpoint (stage-2); it is required in those cases.
FinetuneResult finetune_run(const RunConfig& cfg, const FrameSet& train, const std::optional<Checkpoint>& init,
                            std::uint64_t seed, const LogSink& sink = {});

/// Class-token features of every frame under a frozen encoder, one row per frame.
Matrix<float> extract_features(const ParameterSet<float>& model, const ViTConfig& encoder, const FrameSet& frames);

/// Frame indices of each video ordered by time; videos in id order.
std::vector<std::vector<std::size_t>> video_sequences(const FrameSet& frames);

}  // namespace endomim
