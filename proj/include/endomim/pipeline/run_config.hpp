// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "endomim/data/augment.hpp"
#include "endomim/data/manifest.hpp"
#include "endomim/heads/heads.hpp"
#include "endomim/mae/mae.hpp"
#include "endomim/optim/adamw.hpp"
#include "endomim/optim/schedule.hpp"
#include "endomim/vit/vit.hpp"

namespace endomim {

enum class Task { pretrain, triplet, phase_stage1, phase_stage2, evaluate };

std::string to_string(Task task);
Task parse_task(const std::string& text);

/// Everything a run depends on. Epoch count is schedule.total_epochs.
struct RunConfig {
  Task task = Task::pretrain;
  std::string preset = "tiny-desk";
  ScheduleConfig schedule;
  AdamWConfig adamw;
  double llrd_decay = 0.65;
  Index batch_size = 32;
  std::vector<std::uint64_t> seeds{0};

  // Pretraining
  double mask_ratio = 0.75;
  bool norm_pix = false;
  int validations_per_epoch = 6;
  int swa_epochs = 5;
  double holdout_fraction = 0.05;  // of pretraining videos, used for validation
  double augment_scale_min = 0.2;
  double augment_flip_prob = 0.5;

  // Downstream
  std::string init = "pretrained";  // "pretrained" or "random"
  FocalConfig focal;
  MSTCNConfig tcn;
  int triplet_classes = 20;
  int phase_classes = 4;

  /// Split name (pretrain, train, val, test) to manifest path.
  std::map<std::string, std::string> manifests;
  std::string data_root;
  std::string pretrained_checkpoint;
  std::string stage1_checkpoint;

  ModelPreset model() const { return preset_by_name(preset); }
  MAEConfig mae() const;
  AugmentConfig augment() const;
  int epochs() const { return static_cast<int>(schedule.total_epochs); }

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

/// Defaults for the desk-scale run of `task`.
RunConfig default_run_config(Task task);

nlohmann::json to_json(const RunConfig& cfg);

/// Applies the keys present in `j` on top of `base`; unknown keys are rejected.
RunConfig apply_json(RunConfig base, const nlohmann::json& j);

}  // namespace endomim
