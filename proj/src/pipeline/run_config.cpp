// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/run_config.hpp"

#include <set>

#include "endomim/error.hpp"

namespace endomim {

std::string to_string(Task task) {
  switch (task) {
    case Task::pretrain: return "pretrain";
    case Task::triplet: return "triplet";
    case Task::phase_stage1: return "phase-stage1";
    case Task::phase_stage2: return "phase-stage2";
    case Task::evaluate: return "evaluate";
  }
  return "pretrain";
}

Task parse_task(const std::string& text) {
  for (Task t : {Task::pretrain, Task::triplet, Task::phase_stage1, Task::phase_stage2, Task::evaluate}) {
    if (to_string(t) == text) return t;
  }
  throw ConfigError("unknown task '" + text + "' (expected pretrain, triplet, phase-stage1, phase-stage2 or evaluate)");
}

MAEConfig RunConfig::mae() const { return MAEConfig{mask_ratio, model().decoder, norm_pix}; }

AugmentConfig RunConfig::augment() const {
  AugmentConfig a;
  a.output_size = model().encoder.image_size;
  a.scale_min = augment_scale_min;
  a.flip_prob = augment_flip_prob;
  return a;
}

void RunConfig::validate() const {
  const auto m = model();
  m.encoder.validate();
  mae().validate();
  schedule.validate();
  augment().validate();
  focal.validate();
  tcn.validate();
  require_config(llrd_decay > 0 && llrd_decay <= 1, "llrd_decay must lie in (0, 1]");
  require_config(batch_size >= 1, "batch_size must be >= 1");
  require_config(!seeds.empty(), "seeds must be non-empty");
  require_config(validations_per_epoch >= 1, "validations_per_epoch must be >= 1");
  require_config(swa_epochs >= 1 && swa_epochs <= epochs(), "swa_epochs must lie in [1, epochs]");
  require_config(schedule.total_epochs == static_cast<double>(epochs()) && epochs() >= 1, "schedule.total_epochs must be a positive integer");
  require_config(holdout_fraction > 0 && holdout_fraction < 1, "holdout_fraction must lie in (0, 1)");
  require_config(init == "pretrained" || init == "random", "init must be 'pretrained' or 'random'");
  require_config(triplet_classes >= 1 && phase_classes >= 1, "class counts must be >= 1");
  for (const auto& [split, path] : manifests) {
    parse_split(split);
    require_config(!path.empty(), "manifest path for split " + split + " is empty");
  }
}

RunConfig default_run_config(Task task) {
  RunConfig cfg;
  cfg.task = task;
  if (task == Task::triplet || task == Task::phase_stage1 || task == Task::phase_stage2) {
    cfg.schedule = ScheduleConfig{1e-3, 1, 12, 12, 0};
    cfg.llrd_decay = 0.65;
    cfg.batch_size = 16;
    cfg.augment_scale_min = 0.6;
  }
  if (task == Task::triplet) {
    cfg.schedule = ScheduleConfig{1e-3, 1, 20, 20, 0};
    cfg.batch_size = 4;
  }
  if (task == Task::phase_stage2) {
    cfg.schedule = ScheduleConfig{3e-3, 1, 40, 40, 0};
    cfg.batch_size = 1;
  }
  return cfg;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["task"] = to_string(c.task);
  j["preset"] = c.preset;
  j["schedule"] = {{"peak_lr", c.schedule.peak_lr},
                   {"warmup_epochs", c.schedule.warmup_epochs},
                   {"cosine_end_epoch", c.schedule.cosine_end_epoch},
                   {"total_epochs", c.schedule.total_epochs},
                   {"min_lr", c.schedule.min_lr}};
  j["adamw"] = {{"beta1", c.adamw.beta1}, {"beta2", c.adamw.beta2}, {"eps", c.adamw.eps}, {"weight_decay", c.adamw.weight_decay}};
  j["llrd_decay"] = c.llrd_decay;
  j["batch_size"] = c.batch_size;
  j["seeds"] = c.seeds;
  j["mask_ratio"] = c.mask_ratio;
  j["norm_pix"] = c.norm_pix;
  j["validations_per_epoch"] = c.validations_per_epoch;
  j["swa_epochs"] = c.swa_epochs;
  j["holdout_fraction"] = c.holdout_fraction;
  j["augment"] = {{"scale_min", c.augment_scale_min}, {"flip_prob", c.augment_flip_prob}};
  j["init"] = c.init;
  j["focal"] = {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}};
  j["tcn"] = {{"num_stages", c.tcn.num_stages}, {"layers_per_stage", c.tcn.layers_per_stage}, {"channels", c.tcn.channels}};
  j["triplet_classes"] = c.triplet_classes;
  j["phase_classes"] = c.phase_classes;
  j["manifests"] = c.manifests;
  j["data_root"] = c.data_root;
  j["pretrained_checkpoint"] = c.pretrained_checkpoint;
  j["stage1_checkpoint"] = c.stage1_checkpoint;
  return j;
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig apply_json(RunConfig c, const nlohmann::json& j) {
  try {
    reject_unknown(j,
                   {"task", "preset", "schedule", "adamw", "llrd_decay", "batch_size", "seeds", "mask_ratio", "norm_pix",
                    "validations_per_epoch", "swa_epochs", "holdout_fraction", "augment", "init", "focal", "tcn",
                    "triplet_classes", "phase_classes", "manifests", "data_root", "pretrained_checkpoint", "stage1_checkpoint"},
                   "");
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    read(j, "preset", c.preset);
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown(s, {"peak_lr", "warmup_epochs", "cosine_end_epoch", "total_epochs", "min_lr"}, "schedule.");
      read(s, "peak_lr", c.schedule.peak_lr);
      read(s, "warmup_epochs", c.schedule.warmup_epochs);
      read(s, "cosine_end_epoch", c.schedule.cosine_end_epoch);
      read(s, "total_epochs", c.schedule.total_epochs);
      read(s, "min_lr", c.schedule.min_lr);
    }
    if (j.contains("adamw")) {
      const auto& a = j.at("adamw");
      reject_unknown(a, {"beta1", "beta2", "eps", "weight_decay"}, "adamw.");
      read(a, "beta1", c.adamw.beta1);
      read(a, "beta2", c.adamw.beta2);
      read(a, "eps", c.adamw.eps);
      read(a, "weight_decay", c.adamw.weight_decay);
    }
    read(j, "llrd_decay", c.llrd_decay);
    read(j, "batch_size", c.batch_size);
    read(j, "seeds", c.seeds);
    read(j, "mask_ratio", c.mask_ratio);
    read(j, "norm_pix", c.norm_pix);
    read(j, "validations_per_epoch", c.validations_per_epoch);
    read(j, "swa_epochs", c.swa_epochs);
    read(j, "holdout_fraction", c.holdout_fraction);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      reject_unknown(a, {"scale_min", "flip_prob"}, "augment.");
      read(a, "scale_min", c.augment_scale_min);
      read(a, "flip_prob", c.augment_flip_prob);
    }
    read(j, "init", c.init);
    if (j.contains("focal")) {
      const auto& f = j.at("focal");
      reject_unknown(f, {"alpha", "gamma"}, "focal.");
      read(f, "alpha", c.focal.alpha);
      read(f, "gamma", c.focal.gamma);
    }
    if (j.contains("tcn")) {
      const auto& t = j.at("tcn");
      reject_unknown(t, {"num_stages", "layers_per_stage", "channels"}, "tcn.");
      read(t, "num_stages", c.tcn.num_stages);
      read(t, "layers_per_stage", c.tcn.layers_per_stage);
      read(t, "channels", c.tcn.channels);
    }
    read(j, "triplet_classes", c.triplet_classes);
    read(j, "phase_classes", c.phase_classes);
    read(j, "manifests", c.manifests);
    read(j, "data_root", c.data_root);
    read(j, "pretrained_checkpoint", c.pretrained_checkpoint);
    read(j, "stage1_checkpoint", c.stage1_checkpoint);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.tcn.num_classes = c.phase_classes;
  return c;
}

}  // namespace endomim
