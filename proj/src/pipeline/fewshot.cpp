// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/fewshot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "endomim/data/sampling.hpp"
#include "endomim/pipeline/finetune.hpp"

namespace endomim {

MetricReport FewShotTable::report() const {
  MetricReport out;
  out.metric = metric;
  for (const auto& c : cells) out.entries.push_back({c.arm, c.k, c.seed, c.value});
  return out;
}

double FewShotTable::mean(const std::string& arm, int k) const {
  for (const auto& a : report().aggregates())
    if (a.setting == arm && a.k == k) return a.mean;
  throw ContractError("few-shot table has no cell for arm '" + arm + "' at k=" + std::to_string(k));
}

std::string FewShotTable::render() const {
  const auto aggregates = report().aggregates();
  std::vector<int> ks;
  std::vector<std::string> arms;
  for (const auto& a : aggregates) {
    if (std::find(ks.begin(), ks.end(), a.k) == ks.end()) ks.push_back(a.k);
    if (std::find(arms.begin(), arms.end(), a.setting) == arms.end()) arms.push_back(a.setting);
  }
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-4s", "k");
  out << metric << '\n' << buf;
  for (const auto& arm : arms) {
    std::snprintf(buf, sizeof buf, " | %-16s", arm.c_str());
    out << buf;
  }
  out << '\n';
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, "%-4d", k);
    out << buf;
    for (const auto& arm : arms) {
      auto it = std::find_if(aggregates.begin(), aggregates.end(), [&](const auto& a) { return a.k == k && a.setting == arm; });
      if (it == aggregates.end()) {
        std::snprintf(buf, sizeof buf, " | %-16s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " | %6.2f%% ± %5.2f%%", 100 * it->mean, 100 * it->std);
      }
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

FewShotCell fewshot_cell(const RunConfig& cfg, const FrameSet& downstream, const std::optional<Checkpoint>& pretrained, int k,
                         std::uint64_t seed, const std::string& arm) {
  require_config(cfg.task == Task::triplet || cfg.task == Task::phase_stage1, "few-shot runs need task triplet or phase-stage1");
  require(k >= 1, "few-shot k must be positive");
  FewShotCell cell{k, arm, seed, few_shot_select(video_ids(downstream.manifest, Split::train), static_cast<std::size_t>(k), seed), 0};
  std::set<VideoKey> keys;
  for (const auto& r : downstream.manifest.records())
    if (r.split == Split::train && std::find(cell.videos.begin(), cell.videos.end(), r.video_id) != cell.videos.end())
      keys.insert({r.dataset, r.video_id});
  RunConfig run = cfg;
  run.init = arm;
  run.seeds = {seed};
  const auto trained = finetune_run(run, select_videos(select_split(downstream, Split::train), keys),
                                    arm == "pretrained" ? pretrained : std::nullopt, seed);
  cell.value = evaluate_checkpoint(trained.model, select_split(downstream, Split::test));
  return cell;
}

FewShotTable fewshot_grid(const RunConfig& cfg, const FrameSet& downstream, const std::optional<Checkpoint>& pretrained,
                          const FewShotOptions& options, const CellSink& sink) {
  const auto pool = video_ids(downstream.manifest, Split::train);
  for (int k : options.ks)
    require(k >= 1 && static_cast<std::size_t>(k) <= pool.size(),
            "few-shot k=" + std::to_string(k) + " exceeds the " + std::to_string(pool.size()) + " training videos");
  FewShotTable table;
  table.metric = cfg.task == Task::triplet ? "mAP" : "phase_accuracy";
  for (int k : options.ks) {
    for (auto seed : options.seeds) {
      for (const auto& arm : options.arms) {
        table.cells.push_back(fewshot_cell(cfg, downstream, pretrained, k, seed, arm));
        if (sink) sink(table.cells.back());
      }
    }
  }
  return table;
}

}  // namespace endomim
