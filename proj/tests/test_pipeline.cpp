// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "endomim/io/checkpoint.hpp"
#include "endomim/pipeline/corpus.hpp"
#include "endomim/pipeline/evaluate.hpp"
#include "endomim/pipeline/fewshot.hpp"
#include "endomim/pipeline/finetune.hpp"
#include "endomim/pipeline/pretrain.hpp"
#include "endomim/pipeline/render.hpp"

using namespace endomim;

namespace {

// 8 videos x 4 frames: 4 train, 2 val, 2 test.
const FrameSet& small_corpus() {
  static const FrameSet set = [] {
    SynthCorpusConfig cfg;
    cfg.num_videos = 8;
    cfg.frames_per_video = 4;
    cfg.val_videos = 2;
    cfg.test_videos = 2;
    return to_frame_set(generate_synth_corpus(cfg));
  }();
  return set;
}

RunConfig short_pretrain() {
  RunConfig cfg = default_run_config(Task::pretrain);
  cfg.schedule = ScheduleConfig{1e-3, 1, 3, 3, 0};
  cfg.swa_epochs = 1;
  cfg.batch_size = 4;
  return cfg;
}

RunConfig short_downstream(Task task) {
  RunConfig cfg = default_run_config(task);
  cfg.schedule = ScheduleConfig{1e-3, 0, 1, 1, 0};
  cfg.swa_epochs = 1;
  cfg.batch_size = 4;
  return cfg;
}

const PretrainResult& pretrained_once() {
  static const PretrainResult r = [] {
    const auto& corpus = small_corpus();
    return pretrain_run(short_pretrain(), pretraining_set(corpus), downstream_holdout(corpus.manifest));
  }();
  return r;
}

const Checkpoint& stage1_once() {
  static const Checkpoint c = [] {
    const auto& corpus = small_corpus();
    return finetune_run(short_downstream(Task::phase_stage1), select_split(corpus, Split::train), pretrained_once().best_swa, 0).model;
  }();
  return c;
}

}  // namespace

TEST(Cadence, CrossingsSumToPerEpoch) {
  for (Index steps = 1; steps <= 50; ++steps) {
    int total = 0;
    for (Index j = 1; j <= steps; ++j) {
      const int c = validation_crossings(j, steps, 6);
      EXPECT_GE(c, 0);
      total += c;
    }
    EXPECT_EQ(total, 6) << steps;
  }
  // 12 steps: every second step.
  for (Index j = 1; j <= 12; ++j) EXPECT_EQ(validation_crossings(j, 12, 6), j % 2 == 0 ? 1 : 0) << j;
  // 3 steps: two validation points after each.
  for (Index j = 1; j <= 3; ++j) EXPECT_EQ(validation_crossings(j, 3, 6), 2);
}

TEST(Pretrain, SwaUpdatesFollowCadence) {
  const auto& r = pretrained_once();
  const auto cfg = short_pretrain();
  EXPECT_EQ(r.swa_updates, cfg.swa_epochs * cfg.validations_per_epoch);
  ASSERT_EQ(r.swa_val_losses.size(), static_cast<std::size_t>(r.swa_updates));
  EXPECT_EQ(r.best_swa_val_loss, *std::min_element(r.swa_val_losses.begin(), r.swa_val_losses.end()));
  EXPECT_EQ(r.best_swa.header["kind"], "mae");
  EXPECT_EQ(r.validation_videos.size(), 1u);
}

TEST(Pretrain, BitIdenticalRerun) {
  const auto& corpus = small_corpus();
  const auto again = pretrain_run(short_pretrain(), pretraining_set(corpus), downstream_holdout(corpus.manifest));
  EXPECT_EQ(serialize_checkpoint(again.best_swa), serialize_checkpoint(pretrained_once().best_swa));
}

TEST(Pretrain, LeakageGateNamesPlantedVideo) {
  const auto& corpus = small_corpus();
  auto pretrain = pretraining_set(corpus);
  const auto test = select_split(corpus, Split::test);
  const auto planted = test.record(0);
  auto record = planted;
  record.split = Split::pretrain;
  pretrain.manifest.add(record);
  pretrain.frames.push_back(test.frames[0]);
  try {
    pretrain_run(short_pretrain(), pretrain, downstream_holdout(corpus.manifest));
    FAIL() << "leakage not detected";
  } catch (const LeakageError& e) {
    ASSERT_EQ(e.leaked().size(), 1u);
    EXPECT_EQ(e.leaked()[0].second, planted.video_id);
    EXPECT_NE(std::string(e.what()).find(planted.video_id), std::string::npos);
  }
}

TEST(Pretrain, HoldoutIsVideoDisjoint) {
  const auto [train, val] = split_holdout(pretraining_set(small_corpus()), 0.05, 0);
  ASSERT_GT(val.size(), 0u);
  for (const auto& v : video_ids(val.manifest, Split::pretrain)) {
    const auto ids = video_ids(train.manifest, Split::pretrain);
    EXPECT_EQ(std::count(ids.begin(), ids.end(), v), 0) << v;
  }
}

TEST(Finetune, TripletRerunIsBitIdentical) {
  const auto& corpus = small_corpus();
  const auto cfg = short_downstream(Task::triplet);
  const auto train = select_split(corpus, Split::train);
  const auto a = finetune_run(cfg, train, pretrained_once().best_swa, 3);
  const auto b = finetune_run(cfg, train, pretrained_once().best_swa, 3);
  EXPECT_EQ(serialize_checkpoint(a.model), serialize_checkpoint(b.model));
}

TEST(Finetune, PretrainedInitRequiresCheckpoint) {
  const auto& corpus = small_corpus();
  EXPECT_THROW(finetune_run(short_downstream(Task::triplet), select_split(corpus, Split::train), std::nullopt, 0), ContractError);
}

TEST(Finetune, StageTwoLeavesBackboneUntouched) {
  const auto& corpus = small_corpus();
  const auto& stage1 = stage1_once();
  auto cfg = short_downstream(Task::phase_stage2);
  const auto stage2 = finetune_run(cfg, select_split(corpus, Split::train), stage1, 0).model;
  std::size_t carried = 0;
  for (const auto& [name, value] : stage1.tensors) {
    ASSERT_TRUE(stage2.tensors.contains(name)) << name;
    EXPECT_EQ(stage2.tensors[name], value) << name;
    ++carried;
  }
  EXPECT_EQ(carried, stage1.tensors.size());
  EXPECT_GT(stage2.tensors.size(), stage1.tensors.size());
  EXPECT_THROW(finetune_run(cfg, select_split(corpus, Split::train), pretrained_once().best_swa, 0), ContractError);
}

TEST(Evaluate, DeterministicAndRoundTripStable) {
  const auto& corpus = small_corpus();
  const auto test = select_split(corpus, Split::test);
  const auto& model = stage1_once();
  const double first = evaluate_checkpoint(model, test);
  EXPECT_EQ(first, evaluate_checkpoint(model, test));
  EXPECT_EQ(first, evaluate_checkpoint(deserialize_checkpoint(serialize_checkpoint(model)), test));
  std::ostringstream a, b;
  write_report(a, evaluate_run({{0, model}}, test, "s"));
  write_report(b, evaluate_run({{0, model}}, test, "s"));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Evaluate, SingleSeedFlagsStdZero) {
  const auto report = evaluate_run({{0, stage1_once()}}, select_split(small_corpus(), Split::test), "one");
  const auto agg = report.aggregates();
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].n, 1u);
  EXPECT_EQ(agg[0].std, 0.0);
  EXPECT_TRUE(agg[0].single_run);
}

TEST(Evaluate, AggregateMatchesRecomputation) {
  MetricReport report;
  report.metric = "mAP";
  const std::vector<double> values = {0.125, 0.5, 0.3125, 0.7};
  for (std::size_t i = 0; i < values.size(); ++i) report.entries.push_back({"a", 2, i, values[i]});
  report.entries.push_back({"b", 2, 0, 0.25});
  const auto agg = report.aggregates();
  ASSERT_EQ(agg.size(), 2u);
  double mean = 0;
  for (double v : values) mean += v / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(agg[0].mean, mean, 1e-12);
  EXPECT_NEAR(agg[0].std, std::sqrt(ss / 3.0), 1e-12);
  EXPECT_FALSE(agg[0].single_run);
  EXPECT_TRUE(agg[1].single_run);
}

TEST(Evaluate, LabelMismatchIsContractError) {
  auto test = select_split(small_corpus(), Split::test);
  CorpusManifest stripped;
  for (auto r : test.manifest.records()) {
    r.phase.reset();
    stripped.add(r);
  }
  test.manifest = stripped;
  EXPECT_THROW(evaluate_checkpoint(stage1_once(), test), ContractError);
}

TEST(FewShot, GridCountsCellsAndMatchesIsolatedRuns) {
  const auto& corpus = small_corpus();
  const auto cfg = short_downstream(Task::triplet);
  FewShotOptions options{{1, 2}, {0, 1}, kBackboneArms};
  std::size_t logged = 0;
  const auto table = fewshot_grid(cfg, corpus, pretrained_once().best_swa, options, [&](const FewShotCell&) { ++logged; });
  EXPECT_EQ(table.cells.size(), 8u);
  EXPECT_EQ(logged, 8u);
  const auto& cell = table.cells[5];  // k=2, seed 0, random
  EXPECT_EQ(cell.k, 2);
  EXPECT_EQ(cell.arm, "random");
  EXPECT_EQ(cell.videos.size(), 2u);
  const auto alone = fewshot_cell(cfg, corpus, pretrained_once().best_swa, cell.k, cell.seed, cell.arm);
  EXPECT_EQ(alone.value, cell.value);
  EXPECT_EQ(alone.videos, cell.videos);
  const auto text = table.render();
  EXPECT_NE(text.find("pretrained"), std::string::npos);
  EXPECT_NE(text.find("random"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(FewShot, TooManyVideosIsRejected) {
  FewShotOptions options{{5}, {0}, kBackboneArms};
  EXPECT_THROW(fewshot_grid(short_downstream(Task::triplet), small_corpus(), pretrained_once().best_swa, options), ContractError);
}

namespace {

Checkpoint untrained_mae() {
  Checkpoint c;
  const auto preset = tiny_desk_preset();
  c.tensors = init_mae<float>(preset.encoder, preset.decoder, 11);
  c.header = {{"kind", "mae"}, {"run_config", to_json(default_run_config(Task::pretrain))}};
  return c;
}

}  // namespace

TEST(Render, PanelsAndLossesAgree) {
  const auto model = untrained_mae();
  const auto& image = small_corpus().frames[0];
  const auto row = render_recon(model, image, 5);
  EXPECT_EQ(row.truth, image);
  const auto plan = sample_mask(64, 0.75, 5);
  double sum = 0;
  for (Index i : plan.mask_indices) sum += row.loss_map[i];
  EXPECT_NEAR(sum / static_cast<double>(plan.mask_indices.size()), row.loss, 1e-6);
  // Colormap inversion on the stored raw values.
  for (Index i = 0; i < row.loss_map.size(); ++i) {
    const Index r = i / 8, c = i % 8;
    const float red = row.heatmap[((r * 8) * 64 + c * 8) * 3];
    EXPECT_NEAR(heatmap_value(red, row.max_loss), row.loss_map[i], 1e-6) << i;
  }
  for (Index i : plan.keep_indices) EXPECT_EQ(row.loss_map[i], 0.0f);
}

TEST(Render, MinimalMaskChangesOnePatch) {
  const auto& image = small_corpus().frames[1];
  const auto row = render_recon(untrained_mae(), image, 2, 1.0 / 64.0);
  const auto masked = patchify(row.masked, 8);
  const auto truth = patchify(image, 8);
  int differing = 0;
  for (Index p = 0; p < 64; ++p) differing += masked.patches.matrix().row(p) != truth.patches.matrix().row(p);
  EXPECT_EQ(differing, 1);
}

TEST(Render, GridFilesAndSidecar) {
  const auto dir = std::filesystem::temp_directory_path() / "endomim_render_test";
  std::filesystem::remove_all(dir);
  const auto rows = render_recon_grid(untrained_mae(), {{"frame", small_corpus().frames[0]}}, {0, 1, 2}, dir);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NE(rows[0].loss_map, rows[1].loss_map);
  EXPECT_TRUE(std::filesystem::exists(dir / "frame.png"));
  std::ifstream tsv(dir / "frame.losses.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(tsv, line)) ++lines;
  EXPECT_EQ(lines, 1u + 3u * 64u);
  std::filesystem::remove_all(dir);
}

TEST(Render, NonMaeCheckpointIsRejected) {
  EXPECT_THROW(render_recon(stage1_once(), small_corpus().frames[0], 0), ContractError);
}
