// SPDX-License-Identifier: Apache-2.0
// Command-line surface. Exit codes: 0 success, 1 domain or validation error, 2 usage error.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <json.hpp>

#include "endomim/data/sampling.hpp"
#include "endomim/io/checkpoint.hpp"
#include "endomim/io/png_io.hpp"
#include "endomim/pipeline/corpus.hpp"
#include "endomim/pipeline/evaluate.hpp"
#include "endomim/pipeline/fewshot.hpp"
#include "endomim/pipeline/finetune.hpp"
#include "endomim/pipeline/pretrain.hpp"
#include "endomim/pipeline/render.hpp"
#include "endomim/pipeline/run_config.hpp"

namespace fs = std::filesystem;
using namespace endomim;
using nlohmann::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  std::vector<std::string> manifests;
  std::string out;
  std::optional<std::string> config;
  std::optional<std::string> data_root;
};

void add_common(CLI::App* cmd, Common& c, bool manifest_required) {
  cmd->add_option("--seed", c.seed, "Run seed");
  cmd->add_option("--preset", c.preset, "Model preset");
  auto* m = cmd->add_option("--manifest", c.manifests, "Input manifest (JSONL)");
  if (manifest_required) m->required();
  cmd->add_option("--out", c.out, "Output path")->required();
  cmd->add_option("--config", c.config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
  cmd->add_option("--data-root", c.data_root, "Directory frame_ref paths are relative to (default: the manifest's directory)");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

/// Task defaults, then the config file, then flags.
RunConfig resolve(Task task, const Common& c) {
  RunConfig cfg = default_run_config(task);
  if (c.config) cfg = apply_json(cfg, read_json_file(*c.config));
  cfg.task = task;
  if (c.preset) cfg.preset = *c.preset;
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.data_root) cfg.data_root = *c.data_root;
  cfg.validate();
  return cfg;
}

std::uint64_t run_seed(const RunConfig& cfg) { return cfg.seeds.empty() ? 0 : cfg.seeds.front(); }

fs::path data_root_for(const RunConfig& cfg, const std::string& manifest) {
  if (!cfg.data_root.empty()) return cfg.data_root;
  const auto parent = fs::path(manifest).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

FrameSet load_set(const RunConfig& cfg, const std::string& manifest) {
  return load_frames(read_manifest(manifest), data_root_for(cfg, manifest));
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Provenance record written beside every output.
void write_provenance(const fs::path& path, const std::string& command, const RunConfig& cfg, const json& inputs) {
  write_json_file(path, {{"command", command}, {"seed", run_seed(cfg)}, {"run_config", to_json(cfg)}, {"inputs", inputs}});
}

LogSink jsonl_sink(std::ofstream& log) {
  return [&log](const TrainLogEntry& e) { log << to_json(e).dump() << '\n'; };
}

std::ofstream open_log(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream log(path);
  if (!log) throw IoError("cannot write " + path.string());
  return log;
}

/// Overrides the epoch count. A shortened schedule keeps at least one epoch
/// between warmup end and cosine end when the run allows it.
void shorten(RunConfig& cfg, int epochs, bool full_cosine) {
  auto& s = cfg.schedule;
  s.total_epochs = epochs;
  s.cosine_end_epoch = full_cosine ? epochs : std::min(s.cosine_end_epoch, static_cast<double>(epochs));
  s.warmup_epochs = std::min(s.warmup_epochs, s.cosine_end_epoch - 1);
  cfg.swa_epochs = std::min(cfg.swa_epochs, epochs);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  int videos = 20;
  int frames = 60;
  int val_videos = 4;
  int test_videos = 4;
};

void run_synth(const Common& c, const SynthArgs& a) {
  RunConfig cfg = resolve(Task::pretrain, c);
  SynthCorpusConfig sc;
  sc.seed = run_seed(cfg);
  sc.num_videos = a.videos;
  sc.frames_per_video = a.frames;
  sc.val_videos = a.val_videos;
  sc.test_videos = a.test_videos;
  sc.image_size = cfg.model().encoder.image_size;
  const auto corpus = generate_synth_corpus(sc);
  const auto downstream = to_frame_set(corpus);
  const fs::path out = c.out;
  write_frame_set(downstream, out, "manifest.jsonl");
  write_manifest(out / "pretrain.jsonl", pretraining_set(downstream).manifest);
  write_provenance(out / "run.json", "synth", cfg,
                   {{"videos", a.videos}, {"frames_per_video", a.frames}, {"val_videos", a.val_videos}, {"test_videos", a.test_videos}});
  std::cout << "wrote " << downstream.size() << " frames to " << out.string() << '\n';
}

struct IngestArgs {
  std::string root;
  std::string dataset;
  std::string split = "pretrain";
  double fps = 1.0;
  bool synthetic = false;
};

void run_ingest(const Common& c, const IngestArgs& a) {
  RunConfig cfg = resolve(Task::pretrain, c);
  auto manifest = ingest_directory(a.root, a.dataset, parse_split(a.split), a.fps);
  if (a.synthetic) {
    CorpusManifest marked;
    for (auto r : manifest.records()) {
      r.synthetic = true;
      marked.add(r);
    }
    manifest = marked;
  }
  // Earlier manifests are merged in; the synthetic filter applies to the union.
  for (const auto& m : c.manifests) {
    const auto earlier = read_manifest(m);
    for (const auto& r : earlier.records()) manifest.add(r);
  }
  const auto kept = synthetic_filter(manifest);
  write_manifest(c.out, kept);
  write_provenance(c.out + ".run.json", "ingest", cfg,
                   {{"root", a.root}, {"dataset", a.dataset}, {"split", a.split}, {"source_fps", a.fps}, {"manifests", c.manifests}});
  std::cout << "kept " << kept.size() << " of " << manifest.size() << " records\n";
}

struct PretrainArgs {
  std::vector<std::string> downstream;
  std::optional<bool> norm_pix;
  std::optional<int> epochs;
};

void run_pretrain(const Common& c, const PretrainArgs& a) {
  RunConfig cfg = resolve(Task::pretrain, c);
  if (a.norm_pix) cfg.norm_pix = *a.norm_pix;
  if (a.epochs) shorten(cfg, *a.epochs, false);
  cfg.validate();
  require_config(c.manifests.size() == 1, "pretrain takes exactly one --manifest");
  const auto manifest = read_manifest(c.manifests.front());
  // The gate runs before any frame is decoded.
  std::set<VideoKey> holdout = downstream_holdout(manifest);
  for (const auto& d : a.downstream) {
    const auto extra = downstream_holdout(read_manifest(d));
    holdout.insert(extra.begin(), extra.end());
  }
  require_no_leakage(manifest, holdout);
  const auto frames = load_frames(manifest, data_root_for(cfg, c.manifests.front()));
  auto log = open_log(c.out + ".log.jsonl");
  const auto result = pretrain_run(cfg, frames, holdout, jsonl_sink(log));
  save_checkpoint(c.out, result.best_swa);
  write_provenance(c.out + ".run.json", "pretrain", cfg, {{"manifest", c.manifests.front()}, {"downstream", a.downstream}});
  std::cout << "best SWA validation loss " << result.best_swa_val_loss << " after " << result.swa_updates << " SWA updates\n";
}

struct FinetuneArgs {
  std::string task = "triplet";
  std::optional<std::string> init;
  std::string init_mode = "pretrained";
  std::optional<int> k;
  std::optional<int> epochs;
};

void run_finetune(const Common& c, const FinetuneArgs& a) {
  RunConfig cfg = resolve(parse_task(a.task), c);
  require_config(cfg.task == Task::triplet || cfg.task == Task::phase_stage1 || cfg.task == Task::phase_stage2,
                 "finetune --task must be triplet, phase-stage1 or phase-stage2");
  cfg.init = a.init_mode;
  if (a.epochs) shorten(cfg, *a.epochs, true);
  cfg.validate();
  require_config(c.manifests.size() == 1, "finetune takes exactly one --manifest");
  const auto seed = run_seed(cfg);
  auto train = select_split(load_set(cfg, c.manifests.front()), Split::train);
  json inputs = {{"manifest", c.manifests.front()}, {"init_mode", a.init_mode}};
  if (a.k) {
    const auto picked = few_shot_select(video_ids(train.manifest, Split::train), static_cast<std::size_t>(*a.k), seed);
    std::set<std::string> keep(picked.begin(), picked.end());
    train = filter_frames(train, [&](const FrameRecord& r) { return keep.count(r.video_id) > 0; });
    inputs["k"] = *a.k;
    inputs["videos"] = picked;
  }
  std::optional<Checkpoint> init;
  if (a.init) {
    init = load_checkpoint(*a.init);
    inputs["init"] = *a.init;
  }
  if (cfg.task != Task::phase_stage2 && cfg.init == "random") init.reset();
  auto log = open_log(c.out + ".log.jsonl");
  const auto result = finetune_run(cfg, train, init, seed, jsonl_sink(log));
  save_checkpoint(c.out, result.model);
  write_provenance(c.out + ".run.json", "finetune", cfg, inputs);
  std::cout << "trained " << to_string(cfg.task) << " on " << train.size() << " frames\n";
}

struct EvaluateArgs {
  std::vector<std::string> checkpoints;
  std::string split = "test";
  std::string setting = "default";
};

void run_evaluate(const Common& c, const EvaluateArgs& a) {
  RunConfig cfg = resolve(Task::evaluate, c);
  require_config(c.manifests.size() == 1, "evaluate takes exactly one --manifest");
  const auto frames = select_split(load_set(cfg, c.manifests.front()), parse_split(a.split));
  std::vector<std::pair<std::uint64_t, Checkpoint>> models;
  for (const auto& path : a.checkpoints) {
    auto model = load_checkpoint(path);
    const std::uint64_t seed = model.header.value("seed", std::uint64_t{0});
    models.emplace_back(seed, std::move(model));
  }
  const auto report = evaluate_run(models, frames, a.setting);
  const fs::path out = c.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream file(out);
  if (!file) throw IoError("cannot write " + c.out);
  write_report(file, report);
  write_provenance(c.out + ".run.json", "evaluate", cfg,
                   {{"manifest", c.manifests.front()}, {"checkpoints", a.checkpoints}, {"split", a.split}, {"setting", a.setting}});
  for (const auto& agg : report.aggregates())
    std::cout << report.metric << ' ' << agg.setting << ": " << agg.mean << " ± " << agg.std << " (n=" << agg.n << ")\n";
}

struct FewShotArgs {
  std::string task = "triplet";
  std::optional<std::string> pretrained;
  std::vector<int> ks = {2, 4, 8};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<std::string> arms = kBackboneArms;
};

void run_fewshot(const Common& c, const FewShotArgs& a) {
  RunConfig cfg = resolve(parse_task(a.task), c);
  require_config(c.manifests.size() == 1, "fewshot takes exactly one --manifest");
  std::optional<Checkpoint> pretrained;
  if (a.pretrained) pretrained = load_checkpoint(*a.pretrained);
  const auto downstream = load_set(cfg, c.manifests.front());
  const fs::path out = c.out;
  fs::create_directories(out);
  std::ofstream cells(out / "cells.jsonl");
  FewShotOptions options{a.ks, a.seeds, a.arms};
  const auto table = fewshot_grid(cfg, downstream, pretrained, options, [&](const FewShotCell& cell) {
    const json j = {{"k", cell.k}, {"arm", cell.arm}, {"seed", cell.seed}, {"videos", cell.videos}, {"value", cell.value}};
    cells << j.dump() << '\n' << std::flush;
    std::cout << j.dump() << '\n' << std::flush;
  });
  std::ofstream report(out / "report.jsonl");
  write_report(report, table.report());
  std::ofstream(out / "table.txt") << table.render();
  write_provenance(out / "run.json", "fewshot", cfg,
                   {{"manifest", c.manifests.front()}, {"pretrained", a.pretrained.value_or("")}, {"ks", a.ks}, {"seeds", a.seeds}, {"arms", a.arms}});
  std::cout << table.render();
}

struct RenderArgs {
  std::string checkpoint;
  std::vector<std::string> images;
  std::string split = "test";
  std::size_t limit = 4;
  std::vector<std::uint64_t> mask_seeds = {0, 1, 2};
  std::optional<double> mask_ratio;
};

void run_render(const Common& c, const RenderArgs& a) {
  RunConfig cfg = resolve(Task::evaluate, c);
  const auto model = load_checkpoint(a.checkpoint);
  std::vector<std::pair<std::string, Tensor<float>>> images;
  for (const auto& path : a.images) images.emplace_back(fs::path(path).stem().string(), read_png(path));
  for (const auto& m : c.manifests) {
    const auto frames = select_split(load_set(cfg, m), parse_split(a.split));
    for (std::size_t i = 0; i < frames.size() && i < a.limit; ++i) {
      const auto& r = frames.record(i);
      images.emplace_back(r.video_id + "_" + fs::path(r.frame_ref).stem().string(), frames.frames[i]);
    }
  }
  require_config(!images.empty(), "render-recon needs --image or --manifest");
  const auto rows = render_recon_grid(model, images, a.mask_seeds, c.out, a.mask_ratio);
  write_provenance(fs::path(c.out) / "run.json", "render-recon", cfg,
                   {{"checkpoint", a.checkpoint}, {"images", a.images}, {"manifests", c.manifests}, {"mask_seeds", a.mask_seeds}});
  std::cout << "rendered " << rows.size() << " rows to " << c.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-image-modeling pretraining and surgical video downstream tasks"};
  app.require_subcommand(1);

  Common synth_c, ingest_c, pretrain_c, finetune_c, evaluate_c, fewshot_c, render_c;
  SynthArgs synth_a;
  IngestArgs ingest_a;
  PretrainArgs pretrain_a;
  FinetuneArgs finetune_a;
  EvaluateArgs evaluate_a;
  FewShotArgs fewshot_a;
  RenderArgs render_a;

  auto* synth = app.add_subcommand("synth", "Render the procedural corpus with its manifests");
  add_common(synth, synth_c, false);
  synth->add_option("--videos", synth_a.videos)->check(CLI::PositiveNumber);
  synth->add_option("--frames", synth_a.frames)->check(CLI::PositiveNumber);
  synth->add_option("--val-videos", synth_a.val_videos)->check(CLI::NonNegativeNumber);
  synth->add_option("--test-videos", synth_a.test_videos)->check(CLI::NonNegativeNumber);

  auto* ingest = app.add_subcommand("ingest", "Build a manifest from <video>/<seconds>.png frames at 1 FPS");
  add_common(ingest, ingest_c, false);
  ingest->add_option("--root", ingest_a.root)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--dataset", ingest_a.dataset)->required();
  ingest->add_option("--split", ingest_a.split);
  ingest->add_option("--fps", ingest_a.fps, "Source frame rate")->check(CLI::PositiveNumber);
  ingest->add_flag("--synthetic", ingest_a.synthetic, "Mark the ingested frames synthetic (they are then filtered out)");

  auto* pretrain = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_common(pretrain, pretrain_c, true);
  pretrain->add_option("--downstream", pretrain_a.downstream, "Downstream manifests whose val/test videos must not leak");
  pretrain->add_option("--norm-pix", pretrain_a.norm_pix);
  pretrain->add_option("--epochs", pretrain_a.epochs)->check(CLI::PositiveNumber);

  auto* finetune = app.add_subcommand("finetune", "Downstream finetuning");
  add_common(finetune, finetune_c, true);
  finetune->add_option("--task", finetune_a.task)->check(CLI::IsMember({"triplet", "phase-stage1", "phase-stage2"}));
  finetune->add_option("--init", finetune_a.init, "Pretrained (or stage-1) checkpoint")->check(CLI::ExistingFile);
  finetune->add_option("--init-mode", finetune_a.init_mode)->check(CLI::IsMember({"pretrained", "random"}));
  finetune->add_option("--k", finetune_a.k, "Few-shot: number of training videos")->check(CLI::PositiveNumber);
  finetune->add_option("--epochs", finetune_a.epochs)->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Score checkpoints on a split");
  add_common(evaluate, evaluate_c, true);
  evaluate->add_option("--checkpoint", evaluate_a.checkpoints)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", evaluate_a.split);
  evaluate->add_option("--setting", evaluate_a.setting);

  auto* fewshot = app.add_subcommand("fewshot", "Few-shot grid over k, seeds and backbone arms");
  add_common(fewshot, fewshot_c, true);
  fewshot->add_option("--task", fewshot_a.task)->check(CLI::IsMember({"triplet", "phase-stage1"}));
  fewshot->add_option("--pretrained", fewshot_a.pretrained)->check(CLI::ExistingFile);
  fewshot->add_option("--k", fewshot_a.ks);
  fewshot->add_option("--seeds", fewshot_a.seeds);
  fewshot->add_option("--arms", fewshot_a.arms)->check(CLI::IsMember({"pretrained", "random"}));

  auto* render = app.add_subcommand("render-recon", "Reconstruction grids with per-patch loss heatmaps");
  add_common(render, render_c, false);
  render->add_option("--checkpoint", render_a.checkpoint)->required()->check(CLI::ExistingFile);
  render->add_option("--image", render_a.images)->check(CLI::ExistingFile);
  render->add_option("--split", render_a.split);
  render->add_option("--limit", render_a.limit);
  render->add_option("--mask-seeds", render_a.mask_seeds);
  render->add_option("--mask-ratio", render_a.mask_ratio);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) run_synth(synth_c, synth_a);
    if (*ingest) run_ingest(ingest_c, ingest_a);
    if (*pretrain) run_pretrain(pretrain_c, pretrain_a);
    if (*finetune) run_finetune(finetune_c, finetune_a);
    if (*evaluate) run_evaluate(evaluate_c, evaluate_a);
    if (*fewshot) run_fewshot(fewshot_c, fewshot_a);
    if (*render) run_render(render_c, render_a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
