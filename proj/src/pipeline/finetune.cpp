// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/finetune.hpp"

#include <algorithm>
#include <map>

#include "endomim/heads/heads.hpp"
#include "training.hpp"

namespace endomim {

Matrix<float> extract_features(const ParameterSet<float>& model, const ViTConfig& encoder, const FrameSet& frames) {
  Matrix<float> out(static_cast<Index>(frames.size()), encoder.embed_dim);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto grid = patchify(detail::model_input(frames.frames[i], encoder.image_size), encoder.patch_size);
    out.row(static_cast<Index>(i)) = encode_full(model, encoder, grid).class_token();
  }
  return out;
}

std::vector<std::vector<std::size_t>> video_sequences(const FrameSet& frames) {
  std::map<VideoKey, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < frames.size(); ++i) by_video[video_key(frames.record(i))].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [key, idx] : by_video) {
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return frames.record(a).time_s < frames.record(b).time_s; });
    out.push_back(std::move(idx));
  }
  return out;
}

namespace {

int class_count(const RunConfig& cfg) { return cfg.task == Task::triplet ? cfg.triplet_classes : cfg.phase_classes; }

void check_labels(const RunConfig& cfg, const FrameSet& frames) {
  for (const auto& r : frames.manifest.records()) {
    if (cfg.task == Task::triplet) {
      require(r.triplets.has_value(), "frame " + r.frame_ref + " has no triplet labels");
      require(static_cast<int>(r.triplets->size()) == cfg.triplet_classes,
              "frame " + r.frame_ref + " has " + std::to_string(r.triplets->size()) + " triplet labels, model expects " +
                  std::to_string(cfg.triplet_classes));
    } else {
      require(r.phase.has_value(), "frame " + r.frame_ref + " has no phase label");
      require(*r.phase >= 0 && *r.phase < cfg.phase_classes, "frame " + r.frame_ref + " has phase outside [0, phase_classes)");
    }
  }
}

ParameterSet<float> initial_backbone(const RunConfig& cfg, const std::optional<Checkpoint>& init, std::uint64_t seed) {
  const auto preset = cfg.model();
  auto params = init_encoder<float>(preset.encoder, mix_seed(seed, {0xbac4}));
  if (cfg.init == "pretrained") {
    require(init.has_value(), to_string(cfg.task) + " with init 'pretrained' needs a pretrained checkpoint");
    if (init->header.contains("preset") && init->header["preset"] != preset.name) {
      throw ConfigError("checkpoint preset " + init->header["preset"].get<std::string>() + " does not match " + preset.name);
    }
    load_parameters(params, init->tensors);
  }
  std::mt19937_64 rng(mix_seed(seed, {0x4ead}));
  add_linear_head(params, preset.encoder.embed_dim, class_count(cfg), rng);
  return params;
}

FinetuneResult finetune_backbone(const RunConfig& cfg, const FrameSet& train, const std::optional<Checkpoint>& init,
                                 std::uint64_t seed, const LogSink& sink) {
  check_labels(cfg, train);
  require(train.size() > 0, "finetune: empty training set");
  const auto preset = cfg.model();
  const auto aug = cfg.augment();
  auto params = initial_backbone(cfg, init, seed);

  auto groups = encoder_parameter_layers(preset.encoder);
  groups.push_back({kHeadName, 0, {kHeadName + ".weight", kHeadName + ".bias"}});
  const auto plan = llrd_multipliers(groups, cfg.llrd_decay);
  const auto rule = detail::make_update_rule(params, &plan, cfg.adamw.weight_decay);
  AdamWState<float> adam(params, cfg.adamw);
  const auto all = all_indices(preset.encoder.num_patches());

  FinetuneResult result;
  const std::size_t n = train.size();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  const auto steps = static_cast<Index>((n + B - 1) / B);
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs(); ++epoch) {
    const auto order = detail::epoch_order(n, seed, epoch);
    for (Index j = 0; j < steps; ++j) {
      const double epoch_fraction = epoch + static_cast<double>(j) / static_cast<double>(steps);
      const double lr = lr_at(epoch_fraction, cfg.schedule);
      const std::size_t begin = static_cast<std::size_t>(j) * B, end = std::min(n, begin + B);
      auto grads = zero_gradients(params);
      double batch_loss = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const auto image = augment(train.frames[idx], aug, mix_seed(seed, {static_cast<std::uint64_t>(epoch), idx, 1}));
        const auto grid = patchify(image, preset.encoder.patch_size);
        Tape<float> tape;
        const Binding<float> p(tape, params);
        auto logits = linear_head(p, encoder_forward(tape, p, preset.encoder, Matrix<float>(grid.patches.matrix()), all));
        const auto& r = train.record(idx);
        Var<float> loss = [&] {
          if (cfg.task == Task::triplet) {
            Matrix<float> y(1, cfg.triplet_classes);
            for (int c = 0; c < cfg.triplet_classes; ++c) y(0, c) = (*r.triplets)[static_cast<std::size_t>(c)];
            return focal_loss(logits, y, cfg.focal);
          }
          const int target = *r.phase;
          return cross_entropy(logits, std::span<const int>(&target, 1));
        }();
        tape.backward(loss);
        p.accumulate_into(grads, 1.0f / static_cast<float>(end - begin));
        batch_loss += loss.value()(0, 0);
      }
      batch_loss /= static_cast<double>(end - begin);
      detail::require_finite(batch_loss, global_step, epoch_fraction, lr);
      detail::apply_update(params, grads, adam, rule, lr);
      ++global_step;
      TrainLogEntry entry{global_step, epoch + static_cast<double>(j + 1) / static_cast<double>(steps), lr, batch_loss, std::nullopt, 0};
      if (sink) sink(entry);
      result.log.push_back(entry);
    }
  }
  result.model.tensors = std::move(params);
  result.model.header = {{"kind", to_string(cfg.task)}, {"preset", preset.name}, {"run_config", to_json(cfg)}, {"seed", seed}};
  return result;
}

FinetuneResult finetune_temporal(const RunConfig& cfg, const FrameSet& train, const std::optional<Checkpoint>& init,
                                 std::uint64_t seed, const LogSink& sink) {
  require(init.has_value() && init->header.value("kind", "") == to_string(Task::phase_stage1),
          "phase-stage2 requires a phase-stage1 checkpoint");
  check_labels(cfg, train);
  const auto preset = cfg.model();
  const auto& backbone = init->tensors;
  const Matrix<float> features = extract_features(backbone, preset.encoder, train);
  const auto videos = video_sequences(train);

  MSTCNConfig tcn = cfg.tcn;
  tcn.num_classes = cfg.phase_classes;
  auto params = init_mstcn<float>(tcn, preset.encoder.embed_dim, mix_seed(seed, {0x7c9}));
  const auto rule = detail::make_update_rule(params, nullptr, cfg.adamw.weight_decay);
  AdamWState<float> adam(params, cfg.adamw);

  FinetuneResult result;
  const auto steps = static_cast<Index>(videos.size());
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs(); ++epoch) {
    const auto order = detail::epoch_order(videos.size(), seed, epoch);
    for (Index j = 0; j < steps; ++j) {
      const double epoch_fraction = epoch + static_cast<double>(j) / static_cast<double>(steps);
      const double lr = lr_at(epoch_fraction, cfg.schedule);
      const auto& frames = videos[order[static_cast<std::size_t>(j)]];
      Matrix<float> x(static_cast<Index>(frames.size()), features.cols());
      std::vector<int> targets;
      for (std::size_t t = 0; t < frames.size(); ++t) {
        x.row(static_cast<Index>(t)) = features.row(static_cast<Index>(frames[t]));
        targets.push_back(*train.record(frames[t]).phase);
      }
      Tape<float> tape;
      const Binding<float> p(tape, params);
      auto loss = mstcn_loss(mstcn_forward(p, tcn, tape.constant(x)), targets);
      tape.backward(loss);
      const double value = loss.value()(0, 0);
      detail::require_finite(value, global_step, epoch_fraction, lr);
      detail::apply_update(params, p.gradients(), adam, rule, lr);
      ++global_step;
      TrainLogEntry entry{global_step, epoch + static_cast<double>(j + 1) / static_cast<double>(steps), lr, value, std::nullopt, 0};
      if (sink) sink(entry);
      result.log.push_back(entry);
    }
  }
  // The stage-1 backbone and head travel unchanged alongside the temporal network.
  for (const auto& e : backbone) params.add(e.name, e.value);
  result.model.tensors = std::move(params);
  result.model.header = {{"kind", to_string(Task::phase_stage2)}, {"preset", preset.name}, {"run_config", to_json(cfg)}, {"seed", seed}};
  return result;
}

}  // namespace

FinetuneResult finetune_run(const RunConfig& cfg, const FrameSet& train, const std::optional<Checkpoint>& init,
                            std::uint64_t seed, const LogSink& sink) {
  cfg.validate();
  switch (cfg.task) {
    case Task::triplet:
    case Task::phase_stage1: return finetune_backbone(cfg, train, init, seed, sink);
    case Task::phase_stage2: return finetune_temporal(cfg, train, init, seed, sink);
    default: throw ContractError("finetune_run: task must be triplet, phase-stage1 or phase-stage2, got " + to_string(cfg.task));
  }
}

}  // namespace endomim
