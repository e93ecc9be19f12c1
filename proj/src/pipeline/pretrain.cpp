// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/pretrain.hpp"

#include <cmath>

#include "endomim/data/sampling.hpp"
#include "endomim/mae/mae.hpp"
#include "endomim/optim/swa.hpp"
#include "training.hpp"

namespace endomim {

nlohmann::json to_json(const TrainLogEntry& e) {
  nlohmann::json j{{"step", e.step}, {"epoch_fraction", e.epoch_fraction}, {"lr", e.lr}, {"loss", e.loss}, {"swa_count", e.swa_count}};
  j["val_loss"] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
  return j;
}

int validation_crossings(Index j, Index steps, int per_epoch) {
  require(steps >= 1 && j >= 1 && j <= steps, "validation_crossings: step out of range");
  const Index v = per_epoch;
  return static_cast<int>(v * j / steps - v * (j - 1) / steps);
}

std::pair<FrameSet, FrameSet> split_holdout(const FrameSet& pretrain, double fraction, std::uint64_t seed) {
  const auto videos = pretrain.manifest.videos();
  require_config(videos.size() >= 2, "pretraining needs at least two videos to hold one out for validation");
  std::vector<std::string> keys;
  for (const auto& [dataset, video] : videos) keys.push_back(dataset + "\x1f" + video);
  const auto count = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(keys.size()))), 1,
                                             keys.size() - 1);
  std::set<VideoKey> held;
  for (const auto& k : few_shot_select(keys, count, mix_seed(seed, {0x401d}))) {
    const auto cut = k.find('\x1f');
    held.insert({k.substr(0, cut), k.substr(cut + 1)});
  }
  return {filter_frames(pretrain, [&](const FrameRecord& r) { return !held.count(video_key(r)); }), select_videos(pretrain, held)};
}

double validation_loss(const ParameterSet<float>& params, const RunConfig& cfg, const FrameSet& frames) {
  require(frames.size() > 0, "validation_loss: empty validation set");
  const auto preset = cfg.model();
  const auto mae = cfg.mae();
  const Index n = preset.encoder.num_patches();
  const auto pos = decoder_pos_table<float>(preset.encoder, mae.decoder);
  double total = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto grid = patchify(detail::model_input(frames.frames[i], preset.encoder.image_size), preset.encoder.patch_size);
    const Matrix<float> target = grid.patches.matrix();
    const auto plan = sample_mask(n, mae.mask_ratio, mix_seed(0x7a1, {static_cast<std::uint64_t>(i)}));
    Tape<float> tape;
    const Binding<float> p(tape, params, [](const std::string&) { return false; });
    auto latent = encoder_forward(tape, p, preset.encoder, target, plan.keep_indices);
    auto pred = decoder_forward(tape, p, preset.encoder, mae.decoder, latent, plan.keep_indices, pos);
    total += reconstruction_loss(pred, target, plan, mae.norm_pix).value()(0, 0);
  }
  return total / static_cast<double>(frames.size());
}

PretrainResult pretrain_run(const RunConfig& cfg, const FrameSet& pretrain, const std::set<VideoKey>& holdout, const LogSink& sink) {
  cfg.validate();
  require_no_leakage(pretrain.manifest, holdout);
  const std::uint64_t seed = cfg.seeds.front();
  const auto preset = cfg.model();
  const auto mae = cfg.mae();
  const auto aug = cfg.augment();
  const Index n_patches = preset.encoder.num_patches();

  auto [train, val] = split_holdout(pretrain, cfg.holdout_fraction, seed);
  PretrainResult result;
  for (const auto& v : val.manifest.videos()) result.validation_videos.push_back(v.first + "/" + v.second);

  auto params = init_mae<float>(preset.encoder, mae.decoder, mix_seed(seed, {0x1a17}));
  const auto plan = llrd_multipliers(parameter_layers(preset.encoder, mae.decoder.depth), cfg.llrd_decay);
  const auto rule = detail::make_update_rule(params, &plan, cfg.adamw.weight_decay);
  AdamWState<float> adam(params, cfg.adamw);
  SWAState<float> swa;
  std::optional<ParameterSet<float>> best;
  double best_loss = std::numeric_limits<double>::infinity();
  const auto pos = decoder_pos_table<float>(preset.encoder, mae.decoder);

  const std::size_t n = train.size();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  const auto steps = static_cast<Index>((n + B - 1) / B);
  const int epochs = cfg.epochs();
  const int swa_start = epochs - cfg.swa_epochs;
  std::int64_t global_step = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = detail::epoch_order(n, seed, epoch);
    double epoch_loss = 0;
    for (Index j = 0; j < steps; ++j) {
      const double epoch_fraction = epoch + static_cast<double>(j) / static_cast<double>(steps);
      const double lr = lr_at(epoch_fraction, cfg.schedule);
      const std::size_t begin = static_cast<std::size_t>(j) * B;
      const std::size_t end = std::min(n, begin + B);
      const float weight = 1.0f / static_cast<float>(end - begin);
      auto grads = zero_gradients(params);
      double batch_loss = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const std::uint64_t sample_seed = mix_seed(seed, {static_cast<std::uint64_t>(epoch), idx});
        const auto image = augment(train.frames[idx], aug, mix_seed(sample_seed, {1}));
        const auto grid = patchify(image, preset.encoder.patch_size);
        const Matrix<float> target = grid.patches.matrix();
        const auto mask = sample_mask(n_patches, mae.mask_ratio, mix_seed(sample_seed, {2}));
        Tape<float> tape;
        const Binding<float> p(tape, params);
        auto latent = encoder_forward(tape, p, preset.encoder, target, mask.keep_indices);
        auto pred = decoder_forward(tape, p, preset.encoder, mae.decoder, latent, mask.keep_indices, pos);
        auto loss = reconstruction_loss(pred, target, mask, mae.norm_pix);
        tape.backward(loss);
        p.accumulate_into(grads, weight);
        batch_loss += loss.value()(0, 0);
      }
      batch_loss /= static_cast<double>(end - begin);
      detail::require_finite(batch_loss, global_step, epoch_fraction, lr);
      if (global_step == 0) result.initial_loss = batch_loss;
      epoch_loss += batch_loss * static_cast<double>(end - begin);
      detail::apply_update(params, grads, adam, rule, lr);
      ++global_step;

      TrainLogEntry entry{global_step, epoch + static_cast<double>(j + 1) / static_cast<double>(steps), lr, batch_loss, std::nullopt, swa.count};
      if (const int crossings = validation_crossings(j + 1, steps, cfg.validations_per_epoch); crossings > 0) {
        entry.val_loss = validation_loss(params, cfg, val);
        if (epoch >= swa_start) {
          // Short epochs can pass several validation points in one step; each one updates and evaluates.
          for (int c = 0; c < crossings; ++c) {
            swa_update(swa, params);
            const double swa_loss = validation_loss(*swa.average, cfg, val);
            result.swa_val_losses.push_back(swa_loss);
            if (swa_loss < best_loss) {
              best_loss = swa_loss;
              best = *swa.average;
            }
          }
        }
        entry.swa_count = swa.count;
      }
      if (sink) sink(entry);
      result.log.push_back(entry);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
  }

  result.swa_updates = swa.count;
  result.best_swa_val_loss = best_loss;
  result.final_weights = params;
  result.best_swa.tensors = std::move(*best);
  result.best_swa.header = {{"kind", "mae"},
                            {"preset", preset.name},
                            {"run_config", to_json(cfg)},
                            {"swa_updates", swa.count},
                            {"best_swa_val_loss", best_loss},
                            {"validation_videos", result.validation_videos}};
  return result;
}

}  // namespace endomim
