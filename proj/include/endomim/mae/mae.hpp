// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "endomim/vit/vit.hpp"

namespace endomim {

struct MAEConfig {
  double mask_ratio = 0.75;
  DecoderConfig decoder;
  bool norm_pix = false;

  void validate() const {
    require_config(mask_ratio > 0.0 && mask_ratio < 1.0, "mask_ratio must lie in (0, 1), got " + std::to_string(mask_ratio));
    require_config(decoder.embed_dim % 4 == 0, "decoder embed_dim must be divisible by 4");
    require_config(decoder.embed_dim % decoder.num_heads == 0, "decoder embed_dim must be divisible by its heads");
    require_config(decoder.depth >= 0, "decoder depth must be >= 0");
  }
};

/// Partition of patch indices into the encoder's visible set and the hidden set.
/// Both lists are sorted ascending.
struct MaskPlan {
  std::vector<Index> keep_indices;
  std::vector<Index> mask_indices;
  double mask_ratio = 0.0;

  Index patch_count() const { return static_cast<Index>(keep_indices.size() + mask_indices.size()); }
};

/// Visible-patch count for a ratio: floor(n * (1 - ratio)). The small slack
/// absorbs representation error, e.g. 10 * (1 - 0.1) evaluating just below 9.
inline Index visible_count(Index n_patches, double mask_ratio) {
  return static_cast<Index>(std::floor(static_cast<double>(n_patches) * (1.0 - mask_ratio) + 1e-9));
}

/// Uniform random mask drawn by ranking per-patch noise from a seeded generator.
inline MaskPlan sample_mask(Index n_patches, double mask_ratio, std::uint64_t seed) {
  require_config(n_patches >= 2, "sample_mask needs at least 2 patches");
  require_config(mask_ratio > 0.0 && mask_ratio < 1.0, "mask_ratio must lie in (0, 1), got " + std::to_string(mask_ratio));
  const Index keep = visible_count(n_patches, mask_ratio);
  require_config(keep >= 1, "mask_ratio " + std::to_string(mask_ratio) + " leaves no visible patch out of " +
                                std::to_string(n_patches));
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> noise(static_cast<std::size_t>(n_patches));
  for (auto& v : noise) v = rng();
  std::vector<Index> order = all_indices(n_patches);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return noise[static_cast<std::size_t>(a)] < noise[static_cast<std::size_t>(b)];
  });
  MaskPlan plan;
  plan.mask_ratio = mask_ratio;
  plan.keep_indices.assign(order.begin(), order.begin() + keep);
  plan.mask_indices.assign(order.begin() + keep, order.end());
  std::sort(plan.keep_indices.begin(), plan.keep_indices.end());
  std::sort(plan.mask_indices.begin(), plan.mask_indices.end());
  return plan;
}

inline void validate_plan(const MaskPlan& plan, Index n_patches) {
  if (plan.patch_count() != n_patches) {
    throw ContractError("mask plan covers " + std::to_string(plan.patch_count()) + " patches but the image has " +
                        std::to_string(n_patches));
  }
  std::vector<int> seen(static_cast<std::size_t>(n_patches), 0);
  for (const auto* list : {&plan.keep_indices, &plan.mask_indices}) {
    for (Index i : *list) {
      if (i < 0 || i >= n_patches || seen[static_cast<std::size_t>(i)]++) {
        throw ContractError("mask plan is not a partition of the patch indices");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Model

template <typename Scalar>
ParameterSet<Scalar> init_mae(const ViTConfig& encoder, const DecoderConfig& decoder, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet<Scalar> params;
  add_encoder_parameters(params, encoder, rng);
  const auto& pre = kDecoderPrefix;
  const Index hidden = static_cast<Index>(std::lround(static_cast<double>(decoder.embed_dim) * decoder.mlp_ratio));
  add_linear(params, pre + "embed", encoder.embed_dim, decoder.embed_dim, rng);
  params.add(pre + "mask_token", normal_init<Scalar>({1, decoder.embed_dim}, 0.02, rng));
  for (Index i = 0; i < decoder.depth; ++i) add_block(params, names::block(pre, i), decoder.embed_dim, hidden, rng);
  add_layer_norm(params, pre + "norm", decoder.embed_dim);
  add_linear(params, pre + "pred", decoder.embed_dim, encoder.patch_values(), rng);
  return params;
}

/// Fixed decoder position table: a zero row for the class token, then the 2-D
/// sin-cos rows for every patch.
template <typename Scalar>
Matrix<Scalar> decoder_pos_table(const ViTConfig& encoder, const DecoderConfig& decoder) {
  const Index n = encoder.num_patches();
  Matrix<Scalar> pos = Matrix<Scalar>::Zero(n + 1, decoder.embed_dim);
  pos.bottomRows(n) = sincos_pos_embed<Scalar>(encoder.grid_side(), encoder.grid_side(), decoder.embed_dim);
  return pos;
}

/// Decoder half: projects encoder tokens, places the shared mask token at every
/// hidden position, adds `pos_table`, and predicts pixels for all N patches.
template <typename Scalar>
Var<Scalar> decoder_forward(Tape<Scalar>& tape, const Binding<Scalar>& p, const ViTConfig& encoder,
                            const DecoderConfig& decoder, Var<Scalar> latent, std::span<const Index> keep,
                            const Matrix<Scalar>& pos_table) {
  const Index n = encoder.num_patches();
  const auto& pre = kDecoderPrefix;
  auto y = apply_linear(p, pre + "embed", latent);
  const Index k = static_cast<Index>(keep.size());
  auto full = scatter_rows(slice_rows(y, 1, k), p[pre + "mask_token"], keep, n);
  auto x = concat_rows(slice_rows(y, 0, 1), full) + tape.constant(pos_table);
  for (Index i = 0; i < decoder.depth; ++i) x = transformer_block(p, names::block(pre, i), decoder.num_heads, x);
  x = apply_layer_norm(p, pre + "norm", x);
  x = apply_linear(p, pre + "pred", x);
  return slice_rows(x, 1, n);
}

/// Per-sample reconstruction: the encoder sees visible patches only; returns an
/// N x patch_values prediction for every patch position.
template <typename Scalar>
Var<Scalar> mae_forward(Tape<Scalar>& tape, const Binding<Scalar>& p, const ViTConfig& encoder,
                        const DecoderConfig& decoder, const Matrix<Scalar>& patches, const MaskPlan& plan) {
  validate_plan(plan, encoder.num_patches());
  auto latent = encoder_forward(tape, p, encoder, patches, plan.keep_indices);
  return decoder_forward(tape, p, encoder, decoder, latent, plan.keep_indices, decoder_pos_table<Scalar>(encoder, decoder));
}

/// Batched value-level forward: returns B x N x patch_values predictions.
template <typename Scalar>
Tensor<Scalar> mae_forward(const ParameterSet<Scalar>& params, const ViTConfig& encoder, const DecoderConfig& decoder,
                           const std::vector<PatchGrid<Scalar>>& batch, const std::vector<MaskPlan>& plans) {
  if (batch.size() != plans.size() || batch.empty()) throw ContractError("mae_forward: batch and plans must be non-empty and aligned");
  const Index n = encoder.num_patches(), pv = encoder.patch_values();
  Tensor<Scalar> out({static_cast<Index>(batch.size()), n, pv});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Tape<Scalar> tape;
    Binding<Scalar> bound(tape, params, [](const std::string&) { return false; });
    auto pred = mae_forward(tape, bound, encoder, decoder, Matrix<Scalar>(batch[b].patches.matrix()), plans[b]);
    Eigen::Map<Matrix<Scalar>>(out.data() + static_cast<Index>(b) * n * pv, n, pv) = pred.value();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss

/// Per-patch standardization (unbiased variance, eps 1e-6) used by norm_pix targets.
template <typename Scalar>
Matrix<Scalar> normalize_patches(const Matrix<Scalar>& target) {
  Matrix<Scalar> out(target.rows(), target.cols());
  const Scalar d = static_cast<Scalar>(target.cols());
  for (Index r = 0; r < target.rows(); ++r) {
    const Scalar m = target.row(r).sum() / d;
    const Scalar var = (target.row(r).array() - m).square().sum() / std::max(d - 1, Scalar(1));
    out.row(r) = (target.row(r).array() - m) / std::sqrt(var + Scalar(1e-6));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> masked_rows(const Matrix<Scalar>& m, const std::vector<Index>& rows) {
  Matrix<Scalar> out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

/// Mean over hidden patches of each patch's mean squared pixel error.
/// Visible rows of `pred` never enter the computation.
template <typename Scalar>
Var<Scalar> reconstruction_loss(Var<Scalar> pred, const Matrix<Scalar>& target, const MaskPlan& plan, bool norm_pix) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("reconstruction_loss: prediction " + detail::dims(pred.rows(), pred.cols()) + " vs target " +
                         detail::dims(target.rows(), target.cols()));
  }
  if (plan.mask_indices.empty()) throw ContractError("reconstruction_loss: mask set is empty");
  validate_plan(plan, target.rows());
  const Matrix<Scalar> goal = norm_pix ? normalize_patches(target) : target;
  auto& tape = pred.tape();
  auto diff = gather_rows(pred, plan.mask_indices) - tape.constant(masked_rows(goal, plan.mask_indices));
  return mean(square(diff));
}

/// Per-patch MSE terms: value at each hidden position, exactly zero at visible ones.
template <typename Scalar>
Vector<Scalar> per_patch_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target, const MaskPlan& plan,
                              bool norm_pix) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DimensionError("per_patch_loss: shapes disagree");
  validate_plan(plan, target.rows());
  const Matrix<Scalar> goal = norm_pix ? normalize_patches(target) : target;
  Vector<Scalar> out = Vector<Scalar>::Zero(target.rows());
  for (Index i : plan.mask_indices) out[i] = (pred.row(i) - goal.row(i)).squaredNorm() / static_cast<Scalar>(pred.cols());
  return out;
}

/// Scalar loss without a tape.
template <typename Scalar>
Scalar reconstruction_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target, const MaskPlan& plan, bool norm_pix) {
  Tape<Scalar> tape;
  return reconstruction_loss(tape.constant(pred), target, plan, norm_pix).value()(0, 0);
}

// ---------------------------------------------------------------------------
// Qualitative composition

inline constexpr double kMaskedGray = 0.5;

template <typename Scalar>
struct ReconstructionViews {
  Tensor<Scalar> masked_view;          // H x W x 3
  Tensor<Scalar> reconstruction_view;  // H x W x 3
  Tensor<Scalar> loss_map;             // grid rows x grid cols
};

/// Builds the panels of a reconstruction figure for one sample.
/// With norm_pix, predictions are mapped back to pixel space using each target
/// patch's own statistics before pasting.
template <typename Scalar>
ReconstructionViews<Scalar> compose_reconstruction(const Matrix<Scalar>& pred, const PatchGrid<Scalar>& target,
                                                   const MaskPlan& plan, bool norm_pix = false) {
  const Matrix<Scalar> truth = target.patches.matrix();
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw DimensionError("compose_reconstruction: shapes disagree");
  validate_plan(plan, truth.rows());
  PatchGrid<Scalar> masked = target, recon = target;
  for (Index i : plan.mask_indices) {
    masked.patches.matrix().row(i).setConstant(static_cast<Scalar>(kMaskedGray));
    if (norm_pix) {
      const Scalar d = static_cast<Scalar>(truth.cols());
      const Scalar m = truth.row(i).sum() / d;
      const Scalar var = (truth.row(i).array() - m).square().sum() / std::max(d - 1, Scalar(1));
      recon.patches.matrix().row(i) = (pred.row(i).array() * std::sqrt(var + Scalar(1e-6)) + m).matrix();
    } else {
      recon.patches.matrix().row(i) = pred.row(i);
    }
  }
  const Vector<Scalar> losses = per_patch_loss(pred, truth, plan, norm_pix);
  Tensor<Scalar> loss_map({target.rows, target.cols}, losses);
  return {unpatchify(masked), unpatchify(recon), std::move(loss_map)};
}

}  // namespace endomim
