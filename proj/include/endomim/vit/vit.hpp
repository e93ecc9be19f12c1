// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "endomim/numerics/ops.hpp"
#include "endomim/numerics/parameters.hpp"

namespace endomim {

struct ViTConfig {
  Index image_size = 64;
  Index patch_size = 8;
  Index embed_dim = 96;
  Index depth = 4;
  Index num_heads = 4;
  double mlp_ratio = 4.0;

  Index grid_side() const { return image_size / patch_size; }
  Index num_patches() const { return grid_side() * grid_side(); }
  Index patch_values() const { return patch_size * patch_size * 3; }
  Index mlp_hidden() const { return static_cast<Index>(std::lround(static_cast<double>(embed_dim) * mlp_ratio)); }

  void validate() const {
    require_config(image_size > 0 && patch_size > 0, "image_size and patch_size must be positive");
    require_config(image_size % patch_size == 0, "image_size " + std::to_string(image_size) +
                                                     " is not divisible by patch_size " + std::to_string(patch_size));
    require_config(embed_dim > 0 && num_heads > 0 && depth >= 0, "embed_dim, num_heads must be positive, depth >= 0");
    require_config(embed_dim % num_heads == 0, "embed_dim must be divisible by num_heads");
    require_config(embed_dim % 4 == 0, "embed_dim must be divisible by 4 for the 2-D sin-cos embedding");
    require_config(mlp_ratio > 0, "mlp_ratio must be positive");
  }

  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

/// Decoder half of a masked autoencoder; lives here so layer grouping can see it.
struct DecoderConfig {
  Index embed_dim = 64;
  Index depth = 2;
  Index num_heads = 4;
  double mlp_ratio = 4.0;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

struct ModelPreset {
  std::string name;
  ViTConfig encoder;
  DecoderConfig decoder;
};

inline ModelPreset tiny_desk_preset() { return {"tiny-desk", ViTConfig{64, 8, 96, 4, 4, 4.0}, DecoderConfig{64, 2, 4, 4.0}}; }

inline ModelPreset base_paper_preset() {
  return {"base-paper", ViTConfig{224, 16, 768, 12, 12, 4.0}, DecoderConfig{512, 8, 16, 4.0}};
}

inline ModelPreset preset_by_name(const std::string& name) {
  if (name == "tiny-desk") return tiny_desk_preset();
  if (name == "base-paper") return base_paper_preset();
  throw ConfigError("unknown model preset '" + name + "' (expected tiny-desk or base-paper)");
}

// ---------------------------------------------------------------------------
// Patches

template <typename Scalar>
struct PatchGrid {
  Tensor<Scalar> patches;  // N x (p*p*3)
  Index rows = 0;
  Index cols = 0;
  Index patch_size = 0;

  Index count() const { return rows * cols; }
};

/// Splits an H x W x 3 image into row-major non-overlapping patches.
/// Each patch is flattened in (y, x, channel) order.
template <typename Scalar>
PatchGrid<Scalar> patchify(const Tensor<Scalar>& image, Index patch_size) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("patchify expects HxWx3, got " + to_string(image.shape()));
  if (patch_size <= 0) throw ConfigError("patch_size must be positive");
  const Index h = image.dim(0), w = image.dim(1);
  if (h % patch_size != 0 || w % patch_size != 0) {
    throw ConfigError("image " + to_string(image.shape()) + " is not divisible by patch size " +
                      std::to_string(patch_size));
  }
  PatchGrid<Scalar> grid{Tensor<Scalar>({(h / patch_size) * (w / patch_size), patch_size * patch_size * 3}),
                         h / patch_size, w / patch_size, patch_size};
  Index out = 0;
  for (Index gr = 0; gr < grid.rows; ++gr) {
    for (Index gc = 0; gc < grid.cols; ++gc) {
      for (Index y = 0; y < patch_size; ++y) {
        const Scalar* src = image.data() + ((gr * patch_size + y) * w + gc * patch_size) * 3;
        std::copy(src, src + patch_size * 3, grid.patches.data() + out);
        out += patch_size * 3;
      }
    }
  }
  return grid;
}

template <typename Scalar>
Tensor<Scalar> unpatchify(const PatchGrid<Scalar>& grid) {
  const Index p = grid.patch_size;
  const Index w = grid.cols * p;
  Tensor<Scalar> image({grid.rows * p, w, 3});
  Index in = 0;
  for (Index gr = 0; gr < grid.rows; ++gr) {
    for (Index gc = 0; gc < grid.cols; ++gc) {
      for (Index y = 0; y < p; ++y) {
        Scalar* dst = image.data() + ((gr * p + y) * w + gc * p) * 3;
        std::copy(grid.patches.data() + in, grid.patches.data() + in + p * 3, dst);
        in += p * 3;
      }
    }
  }
  return image;
}

/// Fixed 2-D sine-cosine position table, one row per grid cell (row-major).
/// First half of the channels encodes the grid row, second half the column.
template <typename Scalar>
Matrix<Scalar> sincos_pos_embed(Index rows, Index cols, Index embed_dim) {
  if (embed_dim % 4 != 0) throw ConfigError("sin-cos embedding dim must be divisible by 4, got " + std::to_string(embed_dim));
  const Index quarter = embed_dim / 4;
  Matrix<Scalar> table(rows * cols, embed_dim);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index pos = r * cols + c;
      for (Index i = 0; i < quarter; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
        table(pos, i) = static_cast<Scalar>(std::sin(r * omega));
        table(pos, quarter + i) = static_cast<Scalar>(std::cos(r * omega));
        table(pos, 2 * quarter + i) = static_cast<Scalar>(std::sin(c * omega));
        table(pos, 3 * quarter + i) = static_cast<Scalar>(std::cos(c * omega));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Transformer blocks

namespace names {
inline std::string block(const std::string& prefix, Index i) { return prefix + "blocks." + std::to_string(i) + "."; }
}  // namespace names

template <typename Scalar>
void add_layer_norm(ParameterSet<Scalar>& params, const std::string& name, Index dim) {
  params.add(name + ".gain", Tensor<Scalar>::filled({1, dim}, Scalar(1)));
  params.add(name + ".bias", Tensor<Scalar>({1, dim}));
}

template <typename Scalar>
void add_linear(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, std::mt19937_64& rng) {
  params.add(name + ".weight", xavier_uniform<Scalar>(in, out, rng));
  params.add(name + ".bias", Tensor<Scalar>({1, out}));
}

template <typename Scalar>
void add_block(ParameterSet<Scalar>& params, const std::string& prefix, Index dim, Index hidden, std::mt19937_64& rng) {
  add_layer_norm(params, prefix + "norm1", dim);
  add_linear(params, prefix + "attn.qkv", dim, 3 * dim, rng);
  add_linear(params, prefix + "attn.proj", dim, dim, rng);
  add_layer_norm(params, prefix + "norm2", dim);
  add_linear(params, prefix + "mlp.fc1", dim, hidden, rng);
  add_linear(params, prefix + "mlp.fc2", hidden, dim, rng);
}

template <typename Scalar>
Var<Scalar> apply_linear(const Binding<Scalar>& p, const std::string& name, Var<Scalar> x) {
  return linear(x, p[name + ".weight"], p[name + ".bias"]);
}

template <typename Scalar>
Var<Scalar> apply_layer_norm(const Binding<Scalar>& p, const std::string& name, Var<Scalar> x) {
  return layer_norm(x, p[name + ".gain"], p[name + ".bias"], Scalar(1e-6));
}

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
template <typename Scalar>
Var<Scalar> transformer_block(const Binding<Scalar>& p, const std::string& prefix, Index num_heads, Var<Scalar> x) {
  auto h = apply_layer_norm(p, prefix + "norm1", x);
  h = multi_head_attention(apply_linear(p, prefix + "attn.qkv", h), num_heads);
  x = x + apply_linear(p, prefix + "attn.proj", h);
  h = apply_layer_norm(p, prefix + "norm2", x);
  h = apply_linear(p, prefix + "mlp.fc2", gelu(apply_linear(p, prefix + "mlp.fc1", h)));
  return x + h;
}

// ---------------------------------------------------------------------------
// Encoder

inline const std::string kEncoderPrefix = "encoder.";

template <typename Scalar>
void add_encoder_parameters(ParameterSet<Scalar>& params, const ViTConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto& pre = kEncoderPrefix;
  add_linear(params, pre + "patch_embed", cfg.patch_values(), cfg.embed_dim, rng);
  params.add(pre + "cls_token", normal_init<Scalar>({1, cfg.embed_dim}, 0.02, rng));
  for (Index i = 0; i < cfg.depth; ++i) add_block(params, names::block(pre, i), cfg.embed_dim, cfg.mlp_hidden(), rng);
  add_layer_norm(params, pre + "norm", cfg.embed_dim);
}

template <typename Scalar>
ParameterSet<Scalar> init_encoder(const ViTConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet<Scalar> params;
  add_encoder_parameters(params, cfg, rng);
  return params;
}

inline void validate_keep(std::span<const Index> keep, Index n) {
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index k : keep) {
    if (k < 0 || k >= n) throw ContractError("keep index " + std::to_string(k) + " out of range [0, " + std::to_string(n) + ")");
    if (seen[static_cast<std::size_t>(k)]) throw ContractError("duplicate keep index " + std::to_string(k));
    seen[static_cast<std::size_t>(k)] = true;
  }
}

/// Encodes the kept patches. Returns (1 + |keep|) x embed_dim tokens, class token first,
/// after the final LayerNorm.
template <typename Scalar>
Var<Scalar> encoder_forward(Tape<Scalar>& tape, const Binding<Scalar>& p, const ViTConfig& cfg,
                            const Matrix<Scalar>& patches, std::span<const Index> keep) {
  if (patches.rows() != cfg.num_patches() || patches.cols() != cfg.patch_values()) {
    throw DimensionError("encoder expects " + detail::dims(cfg.num_patches(), cfg.patch_values()) + " patches, got " +
                         detail::dims(patches.rows(), patches.cols()));
  }
  validate_keep(keep, cfg.num_patches());
  const auto& pre = kEncoderPrefix;
  const Index k = static_cast<Index>(keep.size());
  Matrix<Scalar> visible(k, patches.cols());
  Matrix<Scalar> pos(k, cfg.embed_dim);
  const Matrix<Scalar> table = sincos_pos_embed<Scalar>(cfg.grid_side(), cfg.grid_side(), cfg.embed_dim);
  for (Index i = 0; i < k; ++i) {
    visible.row(i) = patches.row(keep[static_cast<std::size_t>(i)]);
    pos.row(i) = table.row(keep[static_cast<std::size_t>(i)]);
  }
  auto x = apply_linear(p, pre + "patch_embed", tape.constant(std::move(visible)));
  x = x + tape.constant(std::move(pos));
  x = concat_rows(p[pre + "cls_token"], x);
  for (Index i = 0; i < cfg.depth; ++i) x = transformer_block(p, names::block(pre, i), cfg.num_heads, x);
  return apply_layer_norm(p, pre + "norm", x);
}

/// Encoder output as a plain value: class token plus one token per kept patch.
template <typename Scalar>
struct LatentTokens {
  Tensor<Scalar> tokens;

  Index count() const { return tokens.dim(0); }
  auto class_token() const { return tokens.matrix().row(0); }
};

inline std::vector<Index> all_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

template <typename Scalar>
LatentTokens<Scalar> encode(const ParameterSet<Scalar>& params, const ViTConfig& cfg, const PatchGrid<Scalar>& grid,
                            std::span<const Index> keep) {
  Tape<Scalar> tape;
  Binding<Scalar> bound(tape, params, [](const std::string&) { return false; });
  auto out = encoder_forward(tape, bound, cfg, Matrix<Scalar>(grid.patches.matrix()), keep);
  return {Tensor<Scalar>::from_matrix(out.value())};
}

/// Full-visibility encoding used by downstream heads.
template <typename Scalar>
LatentTokens<Scalar> encode_full(const ParameterSet<Scalar>& params, const ViTConfig& cfg, const PatchGrid<Scalar>& grid) {
  const auto keep = all_indices(cfg.num_patches());
  return encode(params, cfg, grid, keep);
}

// ---------------------------------------------------------------------------
// Layer grouping for layer-wise learning-rate decay

struct ParameterGroup {
  std::string name;
  int distance = 0;  // layers between this group and the latent boundary
  std::vector<std::string> parameters;
};

namespace detail {

inline std::vector<std::string> block_parameter_names(const std::string& prefix) {
  std::vector<std::string> out;
  for (const char* layer : {"norm1", "attn.qkv", "attn.proj", "norm2", "mlp.fc1", "mlp.fc2"}) {
    const std::string base = prefix + layer;
    if (std::string(layer).rfind("norm", 0) == 0) {
      out.push_back(base + ".gain");
    } else {
      out.push_back(base + ".weight");
    }
    out.push_back(base + ".bias");
  }
  return out;
}

}  // namespace detail

/// Encoder groups only: [patch-embed, block_1 .. block_L] at distances [L .. 0].
/// The final encoder norm rides with the last block.
inline std::vector<ParameterGroup> encoder_parameter_layers(const ViTConfig& cfg) {
  const auto& pre = kEncoderPrefix;
  const int depth = static_cast<int>(cfg.depth);
  std::vector<ParameterGroup> groups;
  groups.push_back({"encoder.patch_embed", depth,
                    {pre + "patch_embed.weight", pre + "patch_embed.bias", pre + "cls_token"}});
  for (int i = 0; i < depth; ++i) {
    groups.push_back({"encoder.block" + std::to_string(i + 1), depth - 1 - i, detail::block_parameter_names(names::block(pre, i))});
  }
  auto& last = groups.back();
  last.parameters.push_back(pre + "norm.gain");
  last.parameters.push_back(pre + "norm.bias");
  return groups;
}

inline const std::string kDecoderPrefix = "decoder.";

/// Encoder groups followed by decoder groups [block_1 .. block_D, prediction head]
/// at distances [0 .. D]. The decoder input projection and mask token join block_1.
inline std::vector<ParameterGroup> parameter_layers(const ViTConfig& cfg, Index decoder_depth) {
  auto groups = encoder_parameter_layers(cfg);
  const auto& pre = kDecoderPrefix;
  const int depth = static_cast<int>(decoder_depth);
  std::vector<std::string> entry = {pre + "embed.weight", pre + "embed.bias", pre + "mask_token"};
  for (int i = 0; i < depth; ++i) {
    ParameterGroup g{"decoder.block" + std::to_string(i + 1), i, detail::block_parameter_names(names::block(pre, i))};
    if (i == 0) g.parameters.insert(g.parameters.begin(), entry.begin(), entry.end());
    groups.push_back(std::move(g));
  }
  ParameterGroup head{"decoder.head", depth, {pre + "norm.gain", pre + "norm.bias", pre + "pred.weight", pre + "pred.bias"}};
  if (depth == 0) head.parameters.insert(head.parameters.begin(), entry.begin(), entry.end());
  groups.push_back(std::move(head));
  return groups;
}

}  // namespace endomim
