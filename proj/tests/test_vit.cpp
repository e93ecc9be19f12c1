// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "endomim/vit/vit.hpp"

using namespace endomim;

namespace {

Tensor<double> random_image(Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<double> img({h, w, 3});
  for (Index i = 0; i < img.size(); ++i) img[i] = u(rng);
  return img;
}

ViTConfig micro_config(Index depth = 2) { return ViTConfig{16, 4, 16, depth, 2, 2.0}; }

}  // namespace

TEST(Patchify, TinyDeskGeometry) {
  auto grid = patchify(random_image(64, 64, 1), 8);
  EXPECT_EQ(grid.count(), 64);
  EXPECT_EQ(grid.patches.dim(0), 64);
  EXPECT_EQ(grid.patches.dim(1), 192);
}

TEST(Patchify, ConstantImageGivesIdenticalPatches) {
  auto grid = patchify(Tensor<double>::filled({32, 32, 3}, 0.3), 8);
  for (Index i = 1; i < grid.count(); ++i) EXPECT_EQ(grid.patches.matrix().row(i), grid.patches.matrix().row(0));
}

TEST(Patchify, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto img = random_image(48, 32, seed);
    EXPECT_EQ(unpatchify(patchify(img, 8)), img);
  }
}

TEST(Patchify, RowMajorPatchOrder) {
  auto img = random_image(16, 16, 3);
  auto grid = patchify(img, 8);
  // Patch 1 is the top-right block; its first value is pixel (0, 8, channel 0).
  EXPECT_EQ(grid.patches.matrix()(1, 0), img.at({0, 8, 0}));
  EXPECT_EQ(grid.patches.matrix()(2, 3), img.at({8, 1, 0}));
}

TEST(Patchify, IndivisibleImageIsConfigError) {
  EXPECT_THROW(patchify(random_image(30, 32, 0), 8), ConfigError);
}

TEST(SinCos, InjectiveDeterministicBounded) {
  const auto table = sincos_pos_embed<double>(8, 8, 32);
  EXPECT_EQ(table, (sincos_pos_embed<double>(8, 8, 32)));
  for (Index a = 0; a < 64; ++a) {
    EXPECT_LE(table.row(a).cwiseAbs().maxCoeff(), 1.0);
    for (Index b = a + 1; b < 64; ++b) EXPECT_GT((table.row(a) - table.row(b)).norm(), 0.0) << a << "," << b;
  }
  EXPECT_THROW(sincos_pos_embed<double>(4, 4, 30), ConfigError);
}

TEST(Encoder, FullVisibilityTokenCount) {
  const auto cfg = micro_config();
  auto params = init_encoder<double>(cfg, 0);
  auto grid = patchify(random_image(16, 16, 2), 4);
  auto latent = encode_full(params, cfg, grid);
  EXPECT_EQ(latent.count(), 1 + cfg.num_patches());
  const std::vector<Index> keep = {0, 5, 9};
  EXPECT_EQ(encode(params, cfg, grid, keep).count(), 4);
}

TEST(Encoder, ZeroDepthIsNormalizedEmbedding) {
  const auto cfg = micro_config(0);
  auto params = init_encoder<double>(cfg, 1);
  auto grid = patchify(random_image(16, 16, 3), 4);
  const std::vector<Index> keep = {2, 7};
  auto latent = encode(params, cfg, grid, keep);
  // Reference: LayerNorm(concat(cls, patches*W + b + pos)) with unit gain/zero bias.
  const auto pos = sincos_pos_embed<double>(4, 4, cfg.embed_dim);
  Matrix<double> seq(3, cfg.embed_dim);
  seq.row(0) = params["encoder.cls_token"].matrix();
  for (Index i = 0; i < 2; ++i) {
    seq.row(i + 1) = grid.patches.matrix().row(keep[i]) * params["encoder.patch_embed.weight"].matrix() +
                     params["encoder.patch_embed.bias"].matrix() + pos.row(keep[i]);
  }
  const auto expected = normalize_rows(seq, 1e-6).normalized;
  EXPECT_LT((latent.tokens.matrix() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, PermutingKeepPermutesTokens) {
  const auto cfg = micro_config();
  auto params = init_encoder<double>(cfg, 4);
  auto grid = patchify(random_image(16, 16, 5), 4);
  const std::vector<Index> keep = {1, 4, 8, 13, 15};
  const std::vector<Index> perm = {13, 1, 15, 8, 4};
  const Matrix<double> a = encode(params, cfg, grid, keep).tokens.matrix();
  const Matrix<double> b = encode(params, cfg, grid, perm).tokens.matrix();
  EXPECT_LT((a.row(0) - b.row(0)).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t j = 0; j < perm.size(); ++j) {
    const auto i = std::find(keep.begin(), keep.end(), perm[j]) - keep.begin();
    EXPECT_LT((a.row(1 + i) - b.row(1 + static_cast<Index>(j))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Encoder, RejectsBadKeepIndices) {
  const auto cfg = micro_config();
  auto params = init_encoder<double>(cfg, 0);
  auto grid = patchify(random_image(16, 16, 2), 4);
  const std::vector<Index> dup = {1, 1};
  const std::vector<Index> out = {16};
  EXPECT_THROW(encode(params, cfg, grid, dup), ContractError);
  EXPECT_THROW(encode(params, cfg, grid, out), ContractError);
}

TEST(Encoder, DeterministicAndBatchIndependent) {
  const auto cfg = micro_config();
  auto params = init_encoder<double>(cfg, 6);
  auto g1 = patchify(random_image(16, 16, 7), 4);
  auto g2 = patchify(random_image(16, 16, 8), 4);
  auto first = encode_full(params, cfg, g1).tokens;
  encode_full(params, cfg, g2);
  EXPECT_EQ(encode_full(params, cfg, g1).tokens, first);
}

TEST(Attention, WeightRowsSumToOne) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 3);
  Matrix<double> qkv(7, 24);
  for (Index i = 0; i < qkv.size(); ++i) qkv.data()[i] = n(rng);
  const auto q = qkv.leftCols(8);
  const auto k = qkv.middleCols(8, 8);
  const auto p = softmax_rows(Matrix<double>(q.leftCols(4) * k.leftCols(4).transpose() / 2.0));
  for (Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
}

TEST(ParameterLayers, DistancesFollowLatentOrdering) {
  ViTConfig cfg = tiny_desk_preset().encoder;
  auto enc = encoder_parameter_layers(cfg);
  ASSERT_EQ(enc.size(), 5u);
  const std::vector<int> expected = {4, 3, 2, 1, 0};
  for (std::size_t i = 0; i < enc.size(); ++i) EXPECT_EQ(enc[i].distance, expected[i]);

  ViTConfig one = micro_config(1);
  auto all = parameter_layers(one, 1);
  std::vector<int> d;
  for (const auto& g : all) d.push_back(g.distance);
  EXPECT_EQ(d, (std::vector<int>{1, 0, 0, 1}));
}

TEST(ParameterLayers, EncoderGroupsCoverEncoderExactly) {
  for (Index depth : {0, 1, 4}) {
    auto cfg = micro_config(depth);
    auto params = init_encoder<double>(cfg, 0);
    std::multiset<std::string> seen;
    for (const auto& g : encoder_parameter_layers(cfg)) seen.insert(g.parameters.begin(), g.parameters.end());
    EXPECT_EQ(seen.size(), params.size());
    for (const auto& e : params) EXPECT_EQ(seen.count(e.name), 1u) << e.name;
  }
}

TEST(Presets, ValidateAndLookup) {
  EXPECT_NO_THROW(tiny_desk_preset().encoder.validate());
  EXPECT_NO_THROW(base_paper_preset().encoder.validate());
  EXPECT_EQ(preset_by_name("base-paper").encoder.embed_dim, 768);
  EXPECT_THROW(preset_by_name("huge"), ConfigError);
  ViTConfig bad{60, 8, 96, 4, 4, 4.0};
  EXPECT_THROW(bad.validate(), ConfigError);
}
