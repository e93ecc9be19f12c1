// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/render.hpp"

#include <algorithm>
#include <fstream>

#include "endomim/io/png_io.hpp"
#include "endomim/pipeline/run_config.hpp"

namespace endomim {

namespace {

constexpr Index kGutter = 2;

void blit(Tensor<float>& canvas, const Tensor<float>& tile, Index top, Index left) {
  for (Index y = 0; y < tile.dim(0); ++y)
    for (Index x = 0; x < tile.dim(1); ++x)
      for (Index c = 0; c < 3; ++c) canvas[((top + y) * canvas.dim(1) + left + x) * 3 + c] = tile[(y * tile.dim(1) + x) * 3 + c];
}

}  // namespace

Tensor<float> loss_heatmap(const Tensor<float>& loss_map, float max_loss, Index patch_size) {
  require(loss_map.rank() == 2, "loss_heatmap expects a rows x cols loss map");
  Tensor<float> out({loss_map.dim(0) * patch_size, loss_map.dim(1) * patch_size, 3});
  for (Index r = 0; r < loss_map.dim(0); ++r) {
    for (Index c = 0; c < loss_map.dim(1); ++c) {
      const float t = max_loss > 0 ? std::clamp(loss_map[r * loss_map.dim(1) + c] / max_loss, 0.0f, 1.0f) : 0.0f;
      for (Index y = 0; y < patch_size; ++y) {
        for (Index x = 0; x < patch_size; ++x) {
          const Index px = ((r * patch_size + y) * out.dim(1) + c * patch_size + x) * 3;
          out[px] = t;
          out[px + 1] = 0;
          out[px + 2] = 1 - t;
        }
      }
    }
  }
  return out;
}

ReconRow render_recon(const Checkpoint& mae, const Tensor<float>& image, std::uint64_t mask_seed, std::optional<double> mask_ratio) {
  require(mae.header.value("kind", "") == "mae", "render-recon needs an MAE checkpoint, got kind '" + mae.header.value("kind", "") + "'");
  require(mae.header.contains("run_config"), "checkpoint header lacks run_config");
  const auto cfg = apply_json(RunConfig{}, mae.header["run_config"]);
  const auto preset = cfg.model();
  const auto& enc = preset.encoder;
  require(image.rank() == 3 && image.dim(0) == enc.image_size && image.dim(1) == enc.image_size,
          "render-recon: image must be " + std::to_string(enc.image_size) + "x" + std::to_string(enc.image_size) + "x3");
  const auto grid = patchify(image, enc.patch_size);
  const auto plan = sample_mask(enc.num_patches(), mask_ratio.value_or(cfg.mask_ratio), mask_seed);
  const auto pred = mae_forward(mae.tensors, enc, preset.decoder, std::vector{grid}, std::vector{plan});
  const Matrix<float> p = Eigen::Map<const Matrix<float>>(pred.data(), enc.num_patches(), enc.patch_values());
  auto views = compose_reconstruction(p, grid, plan, cfg.norm_pix);
  ReconRow row;
  row.mask_seed = mask_seed;
  row.masked = std::move(views.masked_view);
  row.reconstruction = std::move(views.reconstruction_view);
  row.truth = image;
  row.loss_map = std::move(views.loss_map);
  row.max_loss = row.loss_map.matrix().maxCoeff();
  row.loss = reconstruction_loss(p, Matrix<float>(grid.patches.matrix()), plan, cfg.norm_pix);
  row.heatmap = loss_heatmap(row.loss_map, row.max_loss, enc.patch_size);
  return row;
}

Tensor<float> compose_grid(const std::vector<ReconRow>& rows) {
  require(!rows.empty(), "compose_grid: no rows");
  const Index h = rows.front().truth.dim(0), w = rows.front().truth.dim(1);
  const auto n = static_cast<Index>(rows.size());
  Tensor<float> canvas = Tensor<float>::filled({n * h + (n - 1) * kGutter, 4 * w + 3 * kGutter, 3}, 1.0f);
  for (Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    const Index top = i * (h + kGutter);
    blit(canvas, row.masked, top, 0);
    blit(canvas, row.reconstruction, top, w + kGutter);
    blit(canvas, row.truth, top, 2 * (w + kGutter));
    blit(canvas, row.heatmap, top, 3 * (w + kGutter));
  }
  return canvas;
}

std::vector<ReconRow> render_recon_grid(const Checkpoint& mae, const std::vector<std::pair<std::string, Tensor<float>>>& images,
                                        const std::vector<std::uint64_t>& mask_seeds, const std::filesystem::path& out_dir,
                                        std::optional<double> mask_ratio) {
  require(!mask_seeds.empty(), "render-recon: at least one mask seed is needed");
  std::filesystem::create_directories(out_dir);
  std::vector<ReconRow> all;
  for (const auto& [stem, image] : images) {
    std::vector<ReconRow> rows;
    for (auto seed : mask_seeds) rows.push_back(render_recon(mae, image, seed, mask_ratio));
    write_png(out_dir / (stem + ".png"), compose_grid(rows));
    std::ofstream tsv(out_dir / (stem + ".losses.tsv"));
    if (!tsv) throw IoError("cannot write " + (out_dir / (stem + ".losses.tsv")).string());
    tsv.precision(9);
    tsv << "mask_seed\tpatch\tloss\n";
    for (const auto& row : rows)
      for (Index i = 0; i < row.loss_map.size(); ++i) tsv << row.mask_seed << '\t' << i << '\t' << row.loss_map[i] << '\n';
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

}  // namespace endomim
