// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "endomim/io/checkpoint.hpp"
#include "endomim/mae/mae.hpp"

namespace endomim {

/// One figure row: masked input | reconstruction | ground truth | loss heatmap.
struct ReconRow {
  std::uint64_t mask_seed = 0;
  Tensor<float> masked, reconstruction, truth, heatmap;  // each H x W x 3
  Tensor<float> loss_map;                                // grid rows x cols, raw per-patch MSE
  float max_loss = 0;
  float loss = 0;  // reconstruction_loss of the sample
};

/// Linear blue -> red over [0, max_loss]; a zero max paints everything blue.
/// Each patch is a flat block of `patch_size` pixels.
Tensor<float> loss_heatmap(const Tensor<float>& loss_map, float max_loss, Index patch_size);

/// Loss value encoded by a heatmap pixel, the inverse of loss_heatmap.
inline float heatmap_value(float red, float max_loss) { return red * max_loss; }

/// `mask_ratio` defaults to the checkpoint's own training ratio.
ReconRow render_recon(const Checkpoint& mae, const Tensor<float>& image, std::uint64_t mask_seed,
                      std::optional<double> mask_ratio = std::nullopt);

/// Rows side by side horizontally, stacked vertically, separated by white gutters.
Tensor<float> compose_grid(const std::vector<ReconRow>& rows);

/// Writes `<stem>.png` plus `<stem>.losses.tsv` (mask_seed, patch, loss) per image,
/// one grid row per mask seed. Returns the rows in image-major order.
std::vector<ReconRow> render_recon_grid(const Checkpoint& mae, const std::vector<std::pair<std::string, Tensor<float>>>& images,
                                        const std::vector<std::uint64_t>& mask_seeds, const std::filesystem::path& out_dir,
                                        std::optional<double> mask_ratio = std::nullopt);

}  // namespace endomim
