// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "endomim/error.hpp"
#include "endomim/numerics/tensor.hpp"
#include "endomim/random.hpp"

namespace endomim {

/// Random resized crop followed by a random horizontal flip.
struct AugmentConfig {
  Index output_size = 64;
  double scale_min = 0.2;  // fraction of source area
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  int max_attempts = 10;

  void validate() const {
    require_config(output_size > 0, "augment: output_size must be positive");
    require_config(0 < scale_min && scale_min <= scale_max && scale_max <= 1.0, "augment: need 0 < scale_min <= scale_max <= 1");
    require_config(0 < ratio_min && ratio_min <= ratio_max, "augment: need 0 < ratio_min <= ratio_max");
    require_config(0 <= flip_prob && flip_prob <= 1, "augment: flip_prob must lie in [0, 1]");
    require_config(max_attempts >= 1, "augment: max_attempts must be >= 1");
  }
};

struct CropWindow {
  Index top = 0;
  Index left = 0;
  Index height = 0;
  Index width = 0;

  friend bool operator==(const CropWindow&, const CropWindow&) = default;
};

struct AugmentParams {
  CropWindow crop;
  bool flip = false;
};

/// Largest centered window whose aspect ratio lies within the configured bounds.
inline CropWindow center_crop(Index height, Index width, const AugmentConfig& cfg) {
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  Index w = width;
  Index h = height;
  if (in_ratio < cfg.ratio_min) {
    h = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(w) / cfg.ratio_min)));
  } else if (in_ratio > cfg.ratio_max) {
    w = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(h) * cfg.ratio_max)));
  }
  return {(height - h) / 2, (width - w) / 2, h, w};
}

/// Each attempt draws from its own sub-seed; a window that does not fit is rejected.
inline AugmentParams sample_augment(Index height, Index width, const AugmentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  AugmentParams params;
  bool found = false;
  const double area = static_cast<double>(height * width);
  for (int attempt = 0; attempt < cfg.max_attempts && !found; ++attempt) {
    Rng rng(mix_seed(seed, {1, static_cast<std::uint64_t>(attempt)}));
    const double target = area * rng.uniform(cfg.scale_min, cfg.scale_max);
    const double ratio = std::exp(rng.uniform(std::log(cfg.ratio_min), std::log(cfg.ratio_max)));
    const auto w = static_cast<Index>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<Index>(std::lround(std::sqrt(target / ratio)));
    if (w < 1 || h < 1 || w > width || h > height) continue;
    params.crop = {static_cast<Index>(rng.below(static_cast<std::uint64_t>(height - h + 1))),
                   static_cast<Index>(rng.below(static_cast<std::uint64_t>(width - w + 1))), h, w};
    found = true;
  }
  if (!found) params.crop = center_crop(height, width, cfg);
  Rng flip_rng(mix_seed(seed, {2}));
  params.flip = flip_rng.bernoulli(cfg.flip_prob);
  return params;
}

/// Bilinear resample of `window` to out_h x out_w with half-pixel centers and edge clamping.
/// Every output value is a convex combination of input values.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& image, const CropWindow& window, Index out_h, Index out_w) {
  if (image.rank() != 3) throw DimensionError("resize expects HxWxC, got " + to_string(image.shape()));
  const Index H = image.dim(0), W = image.dim(1), C = image.dim(2);
  require(window.height >= 1 && window.width >= 1 && window.top >= 0 && window.left >= 0 &&
              window.top + window.height <= H && window.left + window.width <= W,
          "resize: crop window outside image");
  Tensor<Scalar> out({out_h, out_w, C});
  const double sy = static_cast<double>(window.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(window.width) / static_cast<double>(out_w);
  for (Index y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(window.height - 1));
    const auto y0 = static_cast<Index>(std::floor(fy));
    const Index y1 = std::min(y0 + 1, window.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (Index x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(window.width - 1));
      const auto x0 = static_cast<Index>(std::floor(fx));
      const Index x1 = std::min(x0 + 1, window.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (Index c = 0; c < C; ++c) {
        auto px = [&](Index yy, Index xx) {
          return static_cast<double>(image[((window.top + yy) * W + window.left + xx) * C + c]);
        };
        const double top = (1 - wx) * px(y0, x0) + wx * px(y0, x1);
        const double bottom = (1 - wx) * px(y1, x0) + wx * px(y1, x1);
        out[(y * out_w + x) * C + c] = static_cast<Scalar>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> horizontal_flip(const Tensor<Scalar>& image) {
  if (image.rank() != 3) throw DimensionError("flip expects HxWxC, got " + to_string(image.shape()));
  const Index H = image.dim(0), W = image.dim(1), C = image.dim(2);
  Tensor<Scalar> out(image.shape());
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      for (Index c = 0; c < C; ++c) out[(y * W + x) * C + c] = image[(y * W + (W - 1 - x)) * C + c];
  return out;
}

template <typename Scalar>
Tensor<Scalar> apply_augment(const Tensor<Scalar>& image, const AugmentParams& params, Index output_size) {
  auto out = resize_bilinear(image, params.crop, output_size, output_size);
  return params.flip ? horizontal_flip(out) : out;
}

/// Deterministic per seed.
template <typename Scalar>
Tensor<Scalar> augment(const Tensor<Scalar>& image, const AugmentConfig& cfg, std::uint64_t seed) {
  if (image.rank() != 3) throw DimensionError("augment expects HxWxC, got " + to_string(image.shape()));
  return apply_augment(image, sample_augment(image.dim(0), image.dim(1), cfg, seed), cfg.output_size);
}

}  // namespace endomim
