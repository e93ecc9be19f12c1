// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "endomim/numerics/tensor.hpp"

namespace endomim {

/// Any PNG colour type, returned as H x W x 3 with values k/255.
Tensor<float> read_png(const std::filesystem::path& path);

/// 8-bit RGB; values are clamped to [0, 1] and rounded to the nearest k/255.
void write_png(const std::filesystem::path& path, const Tensor<float>& image);

}  // namespace endomim
