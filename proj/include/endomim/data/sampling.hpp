// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace endomim {

/// Indices of the frames kept when downsampling to 1 FPS: for each whole second
/// covered by the clip, the frame nearest to it (ties go to the earlier frame).
/// A second counts as covered when it lies within half a source frame period of
/// the clip's first or last timestamp.
std::vector<std::size_t> sample_fps(std::span<const double> timestamps, double source_fps);

/// Uniform k-subset of `train_videos` without replacement, returned in input order.
std::vector<std::string> few_shot_select(const std::vector<std::string>& train_videos, std::size_t k, std::uint64_t seed);

}  // namespace endomim
