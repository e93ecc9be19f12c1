// SPDX-License-Identifier: Apache-2.0
#include "endomim/data/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "endomim/error.hpp"
#include "endomim/random.hpp"

namespace endomim {

std::vector<std::size_t> sample_fps(std::span<const double> timestamps, double source_fps) {
  if (timestamps.empty()) return {};
  require(source_fps > 0, "sample_fps: source_fps must be positive");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    require(timestamps[i] >= timestamps[i - 1], "sample_fps: timestamps must be non-decreasing");
  }
  const double half_period = 0.5 / source_fps;
  const auto first = static_cast<long long>(std::ceil(timestamps.front() - half_period));
  const auto last = static_cast<long long>(std::floor(timestamps.back() + half_period));
  std::vector<std::size_t> picked;
  std::size_t cursor = 0;
  for (long long s = first; s <= last; ++s) {
    const double target = static_cast<double>(s);
    // Advance while the next frame is strictly closer; equal distance keeps the earlier frame.
    while (cursor + 1 < timestamps.size() &&
           std::abs(timestamps[cursor + 1] - target) < std::abs(timestamps[cursor] - target)) {
      ++cursor;
    }
    if (picked.empty() || picked.back() != cursor) picked.push_back(cursor);
  }
  return picked;
}

std::vector<std::string> few_shot_select(const std::vector<std::string>& train_videos, std::size_t k, std::uint64_t seed) {
  require(k <= train_videos.size(), "few_shot_select: k=" + std::to_string(k) + " exceeds the " +
                                        std::to_string(train_videos.size()) + " available training videos");
  std::vector<std::size_t> order(train_videos.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, {0x5e1ec7}));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(chosen.begin(), chosen.end());
  std::vector<std::string> out;
  for (auto i : chosen) out.push_back(train_videos[i]);
  return out;
}

}  // namespace endomim
