// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace endomim {

/// Average precision of one class. Ranking is by descending score with ties in
/// input order. Empty optional when the class has no positive ("undefined").
std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AP per column of a frames x classes score matrix, accumulated over all frames.
std::vector<std::optional<double>> per_class_ap(const Eigen::MatrixXd& scores, const std::vector<std::vector<std::uint8_t>>& labels);

/// Mean over defined entries; throws ContractError when none is defined.
double mean_ap(std::span<const std::optional<double>> per_class);

/// Per-video frame accuracy, then the unweighted mean across videos.
/// Empty videos are skipped with a warning on stderr.
double phase_accuracy(const std::vector<std::vector<int>>& predictions, const std::vector<std::vector<int>>& labels);

}  // namespace endomim
