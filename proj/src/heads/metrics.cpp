// SPDX-License-Identifier: Apache-2.0
#include "endomim/heads/metrics.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "endomim/error.hpp"

namespace endomim {

std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: score/label length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

std::vector<std::optional<double>> per_class_ap(const Eigen::MatrixXd& scores, const std::vector<std::vector<std::uint8_t>>& labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) throw DimensionError("per_class_ap: frame count mismatch");
  std::vector<std::optional<double>> out;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::vector<double> s(static_cast<std::size_t>(scores.rows()));
    std::vector<std::uint8_t> y(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (labels[i].size() != static_cast<std::size_t>(scores.cols())) throw DimensionError("per_class_ap: label width mismatch");
      s[i] = scores(static_cast<Eigen::Index>(i), c);
      y[i] = labels[i][static_cast<std::size_t>(c)];
    }
    out.push_back(average_precision(s, y));
  }
  return out;
}

double mean_ap(std::span<const std::optional<double>> per_class) {
  double sum = 0;
  std::size_t defined = 0;
  for (const auto& ap : per_class) {
    if (ap) {
      sum += *ap;
      ++defined;
    }
  }
  if (defined == 0) throw ContractError("mean_ap: no class has a positive example");
  return sum / static_cast<double>(defined);
}

double phase_accuracy(const std::vector<std::vector<int>>& predictions, const std::vector<std::vector<int>>& labels) {
  if (predictions.size() != labels.size()) throw DimensionError("phase_accuracy: video count mismatch");
  double sum = 0;
  std::size_t videos = 0;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (predictions[v].size() != labels[v].size()) throw DimensionError("phase_accuracy: frame count mismatch in video " + std::to_string(v));
    if (labels[v].empty()) {
      std::cerr << "warning: phase_accuracy skips empty video " << v << '\n';
      continue;
    }
    std::size_t correct = 0;
    for (std::size_t t = 0; t < labels[v].size(); ++t) correct += predictions[v][t] == labels[v][t] ? 1 : 0;
    sum += static_cast<double>(correct) / static_cast<double>(labels[v].size());
    ++videos;
  }
  if (videos == 0) throw ContractError("phase_accuracy: no non-empty video");
  return sum / static_cast<double>(videos);
}

}  // namespace endomim
