// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/evaluate.hpp"

#include <cmath>
#include <ostream>

#include <json.hpp>

#include "endomim/heads/heads.hpp"
#include "endomim/heads/metrics.hpp"
#include "endomim/pipeline/finetune.hpp"
#include "endomim/pipeline/run_config.hpp"

namespace endomim {

namespace {

std::string kind_of(const Checkpoint& model) { return model.header.value("kind", ""); }

RunConfig config_of(const Checkpoint& model) {
  require(model.header.contains("run_config"), "checkpoint header lacks run_config");
  return apply_json(RunConfig{}, model.header["run_config"]);
}

}  // namespace

std::string metric_name(const Checkpoint& model) {
  const auto kind = kind_of(model);
  if (kind == to_string(Task::triplet)) return "mAP";
  if (kind == to_string(Task::phase_stage1) || kind == to_string(Task::phase_stage2)) return "phase_accuracy";
  throw ContractError("checkpoint kind '" + kind + "' has no downstream metric");
}

Eigen::MatrixXd triplet_scores(const Checkpoint& model, const FrameSet& frames) {
  require(kind_of(model) == to_string(Task::triplet), "triplet_scores: checkpoint is not a triplet model");
  const auto cfg = config_of(model);
  const auto encoder = cfg.model().encoder;
  const Matrix<float> features = extract_features(model.tensors, encoder, frames);
  const Matrix<float> w = model.tensors[kHeadName + ".weight"].matrix();
  const Matrix<float> b = model.tensors[kHeadName + ".bias"].matrix();
  const Matrix<float> logits = (features * w).rowwise() + b.row(0);
  Eigen::MatrixXd scores = logits.cast<double>();
  return scores.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

std::vector<std::vector<int>> phase_predictions(const Checkpoint& model, const FrameSet& frames) {
  const auto kind = kind_of(model);
  require(kind == to_string(Task::phase_stage1) || kind == to_string(Task::phase_stage2), "phase_predictions: checkpoint is not a phase model");
  const auto cfg = config_of(model);
  const auto encoder = cfg.model().encoder;
  const Matrix<float> features = extract_features(model.tensors, encoder, frames);
  std::vector<std::vector<int>> out;
  for (const auto& video : video_sequences(frames)) {
    Matrix<float> x(static_cast<Index>(video.size()), features.cols());
    for (std::size_t t = 0; t < video.size(); ++t) x.row(static_cast<Index>(t)) = features.row(static_cast<Index>(video[t]));
    Matrix<float> logits;
    if (kind == to_string(Task::phase_stage2)) {
      MSTCNConfig tcn = cfg.tcn;
      tcn.num_classes = cfg.phase_classes;
      logits = mstcn_forward(model.tensors, tcn, x).back();
    } else {
      logits = (x * model.tensors[kHeadName + ".weight"].matrix()).rowwise() + model.tensors[kHeadName + ".bias"].matrix().row(0);
    }
    std::vector<int> pred;
    for (Index t = 0; t < logits.rows(); ++t) {
      Index best;
      logits.row(t).maxCoeff(&best);
      pred.push_back(static_cast<int>(best));
    }
    out.push_back(std::move(pred));
  }
  return out;
}

double evaluate_checkpoint(const Checkpoint& model, const FrameSet& frames) {
  const auto metric = metric_name(model);
  const auto cfg = config_of(model);
  if (metric == "mAP") {
    std::vector<std::vector<std::uint8_t>> labels;
    for (const auto& r : frames.manifest.records()) {
      require(r.triplets && static_cast<int>(r.triplets->size()) == cfg.triplet_classes,
              "frame " + r.frame_ref + " triplet labels do not match the model's " + std::to_string(cfg.triplet_classes) + " classes");
      labels.push_back(*r.triplets);
    }
    const auto aps = per_class_ap(triplet_scores(model, frames), labels);
    return mean_ap(aps);
  }
  std::vector<std::vector<int>> labels;
  for (const auto& video : video_sequences(frames)) {
    std::vector<int> y;
    for (auto i : video) {
      const auto& r = frames.record(i);
      require(r.phase && *r.phase >= 0 && *r.phase < cfg.phase_classes, "frame " + r.frame_ref + " phase label does not match the model");
      y.push_back(*r.phase);
    }
    labels.push_back(std::move(y));
  }
  return phase_accuracy(phase_predictions(model, frames), labels);
}

std::vector<MetricAggregate> MetricReport::aggregates() const {
  std::vector<MetricAggregate> out;
  for (const auto& e : entries) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& a) { return a.setting == e.setting && a.k == e.k; });
    if (it == out.end()) {
      out.push_back({e.setting, e.k, 0, 0, 0, false});
      it = out.end() - 1;
    }
  }
  for (auto& a : out) {
    std::vector<double> values;
    for (const auto& e : entries)
      if (e.setting == a.setting && e.k == a.k) values.push_back(e.value);
    a.n = values.size();
    double sum = 0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(a.n);
    a.single_run = a.n == 1;
    if (a.n > 1) {
      double ss = 0;
      for (double v : values) ss += (v - a.mean) * (v - a.mean);
      a.std = std::sqrt(ss / static_cast<double>(a.n - 1));
    }
  }
  return out;
}

MetricReport evaluate_run(const std::vector<std::pair<std::uint64_t, Checkpoint>>& models, const FrameSet& frames,
                          const std::string& setting) {
  require(!models.empty(), "evaluate_run: no checkpoints");
  MetricReport report;
  report.metric = metric_name(models.front().second);
  for (const auto& [seed, model] : models) {
    require(metric_name(model) == report.metric, "evaluate_run: checkpoints measure different metrics");
    report.entries.push_back({setting, 0, seed, evaluate_checkpoint(model, frames)});
  }
  return report;
}

void write_report(std::ostream& out, const MetricReport& report) {
  for (const auto& e : report.entries) {
    out << nlohmann::json{{"record", "entry"}, {"metric", report.metric}, {"setting", e.setting}, {"k", e.k}, {"seed", e.seed}, {"value", e.value}}.dump()
        << '\n';
  }
  for (const auto& a : report.aggregates()) {
    out << nlohmann::json{{"record", "aggregate"}, {"metric", report.metric}, {"setting", a.setting}, {"k", a.k}, {"n", a.n},
                          {"mean", a.mean}, {"std", a.std}, {"single_run", a.single_run}}
               .dump()
        << '\n';
  }
}

}  // namespace endomim
