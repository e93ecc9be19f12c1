// SPDX-License-Identifier: Apache-2.0
#include "endomim/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "endomim/error.hpp"
#include "endomim/random.hpp"

namespace endomim {

void SynthCorpusConfig::validate() const {
  require_config(num_videos >= 1 && frames_per_video >= 1 && image_size >= 1, "synth: video, frame and image counts must be >= 1");
  require_config(num_phases >= 1 && num_tools >= 1 && num_actions >= 1 && num_anatomies >= 1 && num_triplet_classes >= 1,
                 "synth: phase, tool, action, anatomy and class counts must be >= 1");
  require_config(num_triplet_classes <= num_tools * num_actions * num_anatomies,
                 "synth: num_triplet_classes exceeds tools*actions*anatomies");
  require_config(contact_radius >= 0, "synth: contact_radius must be >= 0");
  require_config(contact_rate >= 0 && contact_rate <= 1, "synth: contact_rate must lie in [0, 1]");
  require_config(val_videos >= 0 && test_videos >= 0 && val_videos + test_videos <= num_videos,
                 "synth: val_videos + test_videos exceeds num_videos");
}

std::string synth_video_id(Index video) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "video%03lld", static_cast<long long>(video));
  return buf;
}

namespace {

using Rgb = std::array<double, 3>;

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  Rgb rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  return {rgb[0] + m, rgb[1] + m, rgb[2] + m};
}

struct Canvas {
  Index size;
  std::vector<double> px;  // size*size*3

  explicit Canvas(Index s) : size(s), px(static_cast<std::size_t>(s * s * 3), 0.0) {}

  void set(Index y, Index x, const Rgb& c) {
    const auto base = static_cast<std::size_t>((y * size + x) * 3);
    for (int k = 0; k < 3; ++k) px[base + static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)];
  }

  template <typename Inside>
  void fill(const Rgb& c, Inside inside) {
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x)
        if (inside(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) set(y, x, c);
  }
};

struct Anatomy {
  double cx, cy, ax, ay, angle;
};

double segment_distance(double px, double py, double x0, double y0, double x1, double y1) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (x0 + t * dx), py - (y0 + t * dy));
}

std::vector<TripletCombo> class_table(const SynthCorpusConfig& cfg) {
  std::vector<TripletCombo> all;
  for (int t = 0; t < cfg.num_tools; ++t)
    for (int a = 0; a < cfg.num_actions; ++a)
      for (int n = 0; n < cfg.num_anatomies; ++n) all.push_back({t, a, n});
  Rng rng(mix_seed(cfg.seed, {0xc1a55}));
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
  all.resize(static_cast<std::size_t>(cfg.num_triplet_classes));
  return all;
}

/// Frame index at which each phase starts; phases advance left to right.
std::vector<Index> phase_starts(const SynthCorpusConfig& cfg, Rng& rng) {
  const Index F = cfg.frames_per_video;
  const auto P = static_cast<Index>(cfg.num_phases);
  std::vector<Index> starts{0};
  if (P <= 1) return starts;
  if (F < P) {
    for (Index p = 1; p < F; ++p) starts.push_back(p);
    return starts;
  }
  // Distinct cut points in [1, F-1], equal expected segment lengths with jitter.
  for (Index p = 1; p < P; ++p) {
    const double nominal = static_cast<double>(p * F) / static_cast<double>(P);
    const double jitter = rng.uniform(-0.25, 0.25) * static_cast<double>(F) / static_cast<double>(P);
    Index cut = static_cast<Index>(std::lround(nominal + jitter));
    cut = std::clamp(cut, starts.back() + 1, F - (P - p));
    starts.push_back(cut);
  }
  return starts;
}

}  // namespace

SynthCorpus generate_synth_corpus(const SynthCorpusConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.classes = class_table(cfg);
  std::vector<int> class_of(static_cast<std::size_t>(cfg.num_tools * cfg.num_actions * cfg.num_anatomies), -1);
  for (std::size_t c = 0; c < corpus.classes.size(); ++c) {
    const auto& k = corpus.classes[c];
    class_of[static_cast<std::size_t>((k.tool * cfg.num_actions + k.action) * cfg.num_anatomies + k.anatomy)] = static_cast<int>(c);
  }

  const double S = static_cast<double>(cfg.image_size);
  const double radius = cfg.contact_radius * S;
  std::vector<Rgb> phase_tint;
  {
    Rng rng(mix_seed(cfg.seed, {0x7147}));
    for (int p = 0; p < cfg.num_phases; ++p) {
      const double angle = 2.0 * std::numbers::pi * (static_cast<double>(p) / cfg.num_phases + rng.uniform(0, 0.1));
      phase_tint.push_back({0.07 * std::cos(angle), 0.07 * std::sin(angle), 0.07 * std::cos(angle + 2.0)});
    }
  }
  std::vector<Rgb> anatomy_color, shaft_color, tip_color;
  for (int n = 0; n < cfg.num_anatomies; ++n) anatomy_color.push_back(hsv(0.08 + 0.8 * n / cfg.num_anatomies, 0.6, 0.5));
  for (int t = 0; t < cfg.num_tools; ++t) {
    shaft_color.push_back(hsv(0.55 + static_cast<double>(t) / cfg.num_tools, 0.5 * (t % 2), 0.15 + 0.8 * ((t / 2) % 2 == 0 ? 1 : 0.4)));
  }
  for (int a = 0; a < cfg.num_actions; ++a) tip_color.push_back(hsv(0.15 + 0.35 * a, 1.0, 1.0));

  const Index first_val = cfg.num_videos - cfg.test_videos - cfg.val_videos;
  const Index first_test = cfg.num_videos - cfg.test_videos;

  for (Index v = 0; v < cfg.num_videos; ++v) {
    Rng rng(mix_seed(cfg.seed, {0x71de0, static_cast<std::uint64_t>(v)}));
    const auto starts = phase_starts(cfg, rng);
    const std::string video_id = synth_video_id(v);
    const Split split = v >= first_test ? Split::test : (v >= first_val ? Split::val : Split::train);

    std::vector<Anatomy> anatomy;
    for (int n = 0; n < cfg.num_anatomies; ++n) {
      anatomy.push_back({rng.uniform(0.2, 0.8) * S, rng.uniform(0.2, 0.8) * S, rng.uniform(0.08, 0.15) * S,
                         rng.uniform(0.06, 0.12) * S, rng.uniform(0, std::numbers::pi)});
    }
    // Per-video appearance: tissue hue, anatomy shading and global gain differ between videos.
    const Rgb tissue = hsv(rng.uniform(-0.05, 0.08), rng.uniform(0.3, 0.6), rng.uniform(0.65, 0.9));
    std::vector<Rgb> shade;
    for (int n = 0; n < cfg.num_anatomies; ++n) {
      const auto& base = anatomy_color[static_cast<std::size_t>(n)];
      const double g = rng.uniform(0.8, 1.2);
      shade.push_back({base[0] * g, base[1] * g, base[2] * g});
    }
    const double gain = rng.uniform(0.85, 1.1);

    for (Index f = 0; f < cfg.frames_per_video; ++f) {
      const int phase = static_cast<int>(std::upper_bound(starts.begin(), starts.end(), f) - starts.begin()) - 1;
      Canvas canvas(cfg.image_size);

      // Background: vertical tissue gradient, weak phase tint plus per-frame tint noise.
      Rgb tint = phase_tint[static_cast<std::size_t>(phase)];
      for (auto& t : tint) t += 0.04 * rng.normal();
      for (Index y = 0; y < cfg.image_size; ++y) {
        const double g = 0.85 + 0.3 * static_cast<double>(y) / S;
        for (Index x = 0; x < cfg.image_size; ++x) {
          canvas.set(y, x, {tissue[0] * g + tint[0], tissue[1] * g + tint[1], tissue[2] * g + tint[2]});
        }
      }

      // Anatomies drift slightly around their per-video placement.
      std::vector<std::array<double, 2>> centers;
      for (int n = 0; n < cfg.num_anatomies; ++n) {
        const auto& a = anatomy[static_cast<std::size_t>(n)];
        const double cx = a.cx + 0.03 * S * rng.normal();
        const double cy = a.cy + 0.03 * S * rng.normal();
        centers.push_back({cx, cy});
        const double c = std::cos(a.angle), s = std::sin(a.angle);
        canvas.fill(shade[static_cast<std::size_t>(n)], [&](double x, double y) {
          const double u = ((x - cx) * c + (y - cy) * s) / a.ax;
          const double w = (-(x - cx) * s + (y - cy) * c) / a.ay;
          return u * u + w * w <= 1.0;
        });
      }

      std::vector<std::uint8_t> labels(static_cast<std::size_t>(cfg.num_triplet_classes), 0);
      const int primary = phase % cfg.num_tools;
      for (int t = 0; t < cfg.num_tools; ++t) {
        const bool present = rng.bernoulli(t == primary ? 0.8 : 0.25);
        const int action = (t == primary && rng.bernoulli(0.8)) ? phase % cfg.num_actions
                                                                 : static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_actions)));
        // The primary tool mostly works on the phase's target anatomy; others touch one at random.
        const bool contact = rng.bernoulli(t == primary ? cfg.contact_rate : cfg.contact_rate / 3.0);
        const auto target = t == primary ? static_cast<std::size_t>(phase % cfg.num_anatomies) : rng.below(centers.size());
        double tx, ty;
        if (contact) {
          const auto& c = centers[target];
          const double r = 0.8 * radius * std::sqrt(rng.uniform());
          const double phi = rng.uniform(0, 2.0 * std::numbers::pi);
          tx = c[0] + r * std::cos(phi);
          ty = c[1] + r * std::sin(phi);
        } else {
          tx = rng.uniform(0.1, 0.9) * S;
          ty = rng.uniform(0.1, 0.9) * S;
        }
        const double heading = rng.uniform(0, 2.0 * std::numbers::pi);
        if (!present) continue;
        const double ex = tx + 0.6 * S * std::cos(heading), ey = ty + 0.6 * S * std::sin(heading);
        const double half_width = std::max(1.0, 0.03 * S);
        canvas.fill(shaft_color[static_cast<std::size_t>(t)],
                    [&](double x, double y) { return segment_distance(x, y, tx, ty, ex, ey) <= half_width; });
        const double tip_r = std::max(1.5, 0.05 * S);
        canvas.fill(tip_color[static_cast<std::size_t>(action)],
                    [&](double x, double y) { return std::hypot(x - tx, y - ty) <= tip_r; });
        for (int n = 0; n < cfg.num_anatomies; ++n) {
          const auto& c = centers[static_cast<std::size_t>(n)];
          if (std::hypot(tx - c[0], ty - c[1]) < radius) {
            const int cls = class_of[static_cast<std::size_t>((t * cfg.num_actions + action) * cfg.num_anatomies + n)];
            if (cls >= 0) labels[static_cast<std::size_t>(cls)] = 1;
          }
        }
      }

      Tensor<float> frame({cfg.image_size, cfg.image_size, 3});
      for (std::size_t i = 0; i < canvas.px.size(); ++i) {
        const double noisy = gain * canvas.px[i] + 0.02 * rng.normal();
        const double q = std::round(std::clamp(noisy, 0.0, 1.0) * 255.0);
        frame[static_cast<Index>(i)] = static_cast<float>(q / 255.0);
      }

      FrameRecord record;
      record.dataset = kSynthDataset;
      record.video_id = video_id;
      record.frame_ref = video_id + "/" + std::to_string(f) + ".png";
      record.time_s = static_cast<double>(f);
      record.split = split;
      record.synthetic = false;
      record.triplets = std::move(labels);
      record.phase = phase;
      corpus.manifest.add(std::move(record));
      corpus.frames.push_back(std::move(frame));
    }
  }
  return corpus;
}

}  // namespace endomim
