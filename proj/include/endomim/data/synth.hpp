// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "endomim/data/manifest.hpp"
#include "endomim/numerics/tensor.hpp"

namespace endomim {

/// Procedural stand-in for a labeled surgical video corpus.
struct SynthCorpusConfig {
  std::uint64_t seed = 0;
  Index num_videos = 20;
  Index frames_per_video = 60;
  Index image_size = 64;
  int num_phases = 4;
  int num_tools = 4;
  int num_actions = 2;
  int num_anatomies = 3;
  int num_triplet_classes = 20;
  double contact_radius = 0.12;  // fraction of image_size
  double contact_rate = 0.75;    // chance the primary tool touches its target; a third of that for others
  Index val_videos = 4;
  Index test_videos = 4;

  void validate() const;
};

struct TripletCombo {
  int tool = 0;
  int action = 0;
  int anatomy = 0;

  friend bool operator==(const TripletCombo&, const TripletCombo&) = default;
};

/// Records are ordered by (video_id, time_s); frames[i] belongs to records()[i].
struct SynthCorpus {
  CorpusManifest manifest;
  std::vector<Tensor<float>> frames;  // HxWx3, values k/255
  std::vector<TripletCombo> classes;
};

inline const std::string kSynthDataset = "synth";

/// Zero-padded so lexical and numeric order agree.
std::string synth_video_id(Index video);

SynthCorpus generate_synth_corpus(const SynthCorpusConfig& cfg);

}  // namespace endomim
