// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <set>
#include <stdexcept>
#include <vector>

#include "endomim/data/manifest.hpp"
#include "endomim/data/synth.hpp"
#include "endomim/numerics/tensor.hpp"

namespace endomim {

/// Manifest records with their decoded frames; frames[i] belongs to records()[i].
struct FrameSet {
  CorpusManifest manifest;
  std::vector<Tensor<float>> frames;

  std::size_t size() const { return frames.size(); }
  const FrameRecord& record(std::size_t i) const { return manifest.records()[i]; }
};

/// Pretraining overlaps downstream validation/test videos.
class LeakageError : public std::runtime_error {
 public:
  explicit LeakageError(std::vector<VideoKey> leaked);
  const std::vector<VideoKey>& leaked() const { return leaked_; }

 private:
  std::vector<VideoKey> leaked_;
};

/// Throws LeakageError naming every overlapping video.
void require_no_leakage(const CorpusManifest& pretrain, const std::set<VideoKey>& downstream_holdout);

FrameSet to_frame_set(const SynthCorpus& corpus);

/// Records (and frames) for which `keep(record)` holds, order preserved.
template <typename Pred>
FrameSet filter_frames(const FrameSet& set, Pred keep) {
  FrameSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (keep(set.record(i))) {
      out.manifest.add(set.record(i));
      out.frames.push_back(set.frames[i]);
    }
  }
  return out;
}

FrameSet select_split(const FrameSet& set, Split split);
FrameSet select_videos(const FrameSet& set, const std::set<VideoKey>& videos);

/// Downstream validation and test videos, the set pretraining must avoid.
std::set<VideoKey> downstream_holdout(const CorpusManifest& downstream);

/// Training-split records relabelled as pretraining records, after the leakage
/// filter against the downstream holdout.
FrameSet pretraining_set(const FrameSet& downstream);

/// Video ids of `split`, sorted.
std::vector<std::string> video_ids(const CorpusManifest& manifest, Split split);

/// Frames resolved as `root / frame_ref`.
FrameSet load_frames(const CorpusManifest& manifest, const std::filesystem::path& root);

/// Writes every frame to `root / frame_ref` and the manifest to `root / manifest_name`.
void write_frame_set(const FrameSet& set, const std::filesystem::path& root, const std::string& manifest_name);

/// Builds a manifest from a directory tree `<video_id>/<seconds>.png`. Frames are
/// downsampled to 1 FPS when a video holds several frames per second.
CorpusManifest ingest_directory(const std::filesystem::path& root, const std::string& dataset, Split split, double source_fps);

}  // namespace endomim
