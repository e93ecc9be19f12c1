// SPDX-License-Identifier: Apache-2.0
#include "endomim/pipeline/corpus.hpp"

#include <algorithm>
#include <map>

#include "endomim/data/sampling.hpp"
#include "endomim/error.hpp"
#include "endomim/io/png_io.hpp"

namespace endomim {

namespace {

std::string describe(const std::vector<VideoKey>& leaked) {
  std::string text = "pretraining manifest overlaps downstream validation/test videos:";
  for (const auto& [dataset, video] : leaked) text += " " + dataset + "/" + video;
  return text;
}

}  // namespace

LeakageError::LeakageError(std::vector<VideoKey> leaked) : std::runtime_error(describe(leaked)), leaked_(std::move(leaked)) {}

void require_no_leakage(const CorpusManifest& pretrain, const std::set<VideoKey>& holdout) {
  auto leaked = find_leaks(pretrain, holdout);
  if (!leaked.empty()) throw LeakageError(std::move(leaked));
}

FrameSet to_frame_set(const SynthCorpus& corpus) { return FrameSet{corpus.manifest, corpus.frames}; }

FrameSet select_split(const FrameSet& set, Split split) {
  return filter_frames(set, [split](const FrameRecord& r) { return r.split == split; });
}

FrameSet select_videos(const FrameSet& set, const std::set<VideoKey>& videos) {
  return filter_frames(set, [&](const FrameRecord& r) { return videos.count(video_key(r)) != 0; });
}

std::set<VideoKey> downstream_holdout(const CorpusManifest& downstream) {
  auto out = downstream.videos(Split::val);
  for (const auto& v : downstream.videos(Split::test)) out.insert(v);
  return out;
}

FrameSet pretraining_set(const FrameSet& downstream) {
  const auto holdout = downstream_holdout(downstream.manifest);
  FrameSet out;
  for (std::size_t i = 0; i < downstream.size(); ++i) {
    const auto& r = downstream.record(i);
    if (r.split != Split::train || holdout.count(video_key(r))) continue;
    FrameRecord copy = r;
    copy.split = Split::pretrain;
    out.manifest.add(std::move(copy));
    out.frames.push_back(downstream.frames[i]);
  }
  return out;
}

std::vector<std::string> video_ids(const CorpusManifest& manifest, Split split) {
  std::vector<std::string> ids;
  for (const auto& v : manifest.videos(split)) ids.push_back(v.second);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

FrameSet load_frames(const CorpusManifest& manifest, const std::filesystem::path& root) {
  FrameSet out;
  out.manifest = manifest;
  out.frames.reserve(manifest.size());
  for (const auto& r : manifest.records()) out.frames.push_back(read_png(root / r.frame_ref));
  return out;
}

void write_frame_set(const FrameSet& set, const std::filesystem::path& root, const std::string& manifest_name) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto path = root / set.record(i).frame_ref;
    std::filesystem::create_directories(path.parent_path());
    write_png(path, set.frames[i]);
  }
  write_manifest(root / manifest_name, set.manifest);
}

CorpusManifest ingest_directory(const std::filesystem::path& root, const std::string& dataset, Split split, double source_fps) {
  if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::map<std::string, std::vector<std::pair<double, std::string>>> videos;
  for (const auto& dir : std::filesystem::directory_iterator(root)) {
    if (!dir.is_directory()) continue;
    const std::string video = dir.path().filename().string();
    for (const auto& file : std::filesystem::directory_iterator(dir.path())) {
      if (file.path().extension() != ".png") continue;
      const std::string stem = file.path().stem().string();
      std::size_t used = 0;
      double seconds = 0;
      try {
        seconds = std::stod(stem, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != stem.size()) throw IoError("frame name is not <seconds>.png: " + file.path().string());
      videos[video].emplace_back(seconds, video + "/" + file.path().filename().string());
    }
  }
  CorpusManifest manifest;
  for (auto& [video, frames] : videos) {
    std::sort(frames.begin(), frames.end());
    std::vector<double> times;
    for (const auto& f : frames) times.push_back(f.first);
    for (auto i : sample_fps(times, source_fps)) {
      FrameRecord r;
      r.dataset = dataset;
      r.video_id = video;
      r.frame_ref = frames[i].second;
      r.time_s = frames[i].first;
      r.split = split;
      manifest.add(std::move(r));
    }
  }
  return manifest;
}

}  // namespace endomim
