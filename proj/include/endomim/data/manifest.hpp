// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace endomim {

enum class Split { pretrain, train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// One curated frame. `extra` carries unknown manifest fields through unchanged.
struct FrameRecord {
  std::string dataset;
  std::string video_id;
  std::string frame_ref;
  double time_s = 0;
  Split split = Split::pretrain;
  bool synthetic = false;
  std::optional<std::vector<std::uint8_t>> triplets;  // one 0/1 entry per class
  std::optional<int> phase;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

using VideoKey = std::pair<std::string, std::string>;  // (dataset, video_id)

inline VideoKey video_key(const FrameRecord& r) { return {r.dataset, r.video_id}; }

class CorpusManifest {
 public:
  CorpusManifest() = default;
  explicit CorpusManifest(std::vector<FrameRecord> records);

  /// Appends a record; rejects a duplicate (dataset, video_id, time_s).
  void add(FrameRecord record);

  const std::vector<FrameRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::map<std::string, std::size_t> counts() const;
  std::set<VideoKey> videos() const;
  std::set<VideoKey> videos(Split split) const;

  /// Records of one split, in manifest order.
  CorpusManifest select(Split split) const;
  CorpusManifest select_videos(const std::set<VideoKey>& keep) const;

  friend bool operator==(const CorpusManifest& a, const CorpusManifest& b) { return a.records_ == b.records_; }

 private:
  std::vector<FrameRecord> records_;
  std::set<std::tuple<std::string, std::string, double>> keys_;
};

nlohmann::json to_json(const FrameRecord& record);
FrameRecord frame_record_from_json(const nlohmann::json& j);

/// Newline-delimited JSON, one record per line.
void write_manifest(std::ostream& out, const CorpusManifest& manifest);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(std::istream& in);
CorpusManifest read_manifest(const std::filesystem::path& path);

struct LeakageReport {
  std::map<std::string, std::size_t> removed_per_dataset;
  std::size_t total_removed = 0;
};

struct FilterResult {
  CorpusManifest manifest;
  LeakageReport report;
};

/// Drops every record whose (dataset, video_id) is excluded.
FilterResult leakage_filter(const CorpusManifest& manifest, const std::set<VideoKey>& excluded);

/// Videos present in both the manifest and `excluded`, sorted.
std::vector<VideoKey> find_leaks(const CorpusManifest& manifest, const std::set<VideoKey>& excluded);

CorpusManifest synthetic_filter(const CorpusManifest& manifest);

}  // namespace endomim
