// SPDX-License-Identifier: Apache-2.0
#include "endomim/data/manifest.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <tuple>

#include "endomim/error.hpp"

namespace endomim {

std::string to_string(Split split) {
  switch (split) {
    case Split::pretrain: return "pretrain";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "pretrain";
}

Split parse_split(const std::string& text) {
  if (text == "pretrain") return Split::pretrain;
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + text + "'");
}

CorpusManifest::CorpusManifest(std::vector<FrameRecord> records) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void CorpusManifest::add(FrameRecord record) {
  auto key = std::make_tuple(record.dataset, record.video_id, record.time_s);
  if (!keys_.insert(key).second) {
    throw ContractError("duplicate frame " + record.dataset + "/" + record.video_id + " @ " +
                        std::to_string(record.time_s) + "s");
  }
  records_.push_back(std::move(record));
}

std::map<std::string, std::size_t> CorpusManifest::counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& r : records_) ++out[r.dataset];
  return out;
}

std::set<VideoKey> CorpusManifest::videos() const {
  std::set<VideoKey> out;
  for (const auto& r : records_) out.insert(video_key(r));
  return out;
}

std::set<VideoKey> CorpusManifest::videos(Split split) const {
  std::set<VideoKey> out;
  for (const auto& r : records_) {
    if (r.split == split) out.insert(video_key(r));
  }
  return out;
}

CorpusManifest CorpusManifest::select(Split split) const {
  CorpusManifest out;
  for (const auto& r : records_) {
    if (r.split == split) out.add(r);
  }
  return out;
}

CorpusManifest CorpusManifest::select_videos(const std::set<VideoKey>& keep) const {
  CorpusManifest out;
  for (const auto& r : records_) {
    if (keep.count(video_key(r))) out.add(r);
  }
  return out;
}

namespace {

const char* const kKnownFields[] = {"dataset", "video_id", "frame_ref", "time_s", "split", "synthetic", "triplets", "phase"};

}  // namespace

nlohmann::json to_json(const FrameRecord& r) {
  nlohmann::json j = r.extra;
  j["dataset"] = r.dataset;
  j["video_id"] = r.video_id;
  j["frame_ref"] = r.frame_ref;
  j["time_s"] = r.time_s;
  j["split"] = to_string(r.split);
  j["synthetic"] = r.synthetic;
  if (r.triplets) {
    std::string bits;
    bits.reserve(r.triplets->size());
    for (auto b : *r.triplets) bits.push_back(b ? '1' : '0');
    j["triplets"] = bits;
  }
  if (r.phase) j["phase"] = *r.phase;
  return j;
}

FrameRecord frame_record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw IoError("manifest line is not an object");
  FrameRecord r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.video_id = j.at("video_id").get<std::string>();
    r.frame_ref = j.at("frame_ref").get<std::string>();
    r.time_s = j.at("time_s").get<double>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.synthetic = j.at("synthetic").get<bool>();
    if (j.contains("triplets")) {
      const auto bits = j.at("triplets").get<std::string>();
      std::vector<std::uint8_t> v;
      v.reserve(bits.size());
      for (char c : bits) {
        if (c != '0' && c != '1') throw IoError("triplet bitvector must contain only 0/1");
        v.push_back(c == '1');
      }
      r.triplets = std::move(v);
    }
    if (j.contains("phase")) r.phase = j.at("phase").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest record: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKnownFields) known = known || it.key() == k;
    if (!known) r.extra[it.key()] = it.value();
  }
  return r;
}

void write_manifest(std::ostream& out, const CorpusManifest& manifest) {
  for (const auto& r : manifest.records()) out << to_json(r).dump() << '\n';
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  write_manifest(out, manifest);
}

CorpusManifest read_manifest(std::istream& in) {
  CorpusManifest manifest;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      manifest.add(frame_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(number) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError("manifest line " + std::to_string(number) + ": " + e.what());
    }
  }
  return manifest;
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest " + path.string());
  return read_manifest(in);
}

FilterResult leakage_filter(const CorpusManifest& manifest, const std::set<VideoKey>& excluded) {
  FilterResult result;
  for (const auto& r : manifest.records()) {
    if (excluded.count(video_key(r))) {
      ++result.report.removed_per_dataset[r.dataset];
      ++result.report.total_removed;
    } else {
      result.manifest.add(r);
    }
  }
  if (!find_leaks(result.manifest, excluded).empty()) throw ContractError("leakage_filter post-condition violated");
  return result;
}

std::vector<VideoKey> find_leaks(const CorpusManifest& manifest, const std::set<VideoKey>& excluded) {
  std::vector<VideoKey> leaks;
  for (const auto& v : manifest.videos()) {
    if (excluded.count(v)) leaks.push_back(v);
  }
  return leaks;
}

CorpusManifest synthetic_filter(const CorpusManifest& manifest) {
  CorpusManifest out;
  for (const auto& r : manifest.records()) {
    if (!r.synthetic) out.add(r);
  }
  return out;
}

}  // namespace endomim
