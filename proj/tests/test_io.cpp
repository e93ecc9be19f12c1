// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "endomim/error.hpp"
#include "endomim/io/checkpoint.hpp"
#include "endomim/io/png_io.hpp"
#include "endomim/pipeline/run_config.hpp"

using namespace endomim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "endomim_test_io";
  fs::create_directories(dir);
  return dir / name;
}

/// Bitwise reflected CRC-32 (polynomial 0xEDB88320), independent of zlib.
std::uint32_t crc32_oracle(const std::uint8_t* data, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= data[i];
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

Checkpoint sample_checkpoint() {
  std::mt19937_64 rng(3);
  Checkpoint c;
  c.header["kind"] = "mae";
  c.header["note"] = {{"epochs", 15}};
  c.tensors.add("zeta.weight", xavier_uniform<float>(3, 4, rng));
  c.tensors.add("alpha.bias", normal_init<float>({1, 5}, 1.0, rng));
  c.tensors.add("mid.table", normal_init<float>({2, 3, 2}, 1.0, rng));
  return c;
}

}  // namespace

TEST(Png, RoundTripOfQuantizedImage) {
  std::mt19937_64 rng(0);
  Tensor<float> img({5, 7, 3});
  for (Index i = 0; i < img.size(); ++i) img[i] = static_cast<float>((rng() % 256) / 255.0);
  const auto path = scratch("rt.png");
  write_png(path, img);
  EXPECT_EQ(read_png(path), img);
  EXPECT_THROW(read_png(scratch("missing.png")), IoError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = sample_checkpoint();
  const auto path = scratch("a.ckpt");
  save_checkpoint(path, c);
  const auto loaded = load_checkpoint(path);
  for (const auto& e : c.tensors) EXPECT_EQ(loaded.tensors[e.name], e.value) << e.name;
  EXPECT_EQ(loaded.header["kind"], "mae");
  // Stored in name order, and load -> save reproduces the byte stream.
  EXPECT_EQ(loaded.tensors.entry(0).name, "alpha.bias");
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(c));
}

TEST(Checkpoint, HeaderChecksumMatchesIndependentCrc) {
  const auto c = sample_checkpoint();
  const auto bytes = serialize_checkpoint(c);
  const auto table = tensor_table_bytes(c.tensors);
  const auto header = deserialize_checkpoint(bytes).header;
  EXPECT_EQ(header["payload_crc32"].get<std::uint32_t>(), crc32_oracle(table.data(), table.size()));
  std::uint32_t trailing;
  std::memcpy(&trailing, bytes.data() + bytes.size() - 4, 4);
  EXPECT_EQ(trailing, crc32_oracle(bytes.data(), bytes.size() - 4));
  // The table sits immediately before the trailing checksum.
  EXPECT_TRUE(std::equal(table.begin(), table.end(), bytes.end() - 4 - static_cast<std::ptrdiff_t>(table.size())));
}

TEST(Checkpoint, EveryTruncationFailsCleanly) {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_THROW(deserialize_checkpoint(cut), IoError) << n;
  }
}

TEST(Checkpoint, RejectsVersionMagicAndCorruption) {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  auto bad_version = bytes;
  bad_version[8] = 9;
  try {
    deserialize_checkpoint(bad_version);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), IoError);
  auto flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x40;
  EXPECT_THROW(deserialize_checkpoint(flipped), IoError);
  auto bad_header = bytes;
  bad_header[20] = '#';
  try {
    deserialize_checkpoint(bad_header);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 20"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, LoadParametersChecksShapes) {
  const auto c = sample_checkpoint();
  ParameterSet<float> model;
  model.add("alpha.bias", Tensor<float>({1, 5}));
  load_parameters(model, c.tensors);
  EXPECT_EQ(model["alpha.bias"], c.tensors["alpha.bias"]);
  ParameterSet<float> wrong;
  wrong.add("alpha.bias", Tensor<float>({1, 6}));
  EXPECT_THROW(load_parameters(wrong, c.tensors), DimensionError);
  ParameterSet<float> missing;
  missing.add("beta", Tensor<float>({1, 1}));
  EXPECT_THROW(load_parameters(missing, c.tensors), DimensionError);
  EXPECT_EQ(select_prefix(c.tensors, "m").size(), 1u);
}

TEST(RunConfig, JsonRoundTrip) {
  auto c = default_run_config(Task::triplet);
  c.seeds = {4, 5};
  c.manifests["test"] = "x.jsonl";
  c.focal.gamma = 1.5;
  c.schedule.peak_lr = 2e-4;
  const auto back = apply_json(RunConfig{}, to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_NO_THROW(back.validate());
}

TEST(RunConfig, PartialOverrideAndRejections) {
  const auto c = apply_json(RunConfig{}, nlohmann::json{{"schedule", {{"peak_lr", 1e-4}}}});
  EXPECT_EQ(c.schedule.peak_lr, 1e-4);
  EXPECT_EQ(c.schedule.total_epochs, 15);
  EXPECT_THROW(apply_json(RunConfig{}, nlohmann::json{{"shedule", 1}}), ConfigError);
  EXPECT_THROW(apply_json(RunConfig{}, nlohmann::json{{"batch_size", "many"}}), ConfigError);
  auto bad = RunConfig{};
  bad.seeds.clear();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.preset = "huge";
  EXPECT_THROW(bad.validate(), ConfigError);
}
