// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "endomim/numerics/parameters.hpp"

namespace endomim {

inline constexpr std::array<char, 8> kCheckpointMagic{'E', 'M', 'I', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout, all integers little-endian:
///   magic[8] | u32 version | u64 header_len | header JSON
///   | u64 tensor_count | per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f32 payload
///   | u32 crc32 of every preceding byte
/// The header's "payload_crc32" covers the tensor table alone. Tensors are
/// stored sorted by name, so load followed by save reproduces the bytes.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  ParameterSet<float> tensors;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The serialized tensor table, the bytes covered by "payload_crc32".
std::vector<std::uint8_t> tensor_table_bytes(const ParameterSet<float>& tensors);

/// Copies every tensor of `target` from `source` (matched by name). Missing
/// names or differing shapes raise DimensionError naming the tensor.
void load_parameters(ParameterSet<float>& target, const ParameterSet<float>& source);

/// Subset of `source` whose names start with `prefix`.
ParameterSet<float> select_prefix(const ParameterSet<float>& source, const std::string& prefix);

}  // namespace endomim
