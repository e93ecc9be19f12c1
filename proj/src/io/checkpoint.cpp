// SPDX-License-Identifier: Apache-2.0
#include "endomim/io/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "endomim/error.hpp"

namespace endomim {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(size)));
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + size);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename T>
  T get(const char* what) {
    T value;
    std::memcpy(&value, take(sizeof(T), what), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t size, const char* what) {
    if (size > bytes_.size() - offset_) {
      throw IoError("checkpoint truncated at offset " + std::to_string(offset_) + " while reading " + what);
    }
    const auto* p = bytes_.data() + offset_;
    offset_ += size;
    return p;
  }
  std::size_t offset() const { return offset_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::size_t> name_order(const ParameterSet<float>& tensors) {
  std::vector<std::size_t> order(tensors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return tensors.entry(a).name < tensors.entry(b).name; });
  return order;
}

}  // namespace

std::vector<std::uint8_t> tensor_table_bytes(const ParameterSet<float>& tensors) {
  Writer w;
  w.put<std::uint64_t>(tensors.size());
  for (auto i : name_order(tensors)) {
    const auto& e = tensors.entry(i);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.put_bytes(e.value.data(), static_cast<std::size_t>(e.value.size()) * sizeof(float));
  }
  return std::move(w.bytes);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  const auto table = tensor_table_bytes(checkpoint.tensors);
  nlohmann::json header = checkpoint.header;
  header["payload_crc32"] = crc32_of(table.data(), table.size());
  const std::string text = header.dump();

  Writer w;
  w.put_bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text.data(), text.size());
  w.put_bytes(table.data(), table.size());
  w.put<std::uint32_t>(crc32_of(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto* magic = r.take(kCheckpointMagic.size(), "magic");
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), magic)) throw IoError("not a checkpoint: bad magic at offset 0");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.get<std::uint64_t>("header length");
  const std::size_t header_offset = r.offset();
  if (header_len > bytes.size()) throw IoError("checkpoint header length exceeds file size at offset " + std::to_string(header_offset));
  const auto* header_bytes = r.take(static_cast<std::size_t>(header_len), "header");

  Checkpoint out;
  try {
    out.header = nlohmann::json::parse(header_bytes, header_bytes + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header at offset " + std::to_string(header_offset) + ": " + e.what());
  }
  if (!out.header.is_object() || !out.header.contains("payload_crc32")) {
    throw IoError("corrupt checkpoint header at offset " + std::to_string(header_offset) + ": missing payload_crc32");
  }

  const std::size_t table_begin = r.offset();
  const auto count = r.get<std::uint64_t>("tensor count");
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const auto* name = r.take(name_len, "tensor name");
    const auto rank = r.get<std::uint32_t>("tensor rank");
    Shape shape;
    std::size_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("tensor dims");
      if (d == 0 || d > bytes.size()) throw IoError("corrupt tensor dimension at offset " + std::to_string(r.offset() - 8));
      shape.push_back(static_cast<Index>(d));
      elements *= static_cast<std::size_t>(d);
      if (elements > bytes.size()) throw IoError("corrupt tensor dimension at offset " + std::to_string(r.offset() - 8));
    }
    const auto* payload = r.take(elements * sizeof(float), "tensor payload");
    Tensor<float> tensor(shape);
    std::memcpy(tensor.data(), payload, elements * sizeof(float));
    out.tensors.add(std::string(reinterpret_cast<const char*>(name), name_len), std::move(tensor));
  }
  const std::size_t table_end = r.offset();
  const auto stored = r.get<std::uint32_t>("trailing checksum");
  if (r.offset() != bytes.size()) throw IoError("trailing bytes after checkpoint at offset " + std::to_string(r.offset()));
  if (stored != crc32_of(bytes.data(), table_end)) throw IoError("checkpoint checksum mismatch at offset " + std::to_string(table_end));
  if (out.header["payload_crc32"].get<std::uint32_t>() != crc32_of(bytes.data() + table_begin, table_end - table_begin)) {
    throw IoError("checkpoint payload checksum mismatch at offset " + std::to_string(table_begin));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void load_parameters(ParameterSet<float>& target, const ParameterSet<float>& source) {
  for (auto& e : target) {
    if (!source.contains(e.name)) throw DimensionError("checkpoint lacks tensor " + e.name);
    const auto& src = source[e.name];
    if (src.shape() != e.value.shape()) {
      throw DimensionError("tensor " + e.name + " has shape " + to_string(src.shape()) + ", model expects " + to_string(e.value.shape()));
    }
    e.value.flat() = src.flat();
  }
}

ParameterSet<float> select_prefix(const ParameterSet<float>& source, const std::string& prefix) {
  ParameterSet<float> out;
  for (const auto& e : source) {
    if (e.name.rfind(prefix, 0) == 0) out.add(e.name, e.value);
  }
  return out;
}

}  // namespace endomim
