// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/net/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace edaq::net {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

constexpr char kMagic[4] = {'E', 'D', 'A', 'Q'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

}  // namespace

const nd::Tensor* Container::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.tensor;
  }
  return nullptr;
}

std::string serialize_container(const Container& c) {
  nlohmann::json meta = c.meta;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : c.tensors) {
    manifest.push_back({{"name", t.name},
                        {"shape", t.tensor.shape()},
                        {"dtype", "float32"},
                        {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.tensor.numel()) * sizeof(float);
  }
  meta["tensors"] = std::move(manifest);
  const std::string text = meta.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& t : c.tensors) {
    auto d = t.tensor.data();
    out.append(reinterpret_cast<const char*>(d.data()), d.size_bytes());
  }
  return out;
}

Container parse_container(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError(origin + ": bad magic");
  }
  if (bytes.size() < 16) throw TruncatedBlobError(origin + ": truncated header");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kContainerVersion) {
    throw VersionMismatchError(origin + ": version mismatch (file " + std::to_string(version) +
                               ", expected " + std::to_string(kContainerVersion) + ")");
  }
  const auto meta_len = get<std::uint64_t>(bytes, 8);
  if (meta_len > bytes.size() - 16) throw TruncatedBlobError(origin + ": truncated metadata");

  Container c;
  try {
    c.meta = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw MetadataMismatchError(origin + ": unreadable metadata: " + e.what());
  }
  if (!c.meta.is_object() || !c.meta.contains("tensors") || !c.meta["tensors"].is_array()) {
    throw MetadataMismatchError(origin + ": metadata has no tensor manifest");
  }
  const std::size_t blob_start = 16 + meta_len;
  const std::size_t blob_len = bytes.size() - blob_start;
  std::uint64_t expected_offset = 0;
  for (const auto& entry : c.meta["tensors"]) {
    std::string name;
    nd::Shape shape;
    std::uint64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<nd::Shape>();
      offset = entry.at("offset").get<std::uint64_t>();
      if (entry.at("dtype").get<std::string>() != "float32") {
        throw MetadataMismatchError(origin + ": tensor " + name + " has unsupported dtype");
      }
    } catch (const nlohmann::json::exception& e) {
      throw MetadataMismatchError(origin + ": malformed manifest entry: " + e.what());
    }
    for (auto d : shape) {
      if (d < 0) throw MetadataMismatchError(origin + ": tensor " + name + " has a negative dimension");
    }
    if (offset != expected_offset) {
      throw MetadataMismatchError(origin + ": tensor " + name + " offset disagrees with manifest order");
    }
    const std::uint64_t nbytes = static_cast<std::uint64_t>(nd::numel(shape)) * sizeof(float);
    if (offset + nbytes > blob_len) {
      throw TruncatedBlobError(origin + ": truncated blob for tensor " + name);
    }
    std::vector<float> data(static_cast<std::size_t>(nd::numel(shape)));
    std::memcpy(data.data(), bytes.data() + blob_start + offset, nbytes);
    c.tensors.push_back({name, nd::Tensor(shape, std::move(data))});
    expected_offset = offset + nbytes;
  }
  if (expected_offset != blob_len) {
    throw MetadataMismatchError(origin + ": " + std::to_string(blob_len - expected_offset) +
                                " trailing bytes after the last blob");
  }
  c.meta.erase("tensors");
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const std::string bytes = serialize_container(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContainerError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ContainerError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_container(ss.str(), path.string());
}

}  // namespace edaq::net
