// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/nd/tensor.hpp"

namespace edaq::net {

/// Base class of all container read/write failures.
class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class VersionMismatchError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

class TruncatedBlobError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

/// Metadata that disagrees with itself or with the model it is loaded into.
class MetadataMismatchError : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  nlohmann::json meta;  // without the "tensors" manifest
  std::vector<nd::NamedTensor> tensors;

  const nd::Tensor* find(const std::string& name) const;
};

/// "EDAQ" | u32 version | u64 metadata length | JSON metadata | f32 blobs.
/// All integers and floats little-endian. The manifest is written under
/// meta["tensors"].
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

std::string serialize_container(const Container& c);
Container parse_container(const std::string& bytes, const std::string& origin = "<memory>");

}  // namespace edaq::net
