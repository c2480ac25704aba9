// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "edaq/net/container.hpp"
#include "edaq/net/model.hpp"

namespace edaq::net {

struct Checkpoint {
  Model model;
  /// Free-form metadata stored next to the model (training record, run config).
  nlohmann::json info = nlohmann::json::object();
  /// Tensors that are not model parameters, e.g. "quant.*" entries.
  std::vector<nd::NamedTensor> extra;
};

Container to_container(const Checkpoint& ckpt);
Checkpoint from_container(const Container& c);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace edaq::net
