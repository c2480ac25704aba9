// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace edaq::pipeline {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully resolved run configuration. Every field has a default; values are
/// overridden by a key=value file and then by command-line flags.
struct RunConfig {
  std::string arch = "tiny_unet";
  std::string dataset = "shapes8x8";
  int T = 1000;
  int steps = 100;
  double eta = 0.0;
  int bits_w = 4;
  int bits_a = 8;
  std::optional<double> epsilon;
  double lambda = 1.0;
  double gamma = 1.0;
  std::int64_t calib_size = 1024;
  std::string strategy = "tdac";
  std::int64_t single_t = 0;
  std::string recon = "fbr";
  std::int64_t train_iters = 2000;
  std::int64_t train_batch = 64;
  double train_lr = 2e-3;
  std::int64_t profile_batch = 64;
  std::int64_t recon_iters = 2000;
  std::int64_t recon_batch = 32;
  std::int64_t eval_samples = 512;
  std::int64_t eval_batch = 64;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string out = "runs/default";
  int threads = 0;  // 0: EDAQ_THREADS or all cores

  /// Sets one field from its textual value; keys use snake_case or dashes.
  void set(const std::string& key, const std::string& value);
  /// Checks ranges and enum values.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// Known keys, in declaration order.
const std::vector<std::string>& config_keys();

/// Applies a key=value file ('#' starts a comment) on top of `base`.
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace edaq::pipeline
