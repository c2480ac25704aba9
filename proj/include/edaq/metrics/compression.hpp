// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/net/model.hpp"

namespace edaq::metrics {

struct CompressionRow {
  std::string layer;
  bool quantized = false;
  std::int64_t macs = 0;     // per sample and denoising step
  std::int64_t weights = 0;
  std::int64_t biases = 0;
  int bits_w = 32;
  int bits_a = 32;
  double bops = 0.0;         // macs * bits_w * bits_a
  double size_bytes = 0.0;   // weights, biases and quantizer overhead
};

struct CompressionReport {
  int bits_w = 32;
  int bits_a = 32;
  std::vector<CompressionRow> rows;
  std::int64_t other_params = 0;  // norms and everything outside the layers
  double bops = 0.0;
  double fp_bops = 0.0;
  double size_bytes = 0.0;
  double fp_size_bytes = 0.0;
  double overhead_bytes = 0.0;
  /// Bops ratio restricted to the quantized layers.
  double quantized_bops_ratio = 1.0;

  double bops_ratio() const { return fp_bops / bops; }
  double size_ratio() const { return fp_size_bytes / size_bytes; }
  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Analytic Bops and storage of one denoising step. Quantized layers store
/// weights and biases at bits_w plus an fp32 scale and a bits_w zero point
/// per output channel, and an fp32 scale plus a bits_a zero point for the
/// input activation. Everything else is counted at 32 bits.
CompressionReport count_compression(const net::Model& model, int bits_w, int bits_a);

}  // namespace edaq::metrics
