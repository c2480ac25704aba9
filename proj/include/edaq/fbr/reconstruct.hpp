// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/net/model.hpp"
#include "edaq/quant/quantized_model.hpp"
#include "edaq/tdac/calibration.hpp"

namespace edaq::fbr {

enum class Method { fbr, block_wise, layer_wise };

std::string to_string(Method m);
Method parse_method(const std::string& s);

/// Raised when the reconstruction loss becomes NaN or infinite.
class ReconstructionError : public std::runtime_error {
 public:
  ReconstructionError(const std::string& unit, std::int64_t iteration);
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

struct RoundingReg {
  double beta_start = 20.0;
  double beta_end = 2.0;
  double weight = 0.01;
  /// Leading fraction of iterations without the regularizer.
  double warmup = 0.2;
};

struct ReconConfig {
  Method method = Method::fbr;
  double gamma = 1.0;
  std::int64_t iters = 2000;
  std::int64_t batch = 32;
  double lr_rounding = 1e-3;
  double lr_act_scale = 4e-5;
  RoundingReg reg;
  std::uint64_t seed = 0;
  /// Keep every iteration in the loss records.
  bool keep_trace = true;

  /// gamma actually used in the loss (0 for block_wise and layer_wise).
  double effective_gamma() const { return method == Method::fbr ? gamma : 0.0; }
  nlohmann::json to_json() const;
};

/// Annealed regularizer exponent at an iteration; 0 during warmup.
double reg_beta(const RoundingReg& r, std::int64_t iter, std::int64_t iters);

struct IterRecord {
  double L_b = 0.0;
  std::vector<double> L_m;  // one per front layer
  double reg = 0.0;
  double L = 0.0;

  double L_m_sum() const;
};

struct BlockLossRecord {
  std::string name;
  std::string kind;  // block kind or "layer"
  std::vector<std::string> front_layers;
  std::int64_t iters = 0;
  double gamma = 0.0;
  IterRecord first;
  IterRecord last;
  std::vector<IterRecord> trace;
  /// Block loss over the whole calibration set before and after (hardened).
  double calib_L_b_start = 0.0;
  double calib_L_b_end = 0.0;
  double calib_L_m_start = 0.0;
  double calib_L_m_end = 0.0;
  bool warning_non_decreasing = false;

  nlohmann::json to_json() const;
};

/// Inputs and full-precision targets of one reconstruction unit over the
/// calibration set.
struct BlockTargets {
  std::vector<nd::Tensor> inputs;             // quantized-prefix inputs
  nd::Tensor output;                          // FP unit output
  std::map<std::string, nd::Tensor> front;    // FP front-layer outputs
};

/// A block, or a single layer when `layer` is set.
struct Unit {
  std::string name;
  bool layer = false;
  std::string kind;
  std::vector<std::string> layers;
  std::vector<std::string> front_layers;
};

/// Reconstruction units in forward order for the given method.
std::vector<Unit> make_units(const net::Model& model, Method method);

BlockTargets block_targets(const net::Model& fp, const quant::QuantizedModel& qm, const tdac::CalibrationSet& calib,
                           const Unit& unit, std::size_t chunk = 64);

/// Channel-summed squared error averaged over the remaining axes.
nd::Tensor recon_loss(const nd::Tensor& out, const nd::Tensor& target);

BlockLossRecord reconstruct_block(quant::QuantizedModel& qm, const Unit& unit, const BlockTargets& targets,
                                  const ReconConfig& cfg);

struct ReconResult {
  quant::QuantizedModel model;
  std::vector<BlockLossRecord> records;

  nlohmann::json report() const;
  void write_trace_csv(const std::filesystem::path& path) const;
};

using ReconProgress = std::function<void(const std::string& unit, std::size_t index, std::size_t count)>;

/// Sequential reconstruction of every unit; `qm` must have quantizers
/// attached and range-initialized.
ReconResult reconstruct_model(const net::Model& fp, quant::QuantizedModel qm, const tdac::CalibrationSet& calib,
                              const ReconConfig& cfg, const ReconProgress& progress = {});

}  // namespace edaq::fbr
