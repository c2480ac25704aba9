// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/diffuse/sampler.hpp"
#include "edaq/diffuse/schedule.hpp"
#include "edaq/diffuse/train.hpp"
#include "edaq/fbr/reconstruct.hpp"
#include "edaq/metrics/compression.hpp"
#include "edaq/metrics/diagnostics.hpp"
#include "edaq/metrics/fidelity.hpp"
#include "edaq/net/checkpoint.hpp"
#include "edaq/pipeline/config.hpp"
#include "edaq/quant/quantized_model.hpp"
#include "edaq/tdac/calibration.hpp"

namespace edaq::pipeline {

/// An input artifact is absent; the message names the command producing it.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Log = std::function<void(const std::string&)>;

/// File names inside the output directory.
struct Artifacts {
  std::filesystem::path dir;

  std::filesystem::path fp_checkpoint() const { return dir / "fp.ckpt"; }
  std::filesystem::path train_log() const { return dir / "train.json"; }
  std::filesystem::path trajectory() const { return dir / "trajectory.bin"; }
  std::filesystem::path diagnostics() const { return dir / "diagnostics.json"; }
  std::filesystem::path scores_csv() const { return dir / "scores.csv"; }
  std::filesystem::path scores_json() const { return dir / "scores.json"; }
  std::filesystem::path calibration() const { return dir / "calib.bin"; }
  std::filesystem::path wq_checkpoint() const { return dir / "wq.ckpt"; }
  std::filesystem::path loss_report() const { return dir / "loss_report.json"; }
  std::filesystem::path loss_trace() const { return dir / "loss_trace.csv"; }
  std::filesystem::path samples() const { return dir / "samples.bin"; }
  std::filesystem::path fidelity() const { return dir / "fidelity.json"; }
  std::filesystem::path trajectory_mse_csv() const { return dir / "trajectory_mse.csv"; }
  std::filesystem::path compression_json() const { return dir / "compression.json"; }
  std::filesystem::path compression_csv() const { return dir / "compression.csv"; }
  std::filesystem::path ablate_json() const { return dir / "ablate.json"; }
  std::filesystem::path ablate_md() const { return dir / "ablate.md"; }
  std::filesystem::path report_json() const { return dir / "report.json"; }
  std::filesystem::path report_md() const { return dir / "report.md"; }
};

/// Seeds of the named random streams of one run.
std::uint64_t stream_seed(const RunConfig& cfg, const std::string& stream);

diffuse::NoiseSchedule schedule_for(const RunConfig& cfg);
diffuse::SamplerConfig sampler_for(const RunConfig& cfg, const std::string& stream);

// In-memory stages.

struct TrainOutput {
  net::Checkpoint checkpoint;
  diffuse::TrainResult result;
};
TrainOutput train_stage(const RunConfig& cfg, const Log& log = {});

diffuse::Trajectory profile_stage(const net::Model& fp, const RunConfig& cfg);

struct CalibrateOutput {
  tdac::CalibrationSet calib;
  std::optional<tdac::ScoreTable> table;  // tdac only
};
CalibrateOutput calibrate_stage(const diffuse::Trajectory& traj, const RunConfig& cfg);

/// Attaches quantizers from the calibration set and reconstructs.
fbr::ReconResult quantize_stage(const net::Model& fp, const tdac::CalibrationSet& calib, const RunConfig& cfg,
                                const Log& log = {});

/// DDIM samples from x_T drawn on the "eval" stream.
nd::Tensor generate(const net::Model& model, const net::LayerFn& exec, const RunConfig& cfg, std::size_t n);

/// Held-out training-distribution samples.
nd::Tensor heldout_data(const RunConfig& cfg, std::size_t n);

struct FidelityReport {
  metrics::TrajectoryMse trajectory_mse;
  metrics::FrechetResult q_vs_fp;    // quantized vs FP samples, same x_T
  metrics::FrechetResult q_vs_data;  // quantized samples vs held-out data
  metrics::FrechetResult fp_vs_data;
  nlohmann::json to_json() const;
};
FidelityReport evaluate_stage(const net::Model& fp, const quant::QuantizedModel& q, const RunConfig& cfg,
                              const nd::Tensor* fp_samples = nullptr, const nd::Tensor* data = nullptr);

/// One cell of the ablation grid for a single seed.
struct CellResult {
  std::string strategy;
  std::string recon;
  std::uint64_t seed = 0;
  double frechet = 0.0;  // quantized vs FP samples
  double traj_mse_auc = 0.0;
  std::vector<fbr::BlockLossRecord> records;
  nlohmann::json to_json() const;
};

// Commands operating on the artifacts in cfg.out.

void cmd_train(const RunConfig& cfg, const Log& log);
void cmd_profile(const RunConfig& cfg, const Log& log);
void cmd_calibrate(const RunConfig& cfg, const Log& log);
void cmd_quantize(const RunConfig& cfg, const Log& log);
void cmd_sample(const RunConfig& cfg, bool full_precision, const Log& log);
void cmd_evaluate(const RunConfig& cfg, const Log& log);
void cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& strategies,
                const std::vector<std::string>& methods, const Log& log);
void cmd_report(const RunConfig& cfg, const Log& log);

/// Loads an artifact or raises MissingArtifactError naming `producer`.
net::Checkpoint require_checkpoint(const std::filesystem::path& path, const std::string& producer);
diffuse::Trajectory require_trajectory(const std::filesystem::path& path, const std::string& producer);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace edaq::pipeline
