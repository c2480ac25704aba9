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

#include "edaq/diffuse/sampler.hpp"
#include "edaq/nd/tensor.hpp"
#include "edaq/tdac/scores.hpp"

namespace edaq::tdac {

enum class Strategy { tdac, equal_spaced, normal_density, random, single_step };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

/// Raised when a step needs more samples than the profiling batch holds.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoreRow {
  std::int64_t t = 0;
  std::int64_t D = 0;
  double V = 0.0;
  double D_hat = 0.0;
  double V_hat = 0.0;
  double S = 0.0;
  std::int64_t X = 0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;  // ascending t
  double epsilon = 0.0;
  bool epsilon_default = true;
  double lambda = 1.0;
  std::int64_t N = 0;
  std::uint64_t seed = 0;
  bool density_degenerate = false;
  bool variety_degenerate = false;

  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json sidecar() const;
};

struct CalibrationSet {
  Strategy strategy = Strategy::tdac;
  nd::Tensor x;                 // [N, sample_shape...]
  std::vector<std::int64_t> t;  // one timestep per item
  nlohmann::json provenance;

  std::size_t size() const { return t.size(); }
};

void save_calibration(const CalibrationSet& c, const std::filesystem::path& path);
CalibrationSet load_calibration(const std::filesystem::path& path);

struct TdacOptions {
  std::optional<double> epsilon;  // default: 25th percentile of pairwise mse
  double lambda = 1.0;
  std::int64_t N = 1024;
  std::uint64_t seed = 0;
};

/// Score table for the per-step features only (no sample draw).
ScoreTable score_timesteps(const std::vector<std::int64_t>& t, const Features& F, const TdacOptions& opts);

struct TdacResult {
  ScoreTable table;
  CalibrationSet calib;
};

/// Scores the trajectory steps, allocates the budget and draws X_t items
/// from the step-t batch without replacement.
TdacResult build_tdac(const diffuse::Trajectory& traj, const TdacOptions& opts);

struct BaselineOptions {
  std::int64_t N = 1024;
  std::uint64_t seed = 0;
  std::int64_t single_t = 0;  // single_step only; must be a trajectory timestep
};

CalibrationSet baseline_calibration(const diffuse::Trajectory& traj, Strategy strategy, const BaselineOptions& opts);

/// Per-step counts proportional to a normal density over t (mean 0.4 T,
/// std 0.4 T) evaluated on the given timesteps.
std::vector<std::int64_t> normal_density_counts(const std::vector<std::int64_t>& t, int T, std::int64_t N);

/// Draws counts[i] items from the step whose timestep is t[i].
CalibrationSet draw_items(const diffuse::Trajectory& traj, const std::vector<std::int64_t>& t,
                          const std::vector<std::int64_t>& counts, Strategy strategy, std::uint64_t seed);

}  // namespace edaq::tdac
