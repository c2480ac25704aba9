// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "edaq/diffuse/schedule.hpp"
#include "edaq/net/model.hpp"

namespace edaq::diffuse {

struct SamplerConfig {
  int steps = 100;
  double eta = 0.0;
  std::uint64_t seed = 0;
};

/// Descending sub-sampled timesteps: t_i = floor(i T / steps) for
/// i = steps-1 .. 0. The step after t = grid[0] ends at t_prev = -1.
std::vector<std::int64_t> timestep_grid(int T, int steps);

/// One DDIM update from t to t_prev, given the noise prediction eps.
/// t_prev = -1 denotes the final step onto the data (abar = 1).
nd::Tensor ddim_step(const nd::Tensor& x_t, const nd::Tensor& eps, std::int64_t t, std::int64_t t_prev,
                     double eta, const NoiseSchedule& sched, const nd::Tensor& noise);

/// Same update with eps predicted by `model` (optionally through `exec`).
nd::Tensor ddim_step(const net::Model& model, const net::LayerFn& exec, const nd::Tensor& x_t,
                     std::int64_t t, std::int64_t t_prev, double eta, const NoiseSchedule& sched,
                     const nd::Tensor& noise);

struct TrajectoryStep {
  std::int64_t t = 0;
  nd::Tensor x;           // model input x_t for the whole batch
  std::vector<float> F;   // batch mean of the flattened mid-tap output
  /// Batch mean of every layer output, only with capture_layers.
  std::map<std::string, std::vector<float>> layer_means;
};

struct Trajectory {
  int T = 0;
  SamplerConfig sampler;
  nd::Tensor x_T;
  nd::Tensor x0;
  std::vector<TrajectoryStep> steps;  // in sampling order (descending t)
};

/// Draws x_T ~ N(0, I) of shape [batch, sample_shape...] from the sampler seed.
nd::Tensor initial_noise(const net::Model& model, std::size_t batch, std::uint64_t seed);

/// Full sampling run recording every model input and the mid-tap features.
Trajectory run_trajectory(const net::Model& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                          std::size_t batch, bool capture_layers = false, const net::LayerFn& exec = {});

/// Sampling from a given x_T; returns x_0.
nd::Tensor sample(const net::Model& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                  const nd::Tensor& x_T, const net::LayerFn& exec = {});

/// Trajectory container: "step{t}.x", "step{t}.F", "x_T", "x0".
void save_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace edaq::diffuse
