// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "edaq/diffuse/sampler.hpp"
#include "edaq/diffuse/schedule.hpp"
#include "edaq/quant/quantized_model.hpp"

namespace edaq::metrics {

struct TrajectoryMse {
  std::vector<std::int64_t> t;  // sampling order
  std::vector<double> mse;      // mean over the batch of ||eps_fp - eps_q||^2
  double auc() const;           // sum over steps
  nlohmann::json to_json() const;
};

/// Teacher-forced per-step error: both models see the FP trajectory states.
TrajectoryMse trajectory_mse(const net::Model& fp, const quant::QuantizedModel& q, const diffuse::NoiseSchedule& sched,
                             const diffuse::SamplerConfig& cfg, std::size_t batch);

struct FrechetResult {
  double distance = 0.0;
  bool rank_deficient = false;
  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMinFrechetSamples = 256;

/// Frechet distance between Gaussians fitted to two sample sets [N, D...]
/// (features are the flattened samples). A ridge of 1e-6 is added to both
/// covariances when N <= D.
FrechetResult frechet_proxy(const nd::Tensor& a, const nd::Tensor& b);

/// Same, on row-major [n, d] double matrices.
FrechetResult frechet_distance(const std::vector<double>& a, std::size_t na, const std::vector<double>& b,
                               std::size_t nb, std::size_t d);

}  // namespace edaq::metrics
