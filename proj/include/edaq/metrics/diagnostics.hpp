// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/diffuse/sampler.hpp"
#include "edaq/net/model.hpp"
#include "edaq/tdac/calibration.hpp"

namespace edaq::metrics {

/// Cosine distance between the features of consecutive sampling steps.
struct DifCurve {
  std::vector<std::int64_t> t;  // the later step of each adjacent pair
  std::vector<double> dif;
  double avg = 0.0;
  double range = 0.0;
  nlohmann::json to_json() const;
};

DifCurve dif_curve(const diffuse::Trajectory& traj);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> mass;  // normalized to 1

  double bin_width() const { return (hi - lo) / static_cast<double>(mass.size()); }
};

Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins);
/// 1-Wasserstein distance between histograms on the same bins.
double wasserstein1(const Histogram& a, const Histogram& b);

/// Flattened mid-tap features of every sample, [N][F].
std::vector<std::vector<double>> mid_features(const net::Model& model, const nd::Tensor& x,
                                              std::span<const std::int64_t> t, std::size_t chunk = 64);

struct DistanceHistograms {
  Histogram overall;
  std::vector<std::string> names;
  std::vector<Histogram> sets;
  std::vector<double> w1;  // to the overall histogram
  nlohmann::json to_json() const;
};

/// Histograms of mid-tap distances to the geometric center of all
/// trajectory samples, for the whole trajectory and for each calibration set.
DistanceHistograms distance_histograms(const net::Model& model, const diffuse::Trajectory& traj,
                                       const std::vector<tdac::CalibrationSet>& sets, std::size_t bins = 40);

}  // namespace edaq::metrics
