// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace edaq::tdac {

using Features = std::vector<std::vector<float>>;

/// Mean squared difference of two equally long vectors, in double.
double mse(std::span<const float> a, std::span<const float> b);
/// Cosine similarity; 0 when either vector is all zeros.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// D_t = |{i : mse(F_t, F_i) < epsilon}|, i = t included.
std::vector<std::int64_t> density_scores(const Features& F, double epsilon);
/// V_t = sum_i (1 - cos(F_t, F_i)).
std::vector<double> variety_scores(const Features& F);

struct Scaled {
  std::vector<double> values;
  bool degenerate = false;  // max == min, all values set to 0
};
Scaled min_max_scale(std::span<const double> v);

/// Largest-remainder apportionment of N proportionally to S (ties go to the
/// lower index); uniform when sum(S) = 0.
std::vector<std::int64_t> allocate(std::span<const double> S, std::int64_t N);

/// 25th percentile (linear interpolation) of mse(F_i, F_j) over pairs i < j.
double default_epsilon(const Features& F);

}  // namespace edaq::tdac
