// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edaq/nd/tensor.hpp"

namespace edaq::diffuse {

enum class ScheduleKind { linear };

/// Per-step arrays indexed by t in [0, T).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  /// Posterior std sqrt(beta_t (1 - abar_{t-1}) / (1 - abar_t)); sigma_0 = 0.
  std::vector<double> sigmas;

  /// abar_t, with abar_{-1} = 1 (the clean-data end of the chain).
  double alpha_bar(std::int64_t t) const;
};

/// Linear betas spanning [0.1/T, 20/T], which is [1e-4, 0.02] at T = 1000.
NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::linear);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise, with one t per sample.
nd::Tensor q_sample(const nd::Tensor& x0, std::span<const std::int64_t> t, const nd::Tensor& noise,
                    const NoiseSchedule& sched);

}  // namespace edaq::diffuse
