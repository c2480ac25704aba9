// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/diffuse/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace edaq::diffuse {

double NoiseSchedule::alpha_bar(std::int64_t t) const {
  if (t == -1) return 1.0;
  if (t < -1 || t >= T) throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                                                std::to_string(T) + ")");
  return alpha_bars[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
  if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
  if (kind != ScheduleKind::linear) throw std::invalid_argument("make_schedule: unknown kind");
  NoiseSchedule s;
  s.T = T;
  const double scale = 1000.0 / T;
  // Capped below 1 for very short chains (T < 21).
  const double lo = std::min(1e-4 * scale, 0.5), hi = std::min(0.02 * scale, 0.999);
  double abar = 1.0;
  for (int t = 0; t < T; ++t) {
    const double beta = lo + (hi - lo) * t / (T - 1);
    const double prev = abar;
    abar *= 1.0 - beta;
    s.betas.push_back(beta);
    s.alphas.push_back(1.0 - beta);
    s.alpha_bars.push_back(abar);
    s.sigmas.push_back(t == 0 ? 0.0 : std::sqrt(beta * (1.0 - prev) / (1.0 - abar)));
  }
  return s;
}

nd::Tensor q_sample(const nd::Tensor& x0, std::span<const std::int64_t> t, const nd::Tensor& noise,
                    const NoiseSchedule& sched) {
  if (x0.shape() != noise.shape()) throw nd::ShapeError("q_sample", {x0.shape(), noise.shape()});
  if (x0.rank() == 0 || static_cast<std::int64_t>(t.size()) != x0.dim(0)) {
    throw nd::ShapeError("q_sample", {x0.shape()}, "one timestep per sample required");
  }
  const std::size_t per = static_cast<std::size_t>(x0.numel()) / t.size();
  auto xd = x0.data(), nd_ = noise.data();
  std::vector<float> out(xd.size());
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (t[n] < 0 || t[n] >= sched.T) throw std::out_of_range("q_sample: timestep out of range");
    const double ab = sched.alpha_bars[static_cast<std::size_t>(t[n])];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) out[i] = static_cast<float>(a * xd[i] + b * nd_[i]);
  }
  return nd::Tensor(x0.shape(), std::move(out));
}

}  // namespace edaq::diffuse
