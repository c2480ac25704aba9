// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/diffuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace edaq::diffuse {

std::string to_string(Dataset d) { return d == Dataset::shapes8x8 ? "shapes8x8" : "moons2d"; }

Dataset parse_dataset(const std::string& s) {
  if (s == "shapes8x8") return Dataset::shapes8x8;
  if (s == "moons2d") return Dataset::moons2d;
  throw std::invalid_argument("unknown dataset: " + s);
}

namespace {

constexpr int kSide = 8;

void draw_shape(float* img, nd::Rng& rng) {
  std::fill_n(img, kSide * kSide, -1.0f);
  auto set = [img](int y, int x) {
    if (y >= 0 && y < kSide && x >= 0 && x < kSide) img[y * kSide + x] = 1.0f;
  };
  const int kind = static_cast<int>(rng.below(4));
  if (kind == 0 || kind == 1) {
    // Bar: horizontal or vertical, thickness 1-2, length 4-8.
    const int thick = 1 + static_cast<int>(rng.below(2));
    const int len = 4 + static_cast<int>(rng.below(5));
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(kSide - len + 1)));
    const int pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(kSide - thick + 1)));
    for (int a = 0; a < len; ++a) {
      for (int b = 0; b < thick; ++b) {
        if (kind == 0) set(pos + b, start + a);
        else set(start + a, pos + b);
      }
    }
  } else if (kind == 2) {
    // Cross with arm length 2-3 around an interior center.
    const int arm = 2 + static_cast<int>(rng.below(2));
    const int cy = arm + static_cast<int>(rng.below(static_cast<std::uint64_t>(kSide - 2 * arm)));
    const int cx = arm + static_cast<int>(rng.below(static_cast<std::uint64_t>(kSide - 2 * arm)));
    for (int d = -arm; d <= arm; ++d) {
      set(cy + d, cx);
      set(cy, cx + d);
    }
  } else {
    // Disk, radius 1.5-3.
    const double r = rng.uniform(1.5, 3.0);
    const double cy = rng.uniform(r - 0.5, kSide - r - 0.5);
    const double cx = rng.uniform(r - 0.5, kSide - r - 0.5);
    for (int y = 0; y < kSide; ++y) {
      for (int x = 0; x < kSide; ++x) {
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) set(y, x);
      }
    }
  }
}

}  // namespace

nd::Tensor sample_dataset(Dataset d, std::size_t n, nd::Rng& rng) {
  const auto ni = static_cast<std::int64_t>(n);
  if (d == Dataset::shapes8x8) {
    std::vector<float> v(n * kSide * kSide);
    for (std::size_t i = 0; i < n; ++i) draw_shape(v.data() + i * kSide * kSide, rng);
    return nd::Tensor({ni, 1, kSide, kSide}, std::move(v));
  }
  // Two moons, centred and scaled to roughly unit variance.
  std::vector<float> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool upper = rng.below(2) == 0;
    const double th = rng.uniform() * std::numbers::pi;
    double x = upper ? std::cos(th) : 1.0 - std::cos(th);
    double y = upper ? std::sin(th) : 0.5 - std::sin(th);
    x += 0.05 * rng.normal();
    y += 0.05 * rng.normal();
    v[2 * i] = static_cast<float>((x - 0.5) / 0.87);
    v[2 * i + 1] = static_cast<float>((y - 0.25) / 0.5);
  }
  return nd::Tensor({ni, 2}, std::move(v));
}

}  // namespace edaq::diffuse
