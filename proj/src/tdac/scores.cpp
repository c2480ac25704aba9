// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/tdac/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace edaq::tdac {

double mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("mse: length mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

std::vector<std::int64_t> density_scores(const Features& F, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("density_scores: epsilon must be > 0");
  const std::size_t n = F.size();
  std::vector<std::int64_t> D(n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i == t || mse(F[t], F[i]) < epsilon) ++D[t];
    }
  }
  return D;
}

std::vector<double> variety_scores(const Features& F) {
  const std::size_t n = F.size();
  std::vector<double> V(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < n; ++i) V[t] += 1.0 - cosine_similarity(F[t], F[i]);
  }
  return V;
}

Scaled min_max_scale(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("min_max_scale: empty input");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  Scaled s;
  s.values.resize(v.size(), 0.0);
  if (*hi == *lo) {
    s.degenerate = true;
    return s;
  }
  for (std::size_t i = 0; i < v.size(); ++i) s.values[i] = (v[i] - *lo) / (*hi - *lo);
  return s;
}

std::vector<std::int64_t> allocate(std::span<const double> S, std::int64_t N) {
  if (N < 1) throw std::invalid_argument("allocate: N must be >= 1");
  if (S.empty()) throw std::invalid_argument("allocate: no scores");
  double total = 0.0;
  for (double s : S) {
    if (s < 0.0 || !std::isfinite(s)) throw std::invalid_argument("allocate: scores must be finite and >= 0");
    total += s;
  }
  const std::size_t n = S.size();
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = total > 0.0 ? S[i] * static_cast<double>(N) / total : static_cast<double>(N) / static_cast<double>(n);
  }
  std::vector<std::int64_t> X(n);
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    X[i] = static_cast<std::int64_t>(std::floor(raw[i]));
    assigned += X[i];
  }
  // Remainders on a 1e-9 grid so that equal fractions with different
  // integer parts still tie.
  std::vector<std::int64_t> rem(n);
  for (std::size_t i = 0; i < n; ++i) rem[i] = std::llround((raw[i] - std::floor(raw[i])) * 1e9);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  // Floating-point slack can leave assigned slightly off N in either direction.
  for (std::size_t k = 0; assigned < N; k = (k + 1) % n) {
    ++X[order[k]];
    ++assigned;
  }
  for (std::size_t k = n; assigned > N;) {
    k = (k == 0 ? n : k) - 1;
    if (X[order[k]] > 0) {
      --X[order[k]];
      --assigned;
    }
  }
  return X;
}

double default_epsilon(const Features& F) {
  std::vector<double> d;
  for (std::size_t i = 0; i < F.size(); ++i) {
    for (std::size_t j = i + 1; j < F.size(); ++j) d.push_back(mse(F[i], F[j]));
  }
  if (d.empty()) return 1.0;
  std::sort(d.begin(), d.end());
  const double pos = 0.25 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  const double e = d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
  // Strict "<" in the density count needs a positive threshold.
  return e > 0.0 ? e : std::numeric_limits<double>::min();
}

}  // namespace edaq::tdac
