// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace edaq::nd {

/// Seed for a named sub-stream of a root seed ("train", "profile", ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

/// mt19937_64 with distribution code written out here, so draws are the
/// same across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n), n > 0; rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, both values used).
  double normal();

  std::vector<float> normal_vector(std::size_t n);
  /// Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace edaq::nd
