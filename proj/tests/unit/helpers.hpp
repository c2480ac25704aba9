// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "edaq/nd/rng.hpp"
#include "edaq/nd/tensor.hpp"

namespace edaq::test {

inline nd::Tensor random_tensor(nd::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  nd::Rng rng(seed);
  std::vector<float> d(static_cast<std::size_t>(nd::numel(shape)));
  for (auto& v : d) v = static_cast<float>(rng.uniform(lo, hi));
  return nd::Tensor(std::move(shape), std::move(d));
}

inline std::vector<double> as_double(const nd::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline bool bit_equal(const nd::Tensor& a, const nd::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(x[i]) != std::bit_cast<std::uint32_t>(y[i])) return false;
  }
  return true;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("edaq_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace edaq::test
