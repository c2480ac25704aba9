// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "edaq/nd/tensor.hpp"

namespace edaq::nd {

struct GradCheckOptions {
  double tolerance = 1e-4;
  double h = 1e-3;
  /// Absolute error below which a parameter passes regardless of the
  /// relative error; covers gradients that are identically zero.
  double abs_tolerance = 1e-6;
  /// Coordinates checked per parameter; 0 checks all of them. When smaller
  /// than the parameter size a seeded subset is used.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  /// max|analytic - numeric| / max|numeric| over the checked coordinates.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool pass() const;
  double max_rel_error() const;
};

/// Output recomputed in double from the current (float) parameter values.
using ReferenceFn = std::function<std::vector<double>()>;

/// Compares backward() against central differences. `output_fn` recomputes
/// the output from the current parameter values; the scalar objective is a
/// fixed random projection of that output, evaluated in double. When
/// `reference` is given, the differences are taken on it instead of on
/// `output_fn`, which removes float32 output rounding from the estimate.
GradCheckReport grad_check(std::vector<NamedTensor> params, const std::function<Tensor()>& output_fn,
                           const GradCheckOptions& opts = {}, const ReferenceFn& reference = {});

}  // namespace edaq::nd
