// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edaq/net/model.hpp"

namespace edaq::net {

/// Naive double-precision forward pass of `model`, written independently of
/// the tensor ops. Used as the finite-difference oracle in gradient checks.
std::vector<double> reference_forward(const Model& model, const nd::Tensor& x, std::span<const std::int64_t> t);

}  // namespace edaq::net
