// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "edaq/nd/rng.hpp"
#include "edaq/nd/tensor.hpp"

namespace edaq::diffuse {

enum class Dataset { shapes8x8, moons2d };

std::string to_string(Dataset d);
Dataset parse_dataset(const std::string& s);

/// Draws n samples: shapes8x8 gives [n,1,8,8] bars, crosses and disks on a
/// -1 background; moons2d gives [n,2] points on two interleaved half circles.
nd::Tensor sample_dataset(Dataset d, std::size_t n, nd::Rng& rng);

}  // namespace edaq::diffuse
