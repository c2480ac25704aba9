// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace edaq::nd {

/// C[M,N] (+)= A[M,K] * B[K,N], all row-major and contiguous. Each output
/// element is accumulated in double precision over k in ascending order, so
/// results are independent of blocking and thread partitioning.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
          bool accumulate = false);

/// out[N,M] = in[M,N]^T
void transpose_copy(std::size_t m, std::size_t n, const float* in, float* out);

}  // namespace edaq::nd
