// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edaq/nd/tensor.hpp"

namespace edaq::nd {

enum class Padding { same, valid };

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] or [B,M,K]x[B,K,N]
Tensor transpose(const Tensor& a);                // swaps the last two axes
Tensor conv2d(const Tensor& x, const Tensor& w, Padding padding = Padding::same);
/// x[N,in] * w[out,in]^T + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);

// Elementwise, equal shapes only.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Adds bias[C] (shared) or bias[N,C] (per sample) along axis 1 of x[N,C,...].
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// scale * x + shift with scalar constants.
Tensor affine(const Tensor& x, float scale, float shift = 0.0f);

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor power(const Tensor& x, float exponent);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
/// Rows of table[V,D] gathered into [indices.size(), D].
Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> indices);

// Reductions to a scalar, accumulated in double.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_loss(const Tensor& a, const Tensor& b);

// Spatial resampling on [N,C,H,W].
Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);

}  // namespace edaq::nd
