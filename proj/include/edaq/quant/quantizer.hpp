// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "edaq/nd/tensor.hpp"

namespace edaq::quant {

enum class QuantMode { weight_per_channel, act_per_tensor };

/// Bit widths at or above this leave values untouched.
inline constexpr int kPassThroughBits = 32;

class UninitializedQuantizerError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Uniform asymmetric quantizer for one weight or activation site.
struct QuantizerState {
  int bits = 8;
  QuantMode mode = QuantMode::act_per_tensor;
  bool initialized = false;
  /// Scale per output channel (weights) or a single scale (activations).
  /// A leaf tensor so reconstruction can train activation scales.
  nd::Tensor scale;
  std::vector<float> zero_point;      // integer-valued, same length as scale
  std::vector<std::uint8_t> degenerate;  // per channel: constant input seen at init
  /// Soft-rounding variables, same shape as the weight (weights only).
  nd::Tensor alpha;
  bool use_alpha = false;
  /// Rounding fixed to h(alpha) in {0, 1}.
  bool hardened = false;

  bool pass_through() const noexcept { return bits >= kPassThroughBits; }
  float qmax() const noexcept { return static_cast<float>((1u << bits) - 1u); }
  std::size_t channels() const { return zero_point.size(); }
};

QuantizerState make_quantizer(int bits, QuantMode mode);

/// Half-away-from-zero rounding.
inline float round_half_away(float v) { return std::round(v); }

/// Rectified sigmoid clip(sigmoid(a) * 1.2 - 0.1, 0, 1).
double rect_sigmoid(double a);

/// x_hat = (clip(round(x/s) + z, 0, 2^b - 1) - z) s, per channel along axis
/// 0 for weights. With alpha active, round(x/s) becomes floor(x/s) + h(alpha).
/// Gradients: x gets the straight-through estimate (1 inside the clipping
/// range, 0 outside) unless alpha is active; the scale gets the LSQ-style
/// derivative; alpha gets s h'(alpha) inside the range.
nd::Tensor fake_quant(const nd::Tensor& x, const QuantizerState& q);

/// Sum of squared errors of quantizing x with the given range.
double quant_error(std::span<const float> x, float lo, float hi, int bits);

struct RangeChoice {
  float scale = 1.0f;
  float zero_point = 0.0f;
  int k = 100;  // chosen candidate, percent of the full range
  bool degenerate = false;
};

/// Grid search over ranges [lo k/100, hi k/100], k = 50..100, with
/// lo = min(min x, 0) and hi = max(max x, 0); picks the smallest squared
/// quantization error (largest k on ties).
RangeChoice search_range(std::span<const float> x, int bits);

/// Initializes scale and zero point from samples: per output channel for
/// weights (x is the weight tensor), one range for activations.
void init_range(const nd::Tensor& x, QuantizerState& q);

/// Sets alpha so that h(alpha) equals the fractional part of x/s, which
/// reproduces nearest rounding once hardened (alpha >= 0 rounds up).
void init_alpha(const nd::Tensor& weight, QuantizerState& q);

/// Rounding regularizer sum(1 - |2 h(alpha) - 1|^beta).
nd::Tensor rounding_regularizer(const nd::Tensor& alpha, double beta);

void harden(QuantizerState& q);

}  // namespace edaq::quant
