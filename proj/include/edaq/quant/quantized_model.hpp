// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/net/checkpoint.hpp"
#include "edaq/net/model.hpp"
#include "edaq/quant/quantizer.hpp"

namespace edaq::quant {

struct LayerQuantizers {
  QuantizerState weight;  // per output channel
  QuantizerState act;     // per tensor, on the layer input
};

/// A full-precision model plus one weight and one input-activation
/// quantizer for each quantizable layer.
class QuantizedModel {
 public:
  QuantizedModel() = default;
  QuantizedModel(net::Model model, int bits_w, int bits_a);

  const net::Model& model() const noexcept { return model_; }
  int bits_w() const noexcept { return bits_w_; }
  int bits_a() const noexcept { return bits_a_; }

  std::map<std::string, LayerQuantizers>& quantizers() noexcept { return q_; }
  const std::map<std::string, LayerQuantizers>& quantizers() const noexcept { return q_; }
  LayerQuantizers& at(const std::string& layer) { return q_.at(layer); }
  const LayerQuantizers& at(const std::string& layer) const { return q_.at(layer); }

  /// Layer executor applying fake quantization to weight and input.
  net::LayerFn exec() const;
  nd::Tensor forward(const nd::Tensor& x, std::span<const std::int64_t> t, net::CaptureFlags capture = {},
                     net::Taps* taps = nullptr) const;

  /// Serializes quantizer states as "quant.{layer}.{site}.{field}" tensors
  /// plus a JSON summary of bits and flags.
  void store(net::Checkpoint& ckpt) const;
  static QuantizedModel restore(const net::Checkpoint& ckpt);

  /// Deep copy of all quantizer tensors (the model weights stay shared).
  QuantizedModel clone() const;

 private:
  net::Model model_;
  int bits_w_ = 32;
  int bits_a_ = 32;
  std::map<std::string, LayerQuantizers> q_;
};

struct AttachOptions {
  /// Calibration samples per forward chunk while collecting activations.
  std::size_t chunk = 64;
  /// Prepare soft-rounding variables for reconstruction.
  bool init_rounding = true;
};

/// Attaches quantizers to every quantizable layer, initializes weight ranges
/// from the weights and activation ranges from FP forward passes over the
/// calibration inputs (x [N, ...], one timestep per sample).
QuantizedModel attach_quantizers(const net::Model& model, int bits_w, int bits_a, const nd::Tensor& calib_x,
                                 std::span<const std::int64_t> calib_t, const AttachOptions& opts = {});

}  // namespace edaq::quant
