// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edaq/nd/ops.hpp"
#include "edaq/nd/tensor.hpp"

namespace edaq::net {

enum class Arch { tiny_unet, mlp_denoiser };
enum class LayerKind { conv, linear };
enum class BlockKind { residual_bottleneck, attention, standalone };

std::string to_string(Arch a);
std::string to_string(BlockKind k);
Arch parse_arch(const std::string& s);

struct ModelConfig {
  // tiny_unet
  int image_size = 8;
  int in_channels = 1;
  int base_channels = 16;    // 8x8 level
  int down_channels = 32;    // 4x4 level
  int mid_channels = 64;
  int up_channels = 48;      // output of the 4x4 up block
  int groups = 8;
  int temb_dim = 32;         // sinusoidal width
  int temb_hidden = 16;      // width of the two embedding linears
  // mlp_denoiser
  int data_dim = 2;
  int hidden = 64;
  /// Block whose output is the mid-stage feature map.
  std::string mid_tap;       // empty: architecture default

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::conv;
  nd::Tensor weight;  // conv [O,I,k,k], linear [O,I]
  nd::Tensor bias;    // [O]; may be undefined
  nd::Padding padding = nd::Padding::same;
  /// False for the timestep-embedding linears, which stay in full precision
  /// and belong to no block.
  bool quantizable = true;
  std::string block;
  /// Output positions per sample (H*W for convs, 1 for linears).
  std::int64_t positions = 1;

  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t fan_in() const { return weight.numel() / weight.dim(0); }
};

struct BlockSpec {
  std::string name;
  BlockKind kind = BlockKind::standalone;
  std::vector<std::string> layers;
  std::vector<std::string> front_layers;
};

/// Computes a layer's output from its input; the default applies the float
/// weights. Quantized execution substitutes fake-quantized operands here.
using LayerFn = std::function<nd::Tensor(const Layer&, const nd::Tensor& input)>;

struct LayerIO {
  nd::Tensor input;
  nd::Tensor output;
};

struct BlockIO {
  std::vector<nd::Tensor> inputs;
  nd::Tensor output;
};

struct CaptureFlags {
  bool mid = false;
  bool layers = false;
  bool blocks = false;
};

struct Taps {
  nd::Tensor mid;
  std::map<std::string, LayerIO> layers;
  std::map<std::string, BlockIO> blocks;
};

class Model {
 public:
  Arch arch() const noexcept { return arch_; }
  const ModelConfig& config() const noexcept { return config_; }
  /// Shape of one sample, e.g. {1,8,8} or {2}.
  nd::Shape sample_shape() const;
  const std::string& mid_tap() const noexcept { return mid_tap_; }
  void set_mid_tap(const std::string& block);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(const std::string& name) const;
  const std::vector<BlockSpec>& blocks() const noexcept { return blocks_; }
  const BlockSpec& block(const std::string& name) const;
  /// Names of the quantizable layers in forward order.
  std::vector<std::string> quantizable_layers() const;

  /// All parameters (layer weights/biases, norm affine terms) in a fixed order.
  std::vector<nd::NamedTensor> parameters() const;
  /// Norm and embedding parameters, i.e. everything outside quantizable layers.
  std::vector<nd::NamedTensor> full_precision_parameters() const;
  std::int64_t parameter_count() const;
  /// Multiply-accumulates per sample of each conv/linear layer.
  std::map<std::string, std::int64_t> layer_macs() const;

  /// Noise prediction for x[N, sample_shape...] at per-sample timesteps t.
  nd::Tensor forward(const nd::Tensor& x, std::span<const std::int64_t> t,
                     const LayerFn& exec = {}, CaptureFlags capture = {}, Taps* taps = nullptr) const;
  /// Runs a single block from its captured inputs. Layer inputs and outputs
  /// inside the block are written to `layer_io` when given.
  nd::Tensor run_block(const std::string& block, std::span<const nd::Tensor> inputs,
                       const LayerFn& exec = {}, std::map<std::string, LayerIO>* layer_io = nullptr) const;

  /// Deep copy of all parameters.
  Model clone() const;
  void set_requires_grad(bool on);

  friend Model build_model(Arch arch, const ModelConfig& config, std::uint64_t seed);

 private:
  struct Norm {
    nd::Tensor gamma, beta;
  };
  struct Ctx;

  nd::Tensor block_body(const BlockSpec& b, std::span<const nd::Tensor> in, Ctx& ctx) const;
  nd::Tensor apply(const std::string& layer, const nd::Tensor& in, Ctx& ctx) const;
  nd::Tensor norm(const std::string& name, const nd::Tensor& x) const;
  nd::Tensor time_embedding(std::span<const std::int64_t> t, Ctx& ctx) const;
  void add_layer(Layer l);

  Arch arch_ = Arch::tiny_unet;
  ModelConfig config_;
  std::string mid_tap_;
  std::vector<Layer> layers_;
  std::map<std::string, std::size_t> layer_index_;
  std::vector<BlockSpec> blocks_;
  std::map<std::string, Norm> norms_;  // ordered by name
};

/// Layer arithmetic with `weight` in place of the stored weight.
nd::Tensor layer_forward(const Layer& layer, const nd::Tensor& input, const nd::Tensor& weight);

/// Builds a model with seeded He-uniform weights, zero biases and unit norms.
Model build_model(Arch arch, const ModelConfig& config = {}, std::uint64_t seed = 0);

/// Sinusoidal timestep features [N, dim]: (sin(t w_i), cos(t w_i)),
/// w_i = 10000^(-i/(dim/2)).
nd::Tensor timestep_features(std::span<const std::int64_t> t, int dim);

}  // namespace edaq::net
