// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/net/model.hpp"

#include <cmath>
#include <stdexcept>

#include "edaq/nd/rng.hpp"

namespace edaq::net {

using nd::Tensor;

std::string to_string(Arch a) { return a == Arch::tiny_unet ? "tiny_unet" : "mlp_denoiser"; }

std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::residual_bottleneck: return "residual_bottleneck";
    case BlockKind::attention: return "attention";
    default: return "standalone";
  }
}

Arch parse_arch(const std::string& s) {
  if (s == "tiny_unet") return Arch::tiny_unet;
  if (s == "mlp_denoiser") return Arch::mlp_denoiser;
  throw std::invalid_argument("unknown arch: " + s);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"image_size", image_size},       {"in_channels", in_channels},
          {"base_channels", base_channels}, {"down_channels", down_channels},
          {"mid_channels", mid_channels},   {"up_channels", up_channels},
          {"groups", groups},               {"temb_dim", temb_dim},
          {"temb_hidden", temb_hidden},     {"data_dim", data_dim},
          {"hidden", hidden},               {"mid_tap", mid_tap}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_size = j.value("image_size", c.image_size);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.down_channels = j.value("down_channels", c.down_channels);
  c.mid_channels = j.value("mid_channels", c.mid_channels);
  c.up_channels = j.value("up_channels", c.up_channels);
  c.groups = j.value("groups", c.groups);
  c.temb_dim = j.value("temb_dim", c.temb_dim);
  c.temb_hidden = j.value("temb_hidden", c.temb_hidden);
  c.data_dim = j.value("data_dim", c.data_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.mid_tap = j.value("mid_tap", c.mid_tap);
  return c;
}

Tensor timestep_features(std::span<const std::int64_t> t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep_features: dim must be even");
  const int half = dim / 2;
  std::vector<float> out(t.size() * static_cast<std::size_t>(dim));
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double w = std::pow(10000.0, -static_cast<double>(i) / half);
      const double a = static_cast<double>(t[n]) * w;
      out[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] = static_cast<float>(std::sin(a));
      out[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(half + i)] =
          static_cast<float>(std::cos(a));
    }
  }
  return Tensor({static_cast<std::int64_t>(t.size()), dim}, std::move(out));
}

Tensor layer_forward(const Layer& layer, const Tensor& input, const Tensor& weight) {
  if (layer.kind == LayerKind::conv) {
    Tensor y = nd::conv2d(input, weight, layer.padding);
    return layer.bias.defined() ? nd::add_bias(y, layer.bias) : y;
  }
  return nd::linear(input, weight, layer.bias.defined() ? &layer.bias : nullptr);
}

// ---------------------------------------------------------------------------

struct Model::Ctx {
  const LayerFn* exec = nullptr;
  std::map<std::string, LayerIO>* layer_io = nullptr;
  std::map<std::string, BlockIO>* block_io = nullptr;
};

nd::Shape Model::sample_shape() const {
  if (arch_ == Arch::tiny_unet) return {config_.in_channels, config_.image_size, config_.image_size};
  return {config_.data_dim};
}

void Model::set_mid_tap(const std::string& block_name) {
  block(block_name);
  mid_tap_ = block_name;
}

const Layer& Model::layer(const std::string& name) const {
  auto it = layer_index_.find(name);
  if (it == layer_index_.end()) throw std::out_of_range("no layer named " + name);
  return layers_[it->second];
}

const BlockSpec& Model::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no block named " + name);
}

std::vector<std::string> Model::quantizable_layers() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) {
    if (l.quantizable) out.push_back(l.name);
  }
  return out;
}

std::vector<nd::NamedTensor> Model::parameters() const {
  std::vector<nd::NamedTensor> out;
  for (const auto& l : layers_) {
    out.push_back({l.name + ".weight", l.weight});
    if (l.bias.defined()) out.push_back({l.name + ".bias", l.bias});
  }
  for (const auto& [name, n] : norms_) {
    out.push_back({name + ".gamma", n.gamma});
    out.push_back({name + ".beta", n.beta});
  }
  return out;
}

std::vector<nd::NamedTensor> Model::full_precision_parameters() const {
  std::vector<nd::NamedTensor> out;
  for (const auto& l : layers_) {
    if (l.quantizable) continue;
    out.push_back({l.name + ".weight", l.weight});
    if (l.bias.defined()) out.push_back({l.name + ".bias", l.bias});
  }
  for (const auto& [name, n] : norms_) {
    out.push_back({name + ".gamma", n.gamma});
    out.push_back({name + ".beta", n.beta});
  }
  return out;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

std::map<std::string, std::int64_t> Model::layer_macs() const {
  std::map<std::string, std::int64_t> out;
  for (const auto& l : layers_) out[l.name] = l.weight.numel() * l.positions;
  return out;
}

Model Model::clone() const {
  Model m = *this;
  for (auto& l : m.layers_) {
    l.weight = l.weight.detach();
    if (l.bias.defined()) l.bias = l.bias.detach();
  }
  for (auto& [name, n] : m.norms_) {
    n.gamma = n.gamma.detach();
    n.beta = n.beta.detach();
  }
  return m;
}

void Model::set_requires_grad(bool on) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

void Model::add_layer(Layer l) {
  if (layer_index_.count(l.name)) throw std::logic_error("duplicate layer name " + l.name);
  layer_index_[l.name] = layers_.size();
  layers_.push_back(std::move(l));
}

Tensor Model::norm(const std::string& name, const Tensor& x) const {
  const Norm& n = norms_.at(name);
  return nd::group_norm(x, config_.groups, n.gamma, n.beta);
}

Tensor Model::apply(const std::string& name, const Tensor& in, Ctx& ctx) const {
  const Layer& l = layer(name);
  Tensor out = (l.quantizable && ctx.exec && *ctx.exec) ? (*ctx.exec)(l, in) : layer_forward(l, in, l.weight);
  if (ctx.layer_io) (*ctx.layer_io)[name] = {in, out};
  return out;
}

Tensor Model::time_embedding(std::span<const std::int64_t> t, Ctx& ctx) const {
  Tensor f = timestep_features(t, config_.temb_dim);
  if (arch_ == Arch::mlp_denoiser) return f;
  Tensor h = apply("temb.dense0", f, ctx);
  return apply("temb.dense1", nd::silu(h), ctx);
}

Tensor Model::block_body(const BlockSpec& b, std::span<const Tensor> in, Ctx& ctx) const {
  const std::string& p = b.name;
  switch (b.kind) {
    case BlockKind::residual_bottleneck: {
      if (in.size() != 2) throw std::invalid_argument(p + ": residual block takes (x, temb)");
      const Tensor& x = in[0];
      Tensor h = apply(p + ".conv1", nd::silu(norm(p + ".norm1", x)), ctx);
      h = nd::add_bias(h, apply(p + ".temb_proj", nd::silu(in[1]), ctx));
      h = apply(p + ".conv2", nd::silu(norm(p + ".norm2", h)), ctx);
      Tensor sc = layer_index_.count(p + ".nin_shortcut") ? apply(p + ".nin_shortcut", x, ctx) : x;
      return nd::add(sc, h);
    }
    case BlockKind::attention: {
      if (in.size() != 1) throw std::invalid_argument(p + ": attention block takes (x)");
      const Tensor& x = in[0];
      const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
      Tensor h = norm(p + ".norm", x);
      Tensor q = nd::reshape(apply(p + ".q", h, ctx), {n, c, hw});
      Tensor k = nd::reshape(apply(p + ".k", h, ctx), {n, c, hw});
      Tensor v = nd::reshape(apply(p + ".v", h, ctx), {n, c, hw});
      Tensor scores = nd::affine(nd::matmul(nd::transpose(q), k), 1.0f / std::sqrt(static_cast<float>(c)));
      Tensor attn = nd::softmax(scores);  // [n, query, key]
      Tensor o = nd::reshape(nd::matmul(v, nd::transpose(attn)), x.shape());
      return nd::add(x, apply(p + ".proj_out", o, ctx));
    }
    case BlockKind::standalone:
      break;
  }
  if (in.size() != 1) throw std::invalid_argument(p + ": standalone block takes (x)");
  if (arch_ == Arch::mlp_denoiser) {
    Tensor y = apply(b.layers.front(), in[0], ctx);
    return p == "out" ? y : nd::silu(y);
  }
  if (p == "out") return apply("out.conv", nd::silu(norm("out.norm", in[0])), ctx);
  return apply(b.layers.front(), in[0], ctx);
}

Tensor Model::run_block(const std::string& name, std::span<const Tensor> inputs, const LayerFn& exec,
                        std::map<std::string, LayerIO>* layer_io) const {
  Ctx ctx;
  ctx.exec = &exec;
  ctx.layer_io = layer_io;
  return block_body(block(name), inputs, ctx);
}

Tensor Model::forward(const Tensor& x, std::span<const std::int64_t> t, const LayerFn& exec,
                      CaptureFlags capture, Taps* taps) const {
  const nd::Shape ss = sample_shape();
  const auto& xs = x.shape();
  if (xs.size() != ss.size() + 1 || !std::equal(ss.begin(), ss.end(), xs.begin() + 1)) {
    throw nd::ShapeError("forward", {xs, ss}, "input does not match " + to_string(arch_));
  }
  if (static_cast<std::int64_t>(t.size()) != xs[0]) {
    throw nd::ShapeError("forward", {xs}, "timestep count " + std::to_string(t.size()));
  }
  for (auto v : t) {
    if (v < 0) throw std::out_of_range("forward: negative timestep");
  }
  if (taps) *taps = Taps{};
  Ctx ctx;
  ctx.exec = &exec;
  ctx.layer_io = (taps && capture.layers) ? &taps->layers : nullptr;

  auto run = [&](const std::string& name, std::vector<Tensor> in) {
    Tensor out = block_body(block(name), in, ctx);
    if (taps && capture.blocks) taps->blocks[name] = {std::move(in), out};
    if (taps && capture.mid && name == mid_tap_) taps->mid = out;
    return out;
  };

  Tensor temb = time_embedding(t, ctx);
  if (arch_ == Arch::mlp_denoiser) {
    const Tensor parts[] = {x, temb};
    Tensor h = nd::concat(parts, 1);
    for (const auto& b : blocks_) h = run(b.name, {h});
    return h;
  }
  Tensor h = run("conv_in", {x});
  Tensor skip0 = run("down0.res0", {h, temb});
  Tensor skip1 = run("down1.res0", {nd::avg_pool2(skip0), temb});
  h = run("mid.res0", {skip1, temb});
  h = run("mid.attn", {h});
  {
    const Tensor parts[] = {h, skip1};
    h = run("up1.res0", {nd::concat(parts, 1), temb});
  }
  h = nd::upsample_nearest2(h);
  {
    const Tensor parts[] = {h, skip0};
    h = run("up0.res0", {nd::concat(parts, 1), temb});
  }
  return run("out", {h});
}

// ---------------------------------------------------------------------------

namespace {

struct Builder {
  Model& m;
  nd::Rng rng;

  Tensor he_uniform(nd::Shape shape, std::int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<float> v(static_cast<std::size_t>(nd::numel(shape)));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    return Tensor(std::move(shape), std::move(v));
  }
};

}  // namespace

Model build_model(Arch arch, const ModelConfig& config, std::uint64_t seed) {
  Model m;
  m.arch_ = arch;
  m.config_ = config;
  Builder b{m, nd::Rng(nd::derive_seed(seed, "init"))};

  auto conv = [&](const std::string& name, const std::string& block, int in, int out, int k,
                  std::int64_t positions) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::conv;
    l.weight = b.he_uniform({out, in, k, k}, static_cast<std::int64_t>(in) * k * k);
    l.bias = Tensor::zeros({out});
    l.block = block;
    l.positions = positions;
    m.add_layer(std::move(l));
  };
  auto linear = [&](const std::string& name, const std::string& block, int in, int out, bool quantizable) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::linear;
    l.weight = b.he_uniform({out, in}, in);
    l.bias = Tensor::zeros({out});
    l.block = block;
    l.quantizable = quantizable;
    m.add_layer(std::move(l));
  };
  auto norm = [&](const std::string& name, int ch) {
    if (ch % config.groups != 0) {
      throw std::invalid_argument(name + ": " + std::to_string(ch) + " channels not divisible by " +
                                  std::to_string(config.groups) + " groups");
    }
    m.norms_[name] = {Tensor::full({ch}, 1.0f), Tensor::zeros({ch})};
  };
  auto standalone = [&](const std::string& name, const std::string& layer) {
    m.blocks_.push_back({name, BlockKind::standalone, {layer}, {}});
  };
  auto resblock = [&](const std::string& name, int in, int out, std::int64_t positions) {
    norm(name + ".norm1", in);
    conv(name + ".conv1", name, in, out, 3, positions);
    linear(name + ".temb_proj", name, config.temb_hidden, out, true);
    norm(name + ".norm2", out);
    conv(name + ".conv2", name, out, out, 3, positions);
    BlockSpec bs{name, BlockKind::residual_bottleneck,
                 {name + ".conv1", name + ".temb_proj", name + ".conv2"},
                 {name + ".conv1", name + ".temb_proj"}};
    if (in != out) {
      conv(name + ".nin_shortcut", name, in, out, 1, positions);
      bs.layers.push_back(name + ".nin_shortcut");
    }
    m.blocks_.push_back(std::move(bs));
  };

  if (arch == Arch::mlp_denoiser) {
    const int in = config.data_dim + config.temb_dim;
    linear("fc1", "fc1", in, config.hidden, true);
    standalone("fc1", "fc1");
    linear("fc2", "fc2", config.hidden, config.hidden, true);
    standalone("fc2", "fc2");
    linear("fc3", "fc3", config.hidden, config.hidden, true);
    standalone("fc3", "fc3");
    linear("out", "out", config.hidden, config.data_dim, true);
    standalone("out", "out");
    m.mid_tap_ = "fc2";
  } else {
    if (config.image_size % 2 != 0) throw std::invalid_argument("image_size must be even");
    const std::int64_t hi = static_cast<std::int64_t>(config.image_size) * config.image_size;
    const std::int64_t lo = hi / 4;
    const int c0 = config.base_channels, c1 = config.down_channels, cm = config.mid_channels,
              cu = config.up_channels;
    linear("temb.dense0", "", config.temb_dim, config.temb_hidden, false);
    linear("temb.dense1", "", config.temb_hidden, config.temb_hidden, false);
    conv("conv_in", "conv_in", config.in_channels, c0, 3, hi);
    standalone("conv_in", "conv_in");
    resblock("down0.res0", c0, c0, hi);
    resblock("down1.res0", c0, c1, lo);
    resblock("mid.res0", c1, cm, lo);
    {
      const std::string a = "mid.attn";
      norm(a + ".norm", cm);
      for (const char* s : {".q", ".k", ".v", ".proj_out"}) conv(a + s, a, cm, cm, 1, lo);
      m.blocks_.push_back({a, BlockKind::attention,
                           {a + ".q", a + ".k", a + ".v", a + ".proj_out"},
                           {a + ".q", a + ".k", a + ".v"}});
    }
    resblock("up1.res0", cm + c1, cu, lo);
    resblock("up0.res0", cu + c0, c0, hi);
    norm("out.norm", c0);
    conv("out.conv", "out", c0, config.in_channels, 3, hi);
    standalone("out", "out.conv");
    m.mid_tap_ = "mid.attn";
  }
  if (!config.mid_tap.empty()) m.set_mid_tap(config.mid_tap);
  m.config_.mid_tap = m.mid_tap_;
  return m;
}

}  // namespace edaq::net
