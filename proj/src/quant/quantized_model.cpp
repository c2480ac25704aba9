// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/quant/quantized_model.hpp"

#include <stdexcept>

namespace edaq::quant {

QuantizedModel::QuantizedModel(net::Model model, int bits_w, int bits_a)
    : model_(std::move(model)), bits_w_(bits_w), bits_a_(bits_a) {
  for (const auto& name : model_.quantizable_layers()) {
    q_[name] = {make_quantizer(bits_w, QuantMode::weight_per_channel), make_quantizer(bits_a, QuantMode::act_per_tensor)};
  }
}

net::LayerFn QuantizedModel::exec() const {
  return [this](const net::Layer& l, const nd::Tensor& in) {
    const LayerQuantizers& lq = q_.at(l.name);
    return net::layer_forward(l, fake_quant(in, lq.act), fake_quant(l.weight, lq.weight));
  };
}

nd::Tensor QuantizedModel::forward(const nd::Tensor& x, std::span<const std::int64_t> t, net::CaptureFlags capture,
                                   net::Taps* taps) const {
  return model_.forward(x, t, exec(), capture, taps);
}

namespace {

nd::Tensor vec(const std::vector<float>& v) { return nd::Tensor({static_cast<std::int64_t>(v.size())}, v); }

nlohmann::json site_json(const QuantizerState& q) {
  return {{"bits", q.bits},
          {"initialized", q.initialized},
          {"use_alpha", q.use_alpha},
          {"hardened", q.hardened},
          {"mode", q.mode == QuantMode::weight_per_channel ? "weight_per_channel" : "act_per_tensor"}};
}

void store_site(net::Checkpoint& ck, const std::string& prefix, const QuantizerState& q) {
  if (!q.initialized || q.pass_through()) return;
  ck.extra.push_back({prefix + ".scale", q.scale});
  ck.extra.push_back({prefix + ".zero_point", vec(q.zero_point)});
  std::vector<float> deg(q.degenerate.begin(), q.degenerate.end());
  ck.extra.push_back({prefix + ".degenerate", vec(deg)});
  if (q.use_alpha && q.alpha.defined()) ck.extra.push_back({prefix + ".alpha", q.alpha});
}

const nd::Tensor& need(const std::map<std::string, nd::Tensor>& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw net::MetadataMismatchError("checkpoint lacks quantizer tensor " + name);
  return it->second;
}

void restore_site(const nlohmann::json& j, const std::map<std::string, nd::Tensor>& tensors,
                  const std::string& prefix, QuantizerState& q) {
  q.bits = j.at("bits").get<int>();
  q.initialized = j.at("initialized").get<bool>();
  q.use_alpha = j.at("use_alpha").get<bool>();
  q.hardened = j.at("hardened").get<bool>();
  if (!q.initialized || q.pass_through()) return;
  q.scale = need(tensors, prefix + ".scale").detach();
  auto z = need(tensors, prefix + ".zero_point").data();
  q.zero_point.assign(z.begin(), z.end());
  auto d = need(tensors, prefix + ".degenerate").data();
  q.degenerate.assign(d.begin(), d.end());
  if (q.zero_point.size() != static_cast<std::size_t>(q.scale.numel()) || q.degenerate.size() != q.zero_point.size()) {
    throw net::MetadataMismatchError(prefix + ": scale/zero-point lengths disagree");
  }
  if (q.use_alpha) q.alpha = need(tensors, prefix + ".alpha").detach();
}

}  // namespace

void QuantizedModel::store(net::Checkpoint& ck) const {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [name, lq] : q_) {
    layers[name] = {{"weight", site_json(lq.weight)}, {"act", site_json(lq.act)}};
    store_site(ck, "quant." + name + ".weight", lq.weight);
    store_site(ck, "quant." + name + ".act", lq.act);
  }
  ck.info["quant"] = {{"bits_w", bits_w_}, {"bits_a", bits_a_}, {"layers", layers}};
}

QuantizedModel QuantizedModel::restore(const net::Checkpoint& ck) {
  if (!ck.info.contains("quant")) throw net::MetadataMismatchError("checkpoint has no quantizer states");
  const auto& jq = ck.info["quant"];
  QuantizedModel qm(ck.model, jq.at("bits_w").get<int>(), jq.at("bits_a").get<int>());
  std::map<std::string, nd::Tensor> tensors;
  for (const auto& e : ck.extra) tensors.emplace(e.name, e.tensor);
  for (auto& [name, lq] : qm.q_) {
    if (!jq.at("layers").contains(name)) throw net::MetadataMismatchError("no quantizer state for layer " + name);
    const auto& jl = jq["layers"][name];
    restore_site(jl.at("weight"), tensors, "quant." + name + ".weight", lq.weight);
    restore_site(jl.at("act"), tensors, "quant." + name + ".act", lq.act);
    if (lq.weight.use_alpha && lq.weight.alpha.shape() != qm.model_.layer(name).weight.shape()) {
      throw net::MetadataMismatchError("rounding variables of " + name + " do not match the weight shape");
    }
  }
  return qm;
}

QuantizedModel QuantizedModel::clone() const {
  QuantizedModel c = *this;
  for (auto& [name, lq] : c.q_) {
    for (QuantizerState* s : {&lq.weight, &lq.act}) {
      if (s->scale.defined()) s->scale = s->scale.detach();
      if (s->alpha.defined()) s->alpha = s->alpha.detach();
    }
  }
  return c;
}

QuantizedModel attach_quantizers(const net::Model& model, int bits_w, int bits_a, const nd::Tensor& calib_x,
                                 std::span<const std::int64_t> calib_t, const AttachOptions& opts) {
  if (calib_x.rank() == 0 || calib_x.dim(0) == 0 || calib_t.empty()) {
    throw std::invalid_argument("attach_quantizers: empty calibration set");
  }
  QuantizedModel qm(model, bits_w, bits_a);
  for (auto& [name, lq] : qm.quantizers()) {
    const auto& w = model.layer(name).weight;
    init_range(w, lq.weight);
    if (opts.init_rounding) init_alpha(w, lq.weight);
  }
  if (bits_a >= kPassThroughBits) {
    for (auto& [name, lq] : qm.quantizers()) lq.act.initialized = true;
    return qm;
  }

  // Collect every layer input over the calibration set in FP.
  const std::size_t n = static_cast<std::size_t>(calib_x.dim(0));
  const std::size_t per = static_cast<std::size_t>(calib_x.numel()) / n;
  std::map<std::string, std::vector<float>> inputs;
  for (std::size_t b = 0; b < n; b += opts.chunk) {
    const std::size_t m = std::min(opts.chunk, n - b);
    nd::Shape s = calib_x.shape();
    s[0] = static_cast<std::int64_t>(m);
    auto xd = calib_x.data().subspan(b * per, m * per);
    nd::Tensor x(s, std::vector<float>(xd.begin(), xd.end()));
    net::Taps taps;
    model.forward(x, calib_t.subspan(b, m), {}, {false, true, false}, &taps);
    for (const auto& [name, io] : taps.layers) {
      if (!qm.quantizers().count(name)) continue;
      auto& buf = inputs[name];
      buf.insert(buf.end(), io.input.data().begin(), io.input.data().end());
    }
  }
  for (auto& [name, lq] : qm.quantizers()) {
    auto& buf = inputs.at(name);
    const auto n = static_cast<std::int64_t>(buf.size());
    init_range(nd::Tensor({n}, std::move(buf)), lq.act);
  }
  return qm;
}

}  // namespace edaq::quant
