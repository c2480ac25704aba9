// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/fbr/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "edaq/nd/ops.hpp"
#include "edaq/nd/optim.hpp"
#include "edaq/nd/rng.hpp"

namespace edaq::fbr {

using nd::Tensor;

std::string to_string(Method m) {
  switch (m) {
    case Method::fbr: return "fbr";
    case Method::block_wise: return "block_wise";
    case Method::layer_wise: return "layer_wise";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::fbr, Method::block_wise, Method::layer_wise}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown reconstruction method '" + s + "' (expected fbr, block_wise, layer_wise)");
}

ReconstructionError::ReconstructionError(const std::string& unit, std::int64_t iteration)
    : std::runtime_error("reconstruction of " + unit + " diverged: non-finite loss at iteration " +
                         std::to_string(iteration)),
      iteration_(iteration) {}

nlohmann::json ReconConfig::to_json() const {
  return {{"method", to_string(method)},
          {"gamma", gamma},
          {"iters", iters},
          {"batch", batch},
          {"lr_rounding", lr_rounding},
          {"lr_act_scale", lr_act_scale},
          {"reg",
           {{"beta_start", reg.beta_start},
            {"beta_end", reg.beta_end},
            {"weight", reg.weight},
            {"warmup", reg.warmup}}},
          {"seed", seed}};
}

double reg_beta(const RoundingReg& r, std::int64_t iter, std::int64_t iters) {
  const auto warm = static_cast<std::int64_t>(std::floor(r.warmup * static_cast<double>(iters)));
  if (iter < warm) return 0.0;
  const double span = static_cast<double>(std::max<std::int64_t>(1, iters - warm));
  const double frac = static_cast<double>(iter - warm) / span;
  return r.beta_end + (r.beta_start - r.beta_end) * (1.0 - frac);
}

double IterRecord::L_m_sum() const {
  double s = 0.0;
  for (double v : L_m) s += v;
  return s;
}

namespace {

nlohmann::json iter_json(const IterRecord& r) {
  return {{"L_b", r.L_b}, {"L_m", r.L_m}, {"L_m_sum", r.L_m_sum()}, {"reg", r.reg}, {"L", r.L}};
}

}  // namespace

nlohmann::json BlockLossRecord::to_json() const {
  return {{"name", name},
          {"kind", kind},
          {"front_layers", front_layers},
          {"iters", iters},
          {"gamma", gamma},
          {"L_b_first", first.L_b},
          {"L_b_last", last.L_b},
          {"L_m_sum_first", first.L_m_sum()},
          {"L_m_sum_last", last.L_m_sum()},
          {"reg_last", last.reg},
          {"first", iter_json(first)},
          {"last", iter_json(last)},
          {"calib_L_b_start", calib_L_b_start},
          {"calib_L_b_end", calib_L_b_end},
          {"calib_L_m_start", calib_L_m_start},
          {"calib_L_m_end", calib_L_m_end},
          {"warning_non_decreasing", warning_non_decreasing}};
}

std::vector<Unit> make_units(const net::Model& model, Method method) {
  std::vector<Unit> units;
  for (const auto& b : model.blocks()) {
    if (method == Method::layer_wise) {
      for (const auto& l : b.layers) {
        if (model.layer(l).quantizable) units.push_back({l, true, "layer", {l}, {}});
      }
      continue;
    }
    Unit u{b.name, false, net::to_string(b.kind), b.layers, {}};
    if (b.kind != net::BlockKind::standalone) u.front_layers = b.front_layers;
    units.push_back(std::move(u));
  }
  return units;
}

namespace {

Tensor rows_of(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t per = static_cast<std::size_t>(x.numel() / x.dim(0));
  auto d = x.data().subspan(begin * per, count * per);
  nd::Shape s = x.shape();
  s[0] = static_cast<std::int64_t>(count);
  return Tensor(s, std::vector<float>(d.begin(), d.end()));
}

Tensor gather(const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t per = static_cast<std::size_t>(x.numel() / x.dim(0));
  std::vector<float> out;
  out.reserve(idx.size() * per);
  auto d = x.data();
  for (std::size_t i : idx) out.insert(out.end(), d.begin() + static_cast<std::ptrdiff_t>(i * per),
                                       d.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
  nd::Shape s = x.shape();
  s[0] = static_cast<std::int64_t>(idx.size());
  return Tensor(s, std::move(out));
}

// Appends chunks along axis 0.
struct Stack {
  nd::Shape shape;
  std::vector<float> data;

  void add(const Tensor& t) {
    if (data.empty()) {
      shape = t.shape();
      shape[0] = 0;
    }
    shape[0] += t.dim(0);
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  Tensor take() { return Tensor(shape, std::move(data)); }
};

}  // namespace

BlockTargets block_targets(const net::Model& fp, const quant::QuantizedModel& qm, const tdac::CalibrationSet& calib,
                           const Unit& unit, std::size_t chunk) {
  if (calib.size() == 0) throw std::invalid_argument("block_targets: calibration set is empty");
  const std::size_t n = calib.size();
  std::vector<Stack> in;
  Stack out;
  std::map<std::string, Stack> front;
  const net::CaptureFlags cap = unit.layer ? net::CaptureFlags{false, true, false} : net::CaptureFlags{false, false, true};
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t m = std::min(chunk, n - b);
    const Tensor x = rows_of(calib.x, b, m);
    const std::span<const std::int64_t> t(calib.t.data() + b, m);

    net::Taps qt;
    qm.forward(x, t, cap, &qt);
    net::Taps ft;
    fp.forward(x, t, {}, {false, !unit.front_layers.empty() || unit.layer, !unit.layer}, &ft);

    if (unit.layer) {
      const auto& qio = qt.layers.at(unit.name);
      if (in.empty()) in.resize(1);
      in[0].add(qio.input);
      out.add(ft.layers.at(unit.name).output);
    } else {
      const auto& qio = qt.blocks.at(unit.name);
      if (in.empty()) in.resize(qio.inputs.size());
      for (std::size_t i = 0; i < qio.inputs.size(); ++i) in[i].add(qio.inputs[i]);
      out.add(ft.blocks.at(unit.name).output);
      for (const auto& f : unit.front_layers) front[f].add(ft.layers.at(f).output);
    }
  }
  BlockTargets tg;
  for (auto& s : in) tg.inputs.push_back(s.take());
  tg.output = out.take();
  for (auto& [name, s] : front) tg.front[name] = s.take();
  return tg;
}

Tensor recon_loss(const Tensor& out, const Tensor& target) {
  if (out.shape() != target.shape()) throw nd::ShapeError("recon_loss", {out.shape(), target.shape()});
  const Tensor d = nd::sub(out, target);
  const double channels = out.rank() >= 2 ? static_cast<double>(out.dim(1)) : 1.0;
  return nd::affine(nd::sum(nd::mul(d, d)), static_cast<float>(channels / static_cast<double>(out.numel())));
}

namespace {

struct Eval {
  Tensor L_b;
  std::vector<Tensor> L_m;
};

Eval run_unit(const quant::QuantizedModel& qm, const Unit& unit, std::span<const Tensor> inputs, const Tensor& target,
              const std::map<std::string, Tensor>& front_targets, std::span<const std::size_t> idx) {
  std::vector<Tensor> in;
  for (const auto& t : inputs) in.push_back(gather(t, idx));
  const net::LayerFn exec = qm.exec();
  Eval e;
  if (unit.layer) {
    e.L_b = recon_loss(exec(qm.model().layer(unit.name), in[0]), gather(target, idx));
    return e;
  }
  std::map<std::string, net::LayerIO> io;
  const Tensor out = qm.model().run_block(unit.name, in, exec, unit.front_layers.empty() ? nullptr : &io);
  e.L_b = recon_loss(out, gather(target, idx));
  for (const auto& f : unit.front_layers) e.L_m.push_back(recon_loss(io.at(f).output, gather(front_targets.at(f), idx)));
  return e;
}

struct FullLoss {
  double L_b = 0.0;
  double L_m = 0.0;
};

FullLoss calib_loss(const quant::QuantizedModel& qm, const Unit& unit, const BlockTargets& tg, std::size_t chunk) {
  const std::size_t n = static_cast<std::size_t>(tg.output.dim(0));
  FullLoss f;
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t m = std::min(chunk, n - b);
    idx.resize(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = b + i;
    const Eval e = run_unit(qm, unit, tg.inputs, tg.output, tg.front, idx);
    f.L_b += e.L_b.item() * static_cast<double>(m);
    for (const auto& t : e.L_m) f.L_m += t.item() * static_cast<double>(m);
  }
  f.L_b /= static_cast<double>(n);
  f.L_m /= static_cast<double>(n);
  return f;
}

}  // namespace

BlockLossRecord reconstruct_block(quant::QuantizedModel& qm, const Unit& unit, const BlockTargets& tg,
                                  const ReconConfig& cfg) {
  if (cfg.gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  if (cfg.iters < 1 || cfg.batch < 1) throw std::invalid_argument("iters and batch must be >= 1");
  const std::size_t n = static_cast<std::size_t>(tg.output.dim(0));
  const double gamma = cfg.effective_gamma();
  // block_wise leaves the front-layer terms out of the graph; fbr keeps them
  // even at gamma = 0.
  const bool front_in_loss = cfg.method == Method::fbr;

  BlockLossRecord rec;
  rec.name = unit.name;
  rec.kind = unit.kind;
  rec.front_layers = unit.front_layers;
  rec.iters = cfg.iters;
  rec.gamma = gamma;

  std::vector<Tensor> alphas, scales;
  std::vector<quant::QuantizerState*> weight_qs;
  for (const auto& l : unit.layers) {
    auto& lq = qm.at(l);
    if (!lq.weight.pass_through() && lq.weight.use_alpha && !lq.weight.hardened) {
      lq.weight.alpha.set_requires_grad(true);
      alphas.push_back(lq.weight.alpha);
      weight_qs.push_back(&lq.weight);
    }
    if (!lq.act.pass_through() && lq.act.initialized && !lq.act.degenerate.empty() && !lq.act.degenerate[0]) {
      lq.act.scale.set_requires_grad(true);
      scales.push_back(lq.act.scale);
    }
  }
  nd::Adam opt;
  opt.add_group(alphas, cfg.lr_rounding);
  opt.add_group(scales, cfg.lr_act_scale);

  // Baseline is nearest rounding, i.e. the initial alphas hardened.
  for (auto* q : weight_qs) q->hardened = true;
  FullLoss start;
  try {
    start = calib_loss(qm, unit, tg, 64);
  } catch (const nd::NumericError&) {
    throw ReconstructionError(unit.name, 0);
  }
  for (auto* q : weight_qs) q->hardened = false;
  rec.calib_L_b_start = start.L_b;
  rec.calib_L_m_start = start.L_m;

  nd::Rng rng(nd::derive_seed(cfg.seed, "recon/" + unit.name));
  std::vector<std::size_t> order;
  std::size_t cursor = n;
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), n);
  std::vector<std::size_t> idx(bs);

  for (std::int64_t it = 0; it < cfg.iters; ++it) {
    for (std::size_t i = 0; i < bs; ++i) {
      if (cursor == n) {
        order = rng.permutation(n);
        cursor = 0;
      }
      idx[i] = order[cursor++];
    }
    opt.zero_grad();
    Eval e;
    try {
      e = run_unit(qm, unit, tg.inputs, tg.output, tg.front, idx);
    } catch (const nd::NumericError&) {
      throw ReconstructionError(unit.name, it);
    }
    Tensor loss = e.L_b;
    if (front_in_loss) {
      for (const auto& lm : e.L_m) loss = nd::add(loss, nd::affine(lm, static_cast<float>(gamma)));
    }
    const double beta = reg_beta(cfg.reg, it, cfg.iters);
    IterRecord r;
    if (beta > 0.0 && !alphas.empty()) {
      Tensor reg;
      for (const auto& a : alphas) {
        Tensor term = quant::rounding_regularizer(a, beta);
        reg = reg.defined() ? nd::add(reg, term) : term;
      }
      reg = nd::affine(reg, static_cast<float>(cfg.reg.weight));
      r.reg = reg.item();
      loss = nd::add(loss, reg);
    }
    r.L_b = e.L_b.item();
    for (const auto& lm : e.L_m) r.L_m.push_back(lm.item());
    r.L = loss.item();
    if (!std::isfinite(r.L)) throw ReconstructionError(unit.name, it);
    if (loss.requires_grad()) {
      try {
        loss.backward();
      } catch (const nd::NumericError&) {
        throw ReconstructionError(unit.name, it);
      }
      opt.step();
    }
    if (it == 0) rec.first = r;
    rec.last = r;
    if (cfg.keep_trace) rec.trace.push_back(std::move(r));
  }

  for (auto* q : weight_qs) quant::harden(*q);
  for (auto& s : scales) s.set_requires_grad(false);

  const FullLoss end = calib_loss(qm, unit, tg, 64);
  rec.calib_L_b_end = end.L_b;
  rec.calib_L_m_end = end.L_m;
  rec.warning_non_decreasing = !(end.L_b < start.L_b);
  return rec;
}

ReconResult reconstruct_model(const net::Model& fp, quant::QuantizedModel qm, const tdac::CalibrationSet& calib,
                              const ReconConfig& cfg, const ReconProgress& progress) {
  const auto units = make_units(qm.model(), cfg.method);
  ReconResult res;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (progress) progress(units[i].name, i, units.size());
    const BlockTargets tg = block_targets(fp, qm, calib, units[i]);
    res.records.push_back(reconstruct_block(qm, units[i], tg, cfg));
  }
  res.model = std::move(qm);
  return res;
}

nlohmann::json ReconResult::report() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& r : records) blocks.push_back(r.to_json());
  return {{"blocks", blocks}};
}

void ReconResult::write_trace_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "unit,iter,L_b,L_m_sum,reg,L\n" << std::setprecision(9);
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      const auto& t = r.trace[i];
      f << r.name << ',' << i << ',' << t.L_b << ',' << t.L_m_sum() << ',' << t.reg << ',' << t.L << '\n';
    }
  }
}

}  // namespace edaq::fbr
