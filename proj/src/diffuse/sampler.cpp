// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/diffuse/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "edaq/nd/rng.hpp"
#include "edaq/net/container.hpp"

namespace edaq::diffuse {

std::vector<std::int64_t> timestep_grid(int T, int steps) {
  if (steps < 1 || steps > T) throw std::invalid_argument("sampler steps must be in [1, T]");
  std::vector<std::int64_t> g(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    g[static_cast<std::size_t>(steps - 1 - i)] = static_cast<std::int64_t>(i) * T / steps;
  }
  return g;
}

nd::Tensor ddim_step(const nd::Tensor& x_t, const nd::Tensor& eps, std::int64_t t, std::int64_t t_prev,
                     double eta, const NoiseSchedule& sched, const nd::Tensor& noise) {
  if (t_prev >= t) {
    throw std::invalid_argument("ddim_step: t_prev (" + std::to_string(t_prev) + ") must be below t (" +
                                std::to_string(t) + ")");
  }
  if (eps.shape() != x_t.shape()) throw nd::ShapeError("ddim_step", {x_t.shape(), eps.shape()});
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t_prev);
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  if (sigma > 0.0 && noise.shape() != x_t.shape()) {
    throw nd::ShapeError("ddim_step", {x_t.shape(), noise.shape()}, "noise");
  }
  auto xd = x_t.data(), ed = eps.data();
  std::vector<float> out(xd.size());
  const double sa = std::sqrt(ab), s1a = std::sqrt(1.0 - ab), sap = std::sqrt(ab_prev);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (xd[i] - s1a * ed[i]) / sa;
    double v = sap * x0 + dir * ed[i];
    if (sigma > 0.0) v += sigma * noise.data()[i];
    out[i] = static_cast<float>(v);
  }
  return nd::Tensor(x_t.shape(), std::move(out));
}

nd::Tensor ddim_step(const net::Model& model, const net::LayerFn& exec, const nd::Tensor& x_t,
                     std::int64_t t, std::int64_t t_prev, double eta, const NoiseSchedule& sched,
                     const nd::Tensor& noise) {
  std::vector<std::int64_t> tv(static_cast<std::size_t>(x_t.dim(0)), t);
  return ddim_step(x_t, model.forward(x_t, tv, exec), t, t_prev, eta, sched, noise);
}

nd::Tensor initial_noise(const net::Model& model, std::size_t batch, std::uint64_t seed) {
  nd::Shape s = model.sample_shape();
  s.insert(s.begin(), static_cast<std::int64_t>(batch));
  nd::Rng rng(nd::derive_seed(seed, "x_T"));
  return nd::Tensor(s, rng.normal_vector(static_cast<std::size_t>(nd::numel(s))));
}

namespace {

std::vector<float> batch_mean(const nd::Tensor& y) {
  const std::size_t n = static_cast<std::size_t>(y.dim(0));
  const std::size_t per = static_cast<std::size_t>(y.numel()) / n;
  std::vector<double> acc(per, 0.0);
  auto d = y.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < per; ++i) acc[i] += d[b * per + i];
  }
  std::vector<float> out(per);
  for (std::size_t i = 0; i < per; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(n));
  return out;
}

template <class OnStep>
nd::Tensor run_chain(const net::Model& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                     const nd::Tensor& x_T, const net::LayerFn& exec, bool want_taps, bool capture_layers,
                     OnStep on_step) {
  const auto grid = timestep_grid(sched.T, cfg.steps);
  nd::Rng rng(nd::derive_seed(cfg.seed, "ddim_noise"));
  nd::Tensor x = x_T;
  const auto n = static_cast<std::size_t>(x.dim(0));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::int64_t t = grid[i];
    const std::int64_t t_prev = i + 1 < grid.size() ? grid[i + 1] : -1;
    std::vector<std::int64_t> tv(n, t);
    net::Taps taps;
    net::CaptureFlags flags{want_taps, capture_layers, false};
    nd::Tensor eps = model.forward(x, tv, exec, flags, want_taps ? &taps : nullptr);
    on_step(t, x, taps);
    nd::Tensor noise;
    if (cfg.eta > 0.0) noise = nd::Tensor(x.shape(), rng.normal_vector(static_cast<std::size_t>(x.numel())));
    x = ddim_step(x, eps, t, t_prev, cfg.eta, sched, noise);
  }
  return x;
}

}  // namespace

Trajectory run_trajectory(const net::Model& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                          std::size_t batch, bool capture_layers, const net::LayerFn& exec) {
  Trajectory tr;
  tr.T = sched.T;
  tr.sampler = cfg;
  tr.x_T = initial_noise(model, batch, cfg.seed);
  tr.x0 = run_chain(model, sched, cfg, tr.x_T, exec, true, capture_layers,
                    [&](std::int64_t t, const nd::Tensor& x, const net::Taps& taps) {
                      TrajectoryStep s;
                      s.t = t;
                      s.x = x;
                      s.F = batch_mean(taps.mid);
                      for (const auto& [name, io] : taps.layers) s.layer_means[name] = batch_mean(io.output);
                      tr.steps.push_back(std::move(s));
                    });
  return tr;
}

nd::Tensor sample(const net::Model& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                  const nd::Tensor& x_T, const net::LayerFn& exec) {
  return run_chain(model, sched, cfg, x_T, exec, false, false,
                   [](std::int64_t, const nd::Tensor&, const net::Taps&) {});
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  net::Container c;
  c.meta = {{"kind", "trajectory"},
            {"T", traj.T},
            {"steps", traj.sampler.steps},
            {"eta", traj.sampler.eta},
            {"seed", traj.sampler.seed}};
  c.tensors.push_back({"x_T", traj.x_T});
  for (const auto& s : traj.steps) {
    const std::string p = "step" + std::to_string(s.t);
    c.tensors.push_back({p + ".x", s.x});
    c.tensors.push_back({p + ".F", nd::Tensor({static_cast<std::int64_t>(s.F.size())}, s.F)});
  }
  c.tensors.push_back({"x0", traj.x0});
  net::write_container(path, c);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  net::Container c = net::read_container(path);
  if (c.meta.value("kind", "") != "trajectory") {
    throw net::MetadataMismatchError(path.string() + " is not a trajectory dump");
  }
  Trajectory tr;
  tr.T = c.meta.at("T").get<int>();
  tr.sampler.steps = c.meta.at("steps").get<int>();
  tr.sampler.eta = c.meta.at("eta").get<double>();
  tr.sampler.seed = c.meta.at("seed").get<std::uint64_t>();
  for (auto t : timestep_grid(tr.T, tr.sampler.steps)) {
    const std::string p = "step" + std::to_string(t);
    const nd::Tensor* x = c.find(p + ".x");
    const nd::Tensor* f = c.find(p + ".F");
    if (!x || !f) throw net::MetadataMismatchError(path.string() + ": missing " + p);
    tr.steps.push_back({t, *x, std::vector<float>(f->data().begin(), f->data().end()), {}});
  }
  const nd::Tensor* xT = c.find("x_T");
  const nd::Tensor* x0 = c.find("x0");
  if (!xT || !x0) throw net::MetadataMismatchError(path.string() + ": missing x_T/x0");
  tr.x_T = *xT;
  tr.x0 = *x0;
  return tr;
}

}  // namespace edaq::diffuse
