// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/nd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "edaq/nd/ops.hpp"
#include "edaq/nd/rng.hpp"

namespace edaq::nd {

bool GradCheckReport::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.pass; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport grad_check(std::vector<NamedTensor> params, const std::function<Tensor()>& output_fn,
                           const GradCheckOptions& opts, const ReferenceFn& reference) {
  GradCheckReport report;
  report.tolerance = opts.tolerance;
  if (params.empty()) return report;

  Rng rng(derive_seed(opts.seed, "grad_check"));
  std::vector<bool> saved_flags;
  for (auto& p : params) {
    saved_flags.push_back(p.tensor.requires_grad());
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }

  Tensor out = output_fn();
  std::vector<double> proj(static_cast<std::size_t>(out.numel()));
  for (auto& r : proj) r = rng.normal();
  auto objective = [&]() {
    double s = 0.0;
    if (reference) {
      const std::vector<double> d = reference();
      if (d.size() != proj.size()) throw ShapeError("grad_check", {out.shape()}, "reference size");
      for (std::size_t i = 0; i < d.size(); ++i) s += proj[i] * d[i];
    } else {
      const Tensor y = output_fn();
      auto d = y.data();
      for (std::size_t i = 0; i < d.size(); ++i) s += proj[i] * d[i];
    }
    return s;
  };

  std::vector<float> projf(proj.begin(), proj.end());
  Tensor loss = sum(mul(out, Tensor(out.shape(), projf)));
  loss.backward();

  for (auto& p : params) {
    GradCheckEntry e;
    e.name = p.name;
    const std::size_t n = static_cast<std::size_t>(p.tensor.numel());
    std::vector<float> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    if (analytic.empty()) analytic.assign(n, 0.0f);

    std::vector<std::size_t> coords;
    if (opts.max_coords == 0 || opts.max_coords >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      coords = rng.permutation(n);
      coords.resize(opts.max_coords);
      std::sort(coords.begin(), coords.end());
    }

    double max_diff = 0.0, max_num = 0.0;
    auto data = p.tensor.mutable_data();
    for (std::size_t i : coords) {
      const float orig = data[i];
      data[i] = static_cast<float>(orig + opts.h);
      const double hp = static_cast<double>(data[i]) - orig;
      const double lp = objective();
      data[i] = static_cast<float>(orig - opts.h);
      const double hm = orig - static_cast<double>(data[i]);
      const double lm = objective();
      data[i] = orig;
      const double numeric = (lp - lm) / (hp + hm);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      max_num = std::max(max_num, std::abs(numeric));
    }
    e.checked = coords.size();
    e.max_rel_error = max_num > 0.0 ? max_diff / max_num : max_diff;
    e.max_abs_error = max_diff;
    e.pass = e.max_rel_error < opts.tolerance || max_diff < opts.abs_tolerance;
    report.entries.push_back(std::move(e));
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].tensor.zero_grad();
    params[i].tensor.set_requires_grad(saved_flags[i]);
  }
  return report;
}

}  // namespace edaq::nd
