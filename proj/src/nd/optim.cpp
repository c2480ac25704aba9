// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/nd/optim.hpp"

#include <cmath>

namespace edaq::nd {

void Adam::add_group(std::vector<Tensor> params, double lr) {
  Group g{lr, {}};
  for (auto& p : params) {
    if (!p.is_leaf()) throw AutogradError("Adam: parameters must be leaf tensors");
    const auto n = static_cast<std::size_t>(p.numel());
    g.slots.push_back({std::move(p), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
  groups_.push_back(std::move(g));
}

void Adam::set_lr(std::size_t group, double lr) { groups_.at(group).lr = lr; }

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto& g : groups_) {
    for (auto& s : g.slots) {
      if (!s.param.has_grad()) continue;
      auto grad = s.param.grad();
      auto data = s.param.mutable_data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double gi = grad[i];
        s.m[i] = opts_.beta1 * s.m[i] + (1.0 - opts_.beta1) * gi;
        s.v[i] = opts_.beta2 * s.v[i] + (1.0 - opts_.beta2) * gi * gi;
        const double mh = s.m[i] / c1;
        const double vh = s.v[i] / c2;
        data[i] = static_cast<float>(data[i] - g.lr * mh / (std::sqrt(vh) + opts_.eps));
      }
    }
  }
}

void Adam::zero_grad() {
  for (auto& g : groups_) {
    for (auto& s : g.slots) s.param.zero_grad();
  }
}

}  // namespace edaq::nd
