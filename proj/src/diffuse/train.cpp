// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/diffuse/train.hpp"

#include <cmath>
#include <numbers>

#include "edaq/nd/optim.hpp"

namespace edaq::diffuse {

TrainingDivergedError::TrainingDivergedError(std::int64_t iteration, const std::string& detail)
    : std::runtime_error("training diverged at iteration " + std::to_string(iteration) + ": " + detail),
      iteration_(iteration) {}

nlohmann::json TrainResult::to_json() const {
  return {{"iters", losses.size()},
          {"final_loss", final_loss},
          {"loss_threshold", loss_threshold},
          {"below_threshold", below_threshold}};
}

std::vector<double> moving_average(const std::vector<double>& v, std::size_t w) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= w) acc -= v[i - w];
    out[i] = acc / static_cast<double>(std::min(i + 1, w));
  }
  return out;
}

TrainResult train_denoiser(net::Model& model, Dataset data, const NoiseSchedule& sched,
                           const TrainConfig& cfg,
                           const std::function<void(std::int64_t, double)>& progress) {
  TrainResult res;
  res.loss_threshold = cfg.loss_threshold;
  if (cfg.iters <= 0) return res;

  nd::Rng rng(nd::derive_seed(cfg.seed, "train"));
  std::vector<nd::Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  model.set_requires_grad(true);
  nd::Adam opt;
  opt.add_group(params, cfg.lr);

  for (std::int64_t it = 0; it < cfg.iters; ++it) {
    const double progress_frac = static_cast<double>(it) / static_cast<double>(cfg.iters);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress_frac));
    opt.set_lr(0, cfg.lr * (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * cosine));

    nd::Tensor x0 = sample_dataset(data, cfg.batch, rng);
    std::vector<std::int64_t> t(cfg.batch);
    for (auto& v : t) v = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(sched.T)));
    nd::Tensor noise(x0.shape(), rng.normal_vector(static_cast<std::size_t>(x0.numel())));
    nd::Tensor xt = q_sample(x0, t, noise, sched);

    double loss_value;
    try {
      opt.zero_grad();
      nd::Tensor loss = nd::mse_loss(model.forward(xt, t), noise);
      loss_value = loss.item();
      loss.backward();
    } catch (const nd::NumericError& e) {
      model.set_requires_grad(false);
      throw TrainingDivergedError(it, e.what());
    }
    if (!std::isfinite(loss_value)) {
      model.set_requires_grad(false);
      throw TrainingDivergedError(it, "non-finite loss");
    }
    opt.step();
    res.losses.push_back(loss_value);
    if (progress) progress(it, loss_value);
  }
  model.set_requires_grad(false);
  const auto avg = moving_average(res.losses, cfg.average_window);
  res.final_loss = avg.back();
  res.below_threshold = res.final_loss < cfg.loss_threshold;
  return res;
}

}  // namespace edaq::diffuse
