// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "edaq/diffuse/data.hpp"
#include "edaq/diffuse/schedule.hpp"
#include "edaq/net/model.hpp"

namespace edaq::diffuse {

class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(std::int64_t iteration, const std::string& detail);
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

struct TrainConfig {
  std::int64_t iters = 4000;
  std::size_t batch = 64;
  double lr = 2e-3;
  /// Cosine decay of the learning rate down to lr * final_lr_fraction.
  double final_lr_fraction = 0.05;
  std::uint64_t seed = 0;
  /// Window of the moving average reported as the final loss.
  std::size_t average_window = 100;
  /// Final loss must end below this; 1.0 is the loss of predicting zero noise.
  double loss_threshold = 1.0;
};

struct TrainResult {
  std::vector<double> losses;
  double final_loss = 0.0;  // moving average over the last window
  double loss_threshold = 0.0;
  bool below_threshold = false;

  nlohmann::json to_json() const;
};

/// Trains the noise predictor with the epsilon-matching MSE objective.
/// `progress(iter, loss)` is called every iteration when set.
TrainResult train_denoiser(net::Model& model, Dataset data, const NoiseSchedule& sched,
                           const TrainConfig& cfg,
                           const std::function<void(std::int64_t, double)>& progress = {});

/// Trailing moving average with window w (shorter at the start).
std::vector<double> moving_average(const std::vector<double>& v, std::size_t w);

}  // namespace edaq::diffuse
