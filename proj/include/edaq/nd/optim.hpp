// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "edaq/nd/tensor.hpp"

namespace edaq::nd {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over groups of leaf tensors, each group with its own learning rate.
/// Moments are kept in double.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void add_group(std::vector<Tensor> params, double lr);
  void set_lr(std::size_t group, double lr);

  /// Applies one update from the current grads. Params without a grad
  /// buffer are skipped.
  void step();
  void zero_grad();
  std::int64_t steps() const noexcept { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  struct Group {
    double lr;
    std::vector<Slot> slots;
  };
  AdamOptions opts_;
  std::vector<Group> groups_;
  std::int64_t t_ = 0;
};

}  // namespace edaq::nd
