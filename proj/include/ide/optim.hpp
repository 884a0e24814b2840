// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "ide/tensor.hpp"

namespace ide {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct OptimizerState {
  AdamConfig config;
  long step = 0;
  std::vector<typename Tensor<S>::Array> m, v;
};

/// One bias-corrected Adam update over `params`, then clears their grads.
/// A parameter whose grad is absent is treated as having zero gradient; if
/// no parameter carries a grad at all the call is a contract violation.
template <typename S>
void adam_step(std::vector<Tensor<S>>& params, OptimizerState<S>& state);

}  // namespace ide
