// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/optim.hpp"

#include <cmath>

namespace ide {

template <typename S>
void adam_step(std::vector<Tensor<S>>& params, OptimizerState<S>& state) {
  bool any_grad = false;
  for (const auto& p : params) any_grad = any_grad || p.has_grad();
  if (!any_grad) throw ContractError("adam_step: no parameter has a gradient; call backward() first");

  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor<S>::Array::Zero(p.size()));
      state.v.push_back(Tensor<S>::Array::Zero(p.size()));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: parameter list changed between steps");

  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(c.beta1), b2 = static_cast<S>(c.beta2);
  const S step_size = static_cast<S>(c.lr / bc1);
  const S inv_sqrt_bc2 = static_cast<S>(1.0 / std::sqrt(bc2));
  const S eps = static_cast<S>(c.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].size() != p.size()) throw ContractError("adam_step: moment shape mismatch");
    if (p.has_grad()) {
      const auto& g = p.grad();
      state.m[i] = b1 * state.m[i] + (S(1) - b1) * g;
      state.v[i] = b2 * state.v[i] + (S(1) - b2) * g.square();
    } else {
      state.m[i] *= b1;
      state.v[i] *= b2;
    }
    p.value_mut() -= step_size * state.m[i] / (state.v[i].sqrt() * inv_sqrt_bc2 + eps);
    p.zero_grad();
  }
}

template void adam_step<float>(std::vector<Tensor<float>>&, OptimizerState<float>&);
template void adam_step<double>(std::vector<Tensor<double>>&, OptimizerState<double>&);

}  // namespace ide
