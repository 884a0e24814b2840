// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ide/tensor.hpp"

namespace ide {

using ScalarFn = std::function<Tensord(const std::vector<Tensord>&)>;

/// Compares reverse-mode gradients of a scalar function with central
/// differences (64-bit). Per element the error is |a - n| divided by
/// max(|a|, |n|, 1e-3 * max|a|, 1e-10); the maximum over all inputs that
/// require grad is returned.
double gradcheck_max_error(const ScalarFn& fn, const std::vector<Tensord>& inputs, double h = 1e-4);

/// Reduces an op output to a scalar through a fixed random projection so that
/// every output element contributes a distinct weight.
Tensord random_projection_loss(const Tensord& y, std::uint64_t seed);

struct GradcheckEntry {
  std::string name;
  double tolerance;
  std::function<double()> run;  // returns the max relative error
};

struct GradcheckResult {
  std::string name;
  double max_error;
  double tolerance;
  bool passed;
};

// Every registered differentiable op and composite block.
const std::vector<GradcheckEntry>& gradcheck_registry();

// Runs the whole registry, printing one line per entry.
std::vector<GradcheckResult> run_gradcheck_suite(std::ostream& out);

}  // namespace ide
