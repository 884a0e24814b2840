// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "ide/tensor.hpp"

namespace ide {

// Worker count: IDE_THREADS if set, otherwise 1. Work split by parallel_for
// must write disjoint outputs, so results never depend on this value.
int worker_count();
void set_worker_count(int n);

// Runs body(i) for i in [0, n). Each index is processed exactly once.
void parallel_for(Index n, const std::function<void(Index)>& body);

}  // namespace ide
