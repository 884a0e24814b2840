// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/parallel.hpp"

#include <cstdlib>
#include <memory>
#include <mutex>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace ide {

namespace {

int initial_workers() {
  if (const char* env = std::getenv("IDE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

struct Pool {
  int workers = initial_workers();
  std::unique_ptr<tbb::global_control> limit;
  std::unique_ptr<tbb::task_arena> arena;
  std::mutex mutex;

  tbb::task_arena& get() {
    std::lock_guard<std::mutex> lock(mutex);
    if (!arena || arena->max_concurrency() != workers) {
      // TBB caps workers at the core count; IDE_THREADS asks for exactly this many.
      limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, workers);
      arena = std::make_unique<tbb::task_arena>(workers);
    }
    return *arena;
  }
};

Pool& pool() {
  static Pool p;
  return p;
}

}  // namespace

int worker_count() { return pool().workers; }

void set_worker_count(int n) {
  std::lock_guard<std::mutex> lock(pool().mutex);
  pool().workers = n > 0 ? n : 1;
}

void parallel_for(Index n, const std::function<void(Index)>& body) {
  if (n <= 0) return;
  if (worker_count() == 1 || n == 1) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  pool().get().execute([&] {
    tbb::parallel_for(tbb::blocked_range<Index>(0, n), [&](const tbb::blocked_range<Index>& r) {
      for (Index i = r.begin(); i != r.end(); ++i) body(i);
    });
  });
}

}  // namespace ide
