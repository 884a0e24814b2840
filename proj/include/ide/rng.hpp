// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

#include "ide/tensor.hpp"

namespace ide {

// xoshiro256++ seeded through splitmix64. The integer stream is identical on
// every platform; normals use Box-Muller on top of it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                          // [0, 1), 53 random bits
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t bound);  // [0, bound), unbiased
  int uniform_int(int lo, int hi);           // inclusive range
  double normal();

  // Independent stream for a child entity (clip, batch element, ...).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

template <typename S>
Tensor<S> randn(const Shape& shape, Rng& rng, S stddev = S(1));

template <typename S>
Tensor<S> rand_uniform(const Shape& shape, Rng& rng, S lo, S hi);

}  // namespace ide
