// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/rng.hpp"

#include <cmath>
#include <numbers>

namespace ide {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& word : s_) word = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) return 0;
  // Rejection on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

int Rng::uniform_int(int lo, int hi) {
  return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0x632be59bd9b4e019ULL * (stream + 1));
  splitmix64(state);
  return splitmix64(state);
}

template <typename S>
Tensor<S> randn(const Shape& shape, Rng& rng, S stddev) {
  typename Tensor<S>::Array a(numel(shape));
  for (Index i = 0; i < a.size(); ++i) a[i] = static_cast<S>(rng.normal()) * stddev;
  return Tensor<S>::from_array(shape, std::move(a));
}

template <typename S>
Tensor<S> rand_uniform(const Shape& shape, Rng& rng, S lo, S hi) {
  typename Tensor<S>::Array a(numel(shape));
  for (Index i = 0; i < a.size(); ++i) a[i] = static_cast<S>(rng.uniform(lo, hi));
  return Tensor<S>::from_array(shape, std::move(a));
}

template Tensor<float> randn<float>(const Shape&, Rng&, float);
template Tensor<double> randn<double>(const Shape&, Rng&, double);
template Tensor<float> rand_uniform<float>(const Shape&, Rng&, float, float);
template Tensor<double> rand_uniform<double>(const Shape&, Rng&, double, double);

}  // namespace ide
