// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "ide/diffusion.hpp"
#include "ide/ops.hpp"
#include "ide/optim.hpp"

using namespace ide;

namespace {

struct Moments {
  double mean, var;
};

Moments moments(const std::vector<double>& v) {
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / static_cast<double>(v.size() - 1)};
}

// Returns a fixed prediction whatever the input.
template <typename S>
DenoiseFn<S> oracle(const Tensor<S>& x0) {
  return [x0](const Tensor<S>&, const std::vector<int>&, const ConditionBundle<S>&) { return x0; };
}

template <typename S>
DenoiseFn<S> zero_denoiser() {
  return [](const Tensor<S>& x, const std::vector<int>&, const ConditionBundle<S>&) {
    return Tensor<S>::zeros(x.shape());
  };
}

DenoiserConfig toy_denoiser() {
  DenoiserConfig d;
  d.latent = 8;
  d.c_lat = 3;
  d.frames = 2;
  d.cond_width = 8;
  d.base = 8;
  d.heads = 2;
  return d;
}

ConditionBundle<float> toy_bundle(Rng& rng, Index b) {
  ConditionBundle<float> c;
  c.r_exo = randn<float>({b, 2, 5, 8}, rng);
  c.t_text = randn<float>({b, 8}, rng);
  c.z = randn<float>({b, 3, 8, 8}, rng);
  return c;
}

}  // namespace

TEST_CASE("schedule algebra") {
  NoiseSchedule one = make_schedule(1, 0.02, 0.02);
  CHECK(one.alpha_bar[1] == 1.0 - one.beta[1]);
  CHECK(one.sigma2[1] == 0.0);

  NoiseSchedule s = make_schedule(100, 1e-4, 2e-2);
  double product = 1.0;
  for (int n = 1; n <= 100; ++n) {
    CHECK(s.alpha_bar[n] < s.alpha_bar[n - 1]);
    product *= 1.0 - (1e-4 + (2e-2 - 1e-4) * (n - 1) / 99.0);
  }
  CHECK(s.alpha_bar[100] == doctest::Approx(product).epsilon(1e-12));
  CHECK(s.alpha_bar[100] == doctest::Approx(0.3635632480554922).epsilon(1e-9));
  CHECK(s.beta[1] == doctest::Approx(1e-4));
  CHECK(s.beta[100] == doctest::Approx(2e-2));

  CHECK_THROWS_AS(make_schedule(0), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.1), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.2, 0.1), ConfigError);
  CHECK_THROWS_AS(schedule_from_betas({0.1, 1.0}), ConfigError);
}

TEST_CASE("q_sample special cases") {
  Rng rng(1);
  Tensord x0 = randn<double>({2, 3}, rng), eps = randn<double>({2, 3}, rng);
  NoiseSchedule flat = schedule_from_betas(std::vector<double>(10, 0.0));
  for (int n = 1; n <= 10; ++n) CHECK((q_sample(x0, n, eps, flat).value() == x0.value()).all());

  NoiseSchedule s = make_schedule(20);
  Tensord xn = q_sample(x0, 7, Tensord::zeros({2, 3}), s);
  for (Index i = 0; i < 6; ++i) CHECK(xn.value()[i] == doctest::Approx(std::sqrt(s.alpha_bar[7]) * x0.value()[i]));

  Tensord per = q_sample(x0, std::vector<int>{3, 9}, eps, s);
  Tensord a = q_sample(x0, 3, eps, s), b = q_sample(x0, 9, eps, s);
  for (Index i = 0; i < 3; ++i) {
    CHECK(per.value()[i] == doctest::Approx(a.value()[i]).epsilon(1e-14));
    CHECK(per.value()[3 + i] == doctest::Approx(b.value()[3 + i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(q_sample(x0, 0, eps, s), ContractError);
  CHECK_THROWS_AS(q_sample(x0, 21, eps, s), ContractError);
}

TEST_CASE("q_sample marginal matches the closed form by Monte Carlo") {
  NoiseSchedule s = make_schedule(100);
  const int n = 50, draws = 100000;
  const double x0v = 1.0;
  Rng rng(2);
  Tensord x0 = Tensord::constant({draws}, x0v);
  Tensord xn = q_sample(x0, n, randn<double>({draws}, rng), s);
  Moments m = moments(std::vector<double>(xn.data(), xn.data() + draws));
  const double mean = std::sqrt(s.alpha_bar[n]) * x0v, var = 1.0 - s.alpha_bar[n];
  CHECK(std::abs(m.mean - mean) <= 0.01 * mean);
  CHECK(std::abs(m.var - var) <= 0.01 * var);
}

TEST_CASE("stepwise forward chain agrees with the closed-form marginal at n = 5") {
  NoiseSchedule s = make_schedule(100);
  const int n = 5, draws = 100000;
  const double x0 = 0.7;
  Rng rng(3);
  std::vector<double> chain(draws);
  for (int d = 0; d < draws; ++d) {
    double x = x0;
    for (int k = 1; k <= n; ++k) x = std::sqrt(s.alpha[k]) * x + std::sqrt(s.beta[k]) * rng.normal();
    chain[d] = x;
  }
  Moments m = moments(chain);
  const double mean = std::sqrt(s.alpha_bar[n]) * x0, var = 1.0 - s.alpha_bar[n];
  CHECK(std::abs(m.mean - mean) <= 0.02 * mean);
  CHECK(std::abs(m.var - var) <= 0.02 * var);
}

TEST_CASE("posterior mean equals the Gaussian Bayes posterior") {
  NoiseSchedule s = make_schedule(50, 1e-3, 5e-2);
  Rng rng(4);
  for (int n = 2; n <= 50; n += 4) {
    const double x0 = rng.normal(), xn = rng.normal();
    // prior x_{n-1} ~ N(sqrt(abar_{n-1}) x0, 1 - abar_{n-1}); x_n | x_{n-1} ~ N(sqrt(a_n) x_{n-1}, beta_n)
    const double pm = std::sqrt(s.alpha_bar[n - 1]) * x0, pv = 1.0 - s.alpha_bar[n - 1];
    const double precision = 1.0 / pv + s.alpha[n] / s.beta[n];
    const double bayes = (pm / pv + std::sqrt(s.alpha[n]) * xn / s.beta[n]) / precision;
    const double mu = posterior_mean(Tensord::scalar(xn), Tensord::scalar(x0), n, s).item();
    CHECK(std::abs(mu - bayes) < 1e-10);
    CHECK(s.sigma2[n] == doctest::Approx(1.0 / precision).epsilon(1e-10));
  }
  Tensord x0 = randn<double>({4}, rng), xn = randn<double>({4}, rng);
  CHECK((posterior_mean(xn, x0, 1, s).value() == x0.value()).all());

  // A vanishing beta_n leaves x_n in place when x0_hat agrees with it.
  NoiseSchedule tiny = schedule_from_betas({0.01, 0.02, 1e-12});
  Tensord mu = posterior_mean(xn, xn, 3, tiny);
  for (Index i = 0; i < 4; ++i) CHECK(mu.value()[i] == doctest::Approx(xn.value()[i]).epsilon(1e-9));
}

TEST_CASE("reverse step: last step returns the clamped prediction") {
  NoiseSchedule s = make_schedule(10);
  Rng rng(5);
  Tensorf x = randn<float>({2, 2, 3, 4, 4}, rng);
  Tensorf pred = randn<float>({2, 2, 3, 4, 4}, rng, 3.0f);
  std::vector<Rng> rngs{Rng(1), Rng(2)};
  ConditionBundle<float> c;
  Tensorf out = denoise_step(oracle(pred), x, 1, c, s, rngs);
  CHECK(out.shape() == x.shape());
  Tensorf clamped = clamp(pred, -2.0f, 2.0f);
  CHECK((out.value() == clamped.value()).all());
  CHECK(out.value().abs().maxCoeff() <= 2.0f);
  CHECK(denoise_step(oracle(pred), x, 6, c, s, rngs).shape() == x.shape());
  std::vector<Rng> one{Rng(1)};
  CHECK_THROWS_AS(denoise_step(oracle(pred), x, 6, c, s, one), DimensionError);
}

TEST_CASE("sampling with an oracle denoiser converges to its fixed point") {
  NoiseSchedule s = make_schedule(100);
  Rng rng(6);
  Tensorf target = rand_uniform<float>({2, 3, 3, 4, 4}, rng, -0.9f, 0.9f);
  ConditionBundle<float> c;
  int steps = 0;
  FlowFieldSeq<float> seq =
      sample_sequence(oracle(target), c, s, 42, target.shape(), [&](int, const Tensorf&) { ++steps; });
  CHECK(steps == 100);
  Tensorf x = make_state(seq);
  CHECK((x.value() - target.value()).abs().mean() < 1e-2);
}

TEST_CASE("state packing and sampled field ranges") {
  Rng rng(7);
  FlowFieldSeq<float> f{randn<float>({2, 3, 2, 4, 4}, rng, 0.2f), rand_uniform<float>({2, 3, 1, 4, 4}, rng, 0.f, 1.f)};
  Tensorf x = make_state(f);
  CHECK(x.shape() == Shape{2, 3, 3, 4, 4});
  FlowFieldSeq<float> back = split_state(x);
  CHECK((back.flow.value() == f.flow.value()).all());
  CHECK((back.occlusion.value() - f.occlusion.value()).abs().maxCoeff() < 1e-6f);

  NoiseSchedule s = make_schedule(20);
  ConditionBundle<float> c;
  FlowFieldSeq<float> a = sample_sequence(zero_denoiser<float>(), c, s, 9, {2, 3, 3, 4, 4});
  FlowFieldSeq<float> b = sample_sequence(zero_denoiser<float>(), c, s, 9, {2, 3, 3, 4, 4});
  CHECK(a.flow.shape() == Shape{2, 3, 2, 4, 4});
  CHECK(a.occlusion.shape() == Shape{2, 3, 1, 4, 4});
  CHECK(a.occlusion.value().minCoeff() >= 0.0f);
  CHECK(a.occlusion.value().maxCoeff() <= 1.0f);
  CHECK((a.flow.value() == b.flow.value()).all());

  // Element seeds make each clip independent of its batch neighbours.
  const std::uint64_t s0 = Rng::derive(9, 0), s1 = Rng::derive(9, 1);
  FlowFieldSeq<float> solo = sample_sequence(zero_denoiser<float>(), c, s, std::vector<std::uint64_t>{s1}, {1, 3, 3, 4, 4});
  FlowFieldSeq<float> pair =
      sample_sequence(zero_denoiser<float>(), c, s, std::vector<std::uint64_t>{s0, s1}, {2, 3, 3, 4, 4});
  CHECK((pair.flow.value() == a.flow.value()).all());
  CHECK((slice(pair.flow, 0, 1, 1).value() == solo.flow.value()).all());
}

TEST_CASE("loss variants against analytic values") {
  NoiseSchedule s = make_schedule(30);
  Rng rng(8);
  Tensorf x0 = randn<float>({3, 2, 3, 4, 4}, rng);
  ConditionBundle<float> c;
  CHECK(ddpm_loss(oracle(x0), x0, c, s, rng).item() == 0.0f);
  const double sq = x0.value().template cast<double>().square().mean();
  const double ab = x0.value().template cast<double>().abs().mean();
  CHECK(ddpm_loss(zero_denoiser<float>(), x0, c, s, rng).item() == doctest::Approx(sq).epsilon(1e-5));
  CHECK(ddpm_loss(zero_denoiser<float>(), x0, c, s, rng, DmLoss::L1).item() == doctest::Approx(ab).epsilon(1e-5));

  double l2 = 0.0;
  const Index per = x0.size() / 3;
  for (Index b = 0; b < 3; ++b) l2 += std::sqrt(x0.value().segment(b * per, per).template cast<double>().square().mean());
  CHECK(ddpm_loss(zero_denoiser<float>(), x0, c, s, rng, DmLoss::L2).item() == doctest::Approx(l2 / 3).epsilon(1e-5));

  for (const char* name : {"l2sq", "l2", "l1"}) CHECK(dm_loss_name(parse_dm_loss(name)) == name);
  CHECK_THROWS_AS(parse_dm_loss("huber"), ConfigError);
}

TEST_CASE("denoiser shapes and zero-initialized output") {
  ParamStore<float> store;
  Rng rng(9);
  Denoiser<float> dm(store, toy_denoiser(), rng);
  ConditionBundle<float> c = toy_bundle(rng, 2);
  Tensorf x = randn<float>({2, 2, 3, 8, 8}, rng);
  Tensorf y = dm(x, {3, 40}, c);
  CHECK(y.shape() == x.shape());
  CHECK(y.value().abs().maxCoeff() == 0.0f);

  // Without text the cross-attention runs over r_exo alone.
  ConditionBundle<float> no_text = c;
  no_text.t_text = Tensorf();
  CHECK(dm(x, {3, 40}, no_text).shape() == x.shape());
  CHECK_THROWS_AS(dm(randn<float>({2, 2, 3, 4, 4}, rng), {1, 1}, c), DimensionError);
  CHECK_THROWS_AS(dm(x, {1}, c), DimensionError);
}

TEST_CASE("training reduces the loss on a fixed batch") {
  ParamStore<float> store;
  Rng rng(10);
  Denoiser<float> dm(store, toy_denoiser(), rng);
  ConditionBundle<float> c = toy_bundle(rng, 2);
  NoiseSchedule s = make_schedule(20);
  Tensorf x0 = clamp(randn<float>({2, 2, 3, 8, 8}, rng, 0.5f), -1.0f, 1.0f);
  std::vector<Tensorf> params = store.trainable();
  OptimizerState<float> opt;
  opt.config.lr = 3e-3;
  const std::vector<int> n{5, 12};
  Tensorf eps = randn<float>(x0.shape(), rng);
  const float before = ddpm_loss_at(dm.fn(), x0, c, s, n, eps).item();
  for (int i = 0; i < 30; ++i) {
    backward(ddpm_loss_at(dm.fn(), x0, c, s, n, eps));
    adam_step(params, opt);
  }
  CHECK(ddpm_loss_at(dm.fn(), x0, c, s, n, eps).item() < 0.7f * before);
}

TEST_CASE("denoiser gradients pass finite differences") { CHECK(denoiser_gradcheck() < 1e-4); }
