// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ide/conditioning.hpp"

namespace ide {

/// Tables are indexed by step n = 0..N; entry 0 holds alpha_bar_0 = 1 and is
/// otherwise unused.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta, alpha, alpha_bar, sigma2;
};

// Linear beta from beta_min to beta_max over N steps.
NoiseSchedule make_schedule(int steps, double beta_min = 1e-4, double beta_max = 2e-2);
// Arbitrary table, 0 <= beta < 1 (allows the degenerate beta = 0 chain).
NoiseSchedule schedule_from_betas(const std::vector<double>& betas);

/// Flow [B x T x 2 x h x w] and occlusion [B x T x 1 x h x w] per frame.
template <typename S>
struct FlowFieldSeq {
  Tensor<S> flow;
  Tensor<S> occlusion;
};

// (fx, fy, 2m - 1) per frame -> [B x T x 3 x h x w]
template <typename S>
Tensor<S> make_state(const FlowFieldSeq<S>& seq);
// Inverse of make_state with m clamped to [0, 1].
template <typename S>
FlowFieldSeq<S> split_state(const Tensor<S>& x);

// x_n = sqrt(abar_n) x0 + sqrt(1 - abar_n) eps
template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, int n, const Tensor<S>& eps, const NoiseSchedule& sched);
// Per batch element step; x0 / eps are [B x ...].
template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, const std::vector<int>& n, const Tensor<S>& eps, const NoiseSchedule& sched);

// Mean of q(x_{n-1} | x_n, x0):
// [sqrt(a_n)(1 - abar_{n-1}) x_n + sqrt(abar_{n-1}) beta_n x0] / (1 - abar_n)
template <typename S>
Tensor<S> posterior_mean(const Tensor<S>& x_n, const Tensor<S>& x0_hat, int n, const NoiseSchedule& sched);

/// x0 predictor: (x_n [B x T x 3 x h x w], step per batch element, condition).
template <typename S>
using DenoiseFn = std::function<Tensor<S>(const Tensor<S>&, const std::vector<int>&, const ConditionBundle<S>&)>;

enum class DmLoss { L2Sq, L2, L1 };
DmLoss parse_dm_loss(const std::string& name);
std::string dm_loss_name(DmLoss loss);

// Distance between prediction and target under the chosen norm.
template <typename S>
Tensor<S> dm_distance(const Tensor<S>& pred, const Tensor<S>& x0, DmLoss kind);

// Draws n ~ U{1..N} per element and eps ~ N(0, I), returns the x0 loss.
template <typename S>
Tensor<S> ddpm_loss(const DenoiseFn<S>& denoiser, const Tensor<S>& x0, const ConditionBundle<S>& c,
                    const NoiseSchedule& sched, Rng& rng, DmLoss kind = DmLoss::L2Sq);
// Same with caller-chosen steps and noise (held-out evaluation).
template <typename S>
Tensor<S> ddpm_loss_at(const DenoiseFn<S>& denoiser, const Tensor<S>& x0, const ConditionBundle<S>& c,
                       const NoiseSchedule& sched, const std::vector<int>& n, const Tensor<S>& eps,
                       DmLoss kind = DmLoss::L2Sq);

// One reverse step for all batch elements; rngs holds one stream per element.
template <typename S>
Tensor<S> denoise_step(const DenoiseFn<S>& denoiser, const Tensor<S>& x_n, int n, const ConditionBundle<S>& c,
                       const NoiseSchedule& sched, std::vector<Rng>& rngs);

using StepHook = std::function<void(int n, const Tensor<float>& x)>;

// x_N ~ N(0, I) per element from Rng::derive(seed, element), then N reverse steps.
template <typename S>
FlowFieldSeq<S> sample_sequence(const DenoiseFn<S>& denoiser, const ConditionBundle<S>& c, const NoiseSchedule& sched,
                                std::uint64_t seed, const Shape& state_shape, const StepHook& on_step = {});
// Explicit per-element stream seeds.
template <typename S>
FlowFieldSeq<S> sample_sequence(const DenoiseFn<S>& denoiser, const ConditionBundle<S>& c, const NoiseSchedule& sched,
                                const std::vector<std::uint64_t>& element_seeds, const Shape& state_shape,
                                const StepHook& on_step = {});

struct DenoiserConfig {
  int latent = 16;      // h = w
  int c_lat = 16;
  int frames = 8;
  int cond_width = 64;  // token width of r_exo / t_text
  int base = 24;        // channels at full resolution; 2x at the two lower levels
  int heads = 4;

  void validate() const;
};

/// Per-frame U-Net over [x_n ; z] with time-embedded residual blocks, two
/// downsampling levels, and a bottleneck with spatial self-attention,
/// temporal self-attention over frames and cross-attention to
/// [r_exo[t] ; t_text]. Registered under "dm.*".
template <typename S>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(ParamStore<S>& store, const DenoiserConfig& cfg, Rng& rng);

  const DenoiserConfig& config() const { return cfg_; }
  Tensor<S> operator()(const Tensor<S>& x_n, const std::vector<int>& n, const ConditionBundle<S>& c) const;
  DenoiseFn<S> fn() const;

 private:
  struct AttnBlock {
    LayerNorm<S> ln;
    AttentionParams<S> attn;
  };

  DenoiserConfig cfg_;
  Linear<S> t_fc1_, t_fc2_;
  Conv2d<S> in_, out_;
  ResBlock<S> d1_, down1_, d2_, down2_, mid1_, mid2_, up2_, up1_;
  AttnBlock spatial_, temporal_, cross_;
  GroupNorm<S> out_norm_;
};

double denoiser_gradcheck();

}  // namespace ide
