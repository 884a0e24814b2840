// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/diffusion.hpp"

#include <cmath>

#include "ide/gradcheck.hpp"

namespace ide {

NoiseSchedule schedule_from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw ConfigError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  const std::size_t n = betas.size() + 1;
  s.beta.assign(n, 0.0);
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  s.sigma2.assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double b = betas[i - 1];
    if (!(b >= 0.0 && b < 1.0)) throw ConfigError("beta_" + std::to_string(i) + " = " + std::to_string(b) +
                                                  " outside [0, 1)");
    s.beta[i] = b;
    s.alpha[i] = 1.0 - b;
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
    const double denom = 1.0 - s.alpha_bar[i];
    s.sigma2[i] = denom > 0.0 ? (1.0 - s.alpha_bar[i - 1]) / denom * b : 0.0;
  }
  return s;
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("diffusion steps must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw ConfigError("need 0 < beta_min <= beta_max < 1, got [" + std::to_string(beta_min) + ", " +
                      std::to_string(beta_max) + "]");
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i)
    betas[i] = steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / static_cast<double>(steps - 1);
  return schedule_from_betas(betas);
}

namespace {

void check_step(int n, const NoiseSchedule& sched, const char* what) {
  if (n < 1 || n > sched.steps)
    throw ContractError(std::string(what) + ": step " + std::to_string(n) + " outside [1, " +
                        std::to_string(sched.steps) + "]");
}

// Per-element coefficient tensor [B x 1 x ... x 1] for broadcasting against x.
template <typename S>
Tensor<S> per_element(const std::vector<double>& values, const Shape& like) {
  Shape shape(like.size(), 1);
  shape[0] = static_cast<Index>(values.size());
  typename Tensor<S>::Array a(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) a[i] = static_cast<S>(values[i]);
  return Tensor<S>::from_array(shape, std::move(a));
}

}  // namespace

template <typename S>
Tensor<S> make_state(const FlowFieldSeq<S>& seq) {
  if (seq.flow.rank() != 5 || seq.flow.dim(2) != 2 || seq.occlusion.rank() != 5 || seq.occlusion.dim(2) != 1)
    throw DimensionError("make_state: expected flow [B x T x 2 x h x w] and occlusion [B x T x 1 x h x w]");
  return concat(std::vector<Tensor<S>>{seq.flow, add_scalar(scale(seq.occlusion, S(2)), S(-1))}, 2);
}

template <typename S>
FlowFieldSeq<S> split_state(const Tensor<S>& x) {
  if (x.rank() != 5 || x.dim(2) != 3) throw DimensionError("split_state: expected [B x T x 3 x h x w]");
  FlowFieldSeq<S> out;
  out.flow = slice(x, 2, 0, 2);
  out.occlusion = clamp(scale(add_scalar(slice(x, 2, 2, 1), S(1)), S(0.5)), S(0), S(1));
  return out;
}

template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, int n, const Tensor<S>& eps, const NoiseSchedule& sched) {
  check_step(n, sched, "q_sample");
  if (x0.shape() != eps.shape()) throw DimensionError("q_sample: noise shape differs from x0");
  const double ab = sched.alpha_bar[n];
  return add(scale(x0, static_cast<S>(std::sqrt(ab))), scale(eps, static_cast<S>(std::sqrt(1.0 - ab))));
}

template <typename S>
Tensor<S> q_sample(const Tensor<S>& x0, const std::vector<int>& n, const Tensor<S>& eps, const NoiseSchedule& sched) {
  if (x0.shape() != eps.shape()) throw DimensionError("q_sample: noise shape differs from x0");
  if (static_cast<Index>(n.size()) != x0.dim(0)) throw DimensionError("q_sample: one step per batch element");
  std::vector<double> a(n.size()), b(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    check_step(n[i], sched, "q_sample");
    a[i] = std::sqrt(sched.alpha_bar[n[i]]);
    b[i] = std::sqrt(1.0 - sched.alpha_bar[n[i]]);
  }
  return add(mul(x0, per_element<S>(a, x0.shape())), mul(eps, per_element<S>(b, x0.shape())));
}

template <typename S>
Tensor<S> posterior_mean(const Tensor<S>& x_n, const Tensor<S>& x0_hat, int n, const NoiseSchedule& sched) {
  check_step(n, sched, "posterior_mean");
  if (x_n.shape() != x0_hat.shape()) throw DimensionError("posterior_mean: x_n and x0 shapes differ");
  const double denom = 1.0 - sched.alpha_bar[n];
  if (n == 1 || denom <= 0.0) return x0_hat;  // abar_0 = 1, or a noiseless chain
  const double cx = std::sqrt(sched.alpha[n]) * (1.0 - sched.alpha_bar[n - 1]) / denom;
  const double c0 = std::sqrt(sched.alpha_bar[n - 1]) * sched.beta[n] / denom;
  return add(scale(x_n, static_cast<S>(cx)), scale(x0_hat, static_cast<S>(c0)));
}

DmLoss parse_dm_loss(const std::string& name) {
  if (name == "l2sq") return DmLoss::L2Sq;
  if (name == "l2") return DmLoss::L2;
  if (name == "l1") return DmLoss::L1;
  throw ConfigError("unknown dm_loss '" + name + "' (l2sq, l2, l1)");
}

std::string dm_loss_name(DmLoss loss) {
  switch (loss) {
    case DmLoss::L2Sq: return "l2sq";
    case DmLoss::L2: return "l2";
    case DmLoss::L1: return "l1";
  }
  return "l2sq";
}

template <typename S>
Tensor<S> dm_distance(const Tensor<S>& pred, const Tensor<S>& x0, DmLoss kind) {
  if (pred.shape() != x0.shape())
    throw DimensionError("dm loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(x0.shape()));
  Tensor<S> d = sub(pred, x0);
  switch (kind) {
    case DmLoss::L2Sq: return mean(square(d));
    case DmLoss::L1: return mean(abs(d));
    case DmLoss::L2: {
      const Index b = d.dim(0);
      Tensor<S> per = mean_axis(square(reshape(d, {b, d.size() / b})), 1);
      return mean(sqrt(add_scalar(per, S(1e-12))));
    }
  }
  return mean(square(d));
}

template <typename S>
Tensor<S> ddpm_loss_at(const DenoiseFn<S>& denoiser, const Tensor<S>& x0, const ConditionBundle<S>& c,
                       const NoiseSchedule& sched, const std::vector<int>& n, const Tensor<S>& eps, DmLoss kind) {
  Tensor<S> target = x0.detach();
  Tensor<S> x_n = q_sample(target, n, eps, sched);
  return dm_distance(denoiser(x_n, n, c), target, kind);
}

template <typename S>
Tensor<S> ddpm_loss(const DenoiseFn<S>& denoiser, const Tensor<S>& x0, const ConditionBundle<S>& c,
                    const NoiseSchedule& sched, Rng& rng, DmLoss kind) {
  std::vector<int> n(static_cast<std::size_t>(x0.dim(0)));
  for (int& v : n) v = rng.uniform_int(1, sched.steps);
  Tensor<S> eps = randn<S>(x0.shape(), rng);
  return ddpm_loss_at(denoiser, x0, c, sched, n, eps, kind);
}

template <typename S>
Tensor<S> denoise_step(const DenoiseFn<S>& denoiser, const Tensor<S>& x_n, int n, const ConditionBundle<S>& c,
                       const NoiseSchedule& sched, std::vector<Rng>& rngs) {
  check_step(n, sched, "denoise_step");
  const Index b = x_n.dim(0);
  if (static_cast<Index>(rngs.size()) != b) throw DimensionError("denoise_step: one rng per batch element");
  NoGradGuard guard;
  Tensor<S> x0_hat = clamp(denoiser(x_n, std::vector<int>(b, n), c), S(-2), S(2));
  if (x0_hat.shape() != x_n.shape()) throw DimensionError("denoise_step: denoiser changed the state shape");
  Tensor<S> mu = posterior_mean(x_n, x0_hat, n, sched);
  if (n == 1) return mu;
  const S sigma = static_cast<S>(std::sqrt(sched.sigma2[n]));
  const Index per = x_n.size() / b;
  auto& v = mu.value_mut();
  for (Index i = 0; i < b; ++i)
    for (Index k = 0; k < per; ++k) v[i * per + k] += sigma * static_cast<S>(rngs[i].normal());
  return mu;
}

template <typename S>
FlowFieldSeq<S> sample_sequence(const DenoiseFn<S>& denoiser, const ConditionBundle<S>& c, const NoiseSchedule& sched,
                                const std::vector<std::uint64_t>& element_seeds, const Shape& state_shape,
                                const StepHook& on_step) {
  if (state_shape.size() != 5 || state_shape[2] != 3)
    throw DimensionError("sample_sequence: state must be [B x T x 3 x h x w]");
  const Index b = state_shape[0];
  if (static_cast<Index>(element_seeds.size()) != b) throw DimensionError("sample_sequence: one seed per element");
  NoGradGuard guard;
  std::vector<Rng> rngs;
  rngs.reserve(b);
  for (std::uint64_t s : element_seeds) rngs.emplace_back(s);
  const Index per = numel(state_shape) / b;
  typename Tensor<S>::Array init(b * per);
  for (Index i = 0; i < b; ++i)
    for (Index k = 0; k < per; ++k) init[i * per + k] = static_cast<S>(rngs[i].normal());
  Tensor<S> x = Tensor<S>::from_array(state_shape, std::move(init));
  for (int n = sched.steps; n >= 1; --n) {
    x = denoise_step(denoiser, x, n, c, sched, rngs);
    if (on_step) on_step(n - 1, x.template cast<float>());
  }
  return split_state(x);
}

template <typename S>
FlowFieldSeq<S> sample_sequence(const DenoiseFn<S>& denoiser, const ConditionBundle<S>& c, const NoiseSchedule& sched,
                                std::uint64_t seed, const Shape& state_shape, const StepHook& on_step) {
  if (state_shape.empty()) throw DimensionError("sample_sequence: empty state shape");
  std::vector<std::uint64_t> seeds;
  for (Index i = 0; i < state_shape[0]; ++i) seeds.push_back(Rng::derive(seed, static_cast<std::uint64_t>(i)));
  return sample_sequence(denoiser, c, sched, seeds, state_shape, on_step);
}

void DenoiserConfig::validate() const {
  if (latent < 4 || latent % 4 != 0) throw DimensionError("denoiser: latent size must be a multiple of 4");
  if (c_lat < 1 || frames < 1 || cond_width < 1 || base < 2) throw DimensionError("denoiser: bad dimensions");
  if (heads < 1 || (2 * base) % heads != 0) throw DimensionError("denoiser: bottleneck width not divisible by heads");
}

template <typename S>
Denoiser<S>::Denoiser(ParamStore<S>& store, const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const Index c0 = cfg_.base, c1 = 2 * cfg_.base, c2 = 2 * cfg_.base, e = 4 * cfg_.base;
  t_fc1_ = Linear<S>(store, "dm.time.fc1", c0, e, rng);
  t_fc2_ = Linear<S>(store, "dm.time.fc2", e, e, rng);
  in_ = Conv2d<S>(store, "dm.in", 3 + cfg_.c_lat, c0, 3, 1, rng);
  d1_ = ResBlock<S>(store, "dm.d1", c0, c0, 1, e, rng);
  down1_ = ResBlock<S>(store, "dm.down1", c0, c1, 2, e, rng);
  d2_ = ResBlock<S>(store, "dm.d2", c1, c1, 1, e, rng);
  down2_ = ResBlock<S>(store, "dm.down2", c1, c2, 2, e, rng);
  mid1_ = ResBlock<S>(store, "dm.mid1", c2, c2, 1, e, rng);
  spatial_ = {LayerNorm<S>(store, "dm.sa.ln", c2), AttentionParams<S>(store, "dm.sa", c2, c2, c2, cfg_.heads, rng)};
  temporal_ = {LayerNorm<S>(store, "dm.ta.ln", c2), AttentionParams<S>(store, "dm.ta", c2, c2, c2, cfg_.heads, rng)};
  cross_ = {LayerNorm<S>(store, "dm.ca.ln", c2),
            AttentionParams<S>(store, "dm.ca", c2, cfg_.cond_width, c2, cfg_.heads, rng)};
  mid2_ = ResBlock<S>(store, "dm.mid2", c2, c2, 1, e, rng);
  up2_ = ResBlock<S>(store, "dm.up2", c2 + c1, c1, 1, e, rng);
  up1_ = ResBlock<S>(store, "dm.up1", c1 + c0, c0, 1, e, rng);
  out_norm_ = GroupNorm<S>(store, "dm.out_norm", c0, norm_groups(c0));
  out_ = Conv2d<S>(store, "dm.out", c0, 3, 3, 1, rng, Init::Zero);
}

template <typename S>
Tensor<S> Denoiser<S>::operator()(const Tensor<S>& x_n, const std::vector<int>& n, const ConditionBundle<S>& c) const {
  const Index h = cfg_.latent;
  if (x_n.rank() != 5 || x_n.dim(2) != 3 || x_n.dim(3) != h || x_n.dim(4) != h)
    throw DimensionError("denoiser: expected [B x T x 3 x " + std::to_string(h) + " x " + std::to_string(h) +
                         "], got " + to_string(x_n.shape()));
  const Index b = x_n.dim(0), t = x_n.dim(1), bt = b * t;
  if (static_cast<Index>(n.size()) != b) throw DimensionError("denoiser: one step per batch element");
  if (!c.z.defined() || c.z.rank() != 4 || c.z.dim(0) != b || c.z.dim(1) != cfg_.c_lat || c.z.dim(2) != h)
    throw DimensionError("denoiser: latent z must be [B x " + std::to_string(cfg_.c_lat) + " x h x w]");
  if (!c.r_exo.defined() || c.r_exo.rank() != 4 || c.r_exo.dim(0) != b || c.r_exo.dim(1) != t ||
      c.r_exo.dim(3) != cfg_.cond_width)
    throw DimensionError("denoiser: r_exo " + (c.r_exo.defined() ? to_string(c.r_exo.shape()) : std::string("<none>")) +
                         " does not match state " + to_string(x_n.shape()));

  const Index c0 = cfg_.base, c2 = 2 * cfg_.base, e = 4 * cfg_.base;
  std::vector<double> steps(n.begin(), n.end());
  Tensor<S> emb = t_fc2_(silu(t_fc1_(sinusoidal_embedding<S>(steps, c0))));
  emb = reshape(broadcast_to(reshape(emb, {b, 1, e}), {b, t, e}), {bt, e});

  const Index cl = cfg_.c_lat;
  Tensor<S> zf = reshape(broadcast_to(reshape(c.z, {b, 1, cl, h, h}), {b, t, cl, h, h}), {bt, cl, h, h});
  Tensor<S> x = concat(std::vector<Tensor<S>>{reshape(x_n, {bt, 3, h, h}), zf}, 1);

  Tensor<S> s1 = d1_(in_(x), emb);
  Tensor<S> s2 = d2_(down1_(s1, emb), emb);
  Tensor<S> m = mid1_(down2_(s2, emb), emb);

  const Index q = h / 4, p = q * q;
  Tensor<S> tok = permute(reshape(m, {bt, c2, p}), {0, 2, 1});
  {
    Tensor<S> u = spatial_.ln(tok);
    tok = add(tok, attend(spatial_.attn, u, u, u));
  }
  {
    Tensor<S> tt = reshape(permute(reshape(tok, {b, t, p, c2}), {0, 2, 1, 3}), {b * p, t, c2});
    std::vector<double> frames(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) frames[i] = static_cast<double>(i);
    Tensor<S> u = add(temporal_.ln(tt), sinusoidal_embedding<S>(frames, c2));
    tt = add(tt, attend(temporal_.attn, u, u, u));
    tok = reshape(permute(reshape(tt, {b, p, t, c2}), {0, 2, 1, 3}), {bt, p, c2});
  }
  {
    const Index cw = cfg_.cond_width, nr = c.r_exo.dim(2);
    Tensor<S> ctx = reshape(c.r_exo, {bt, nr, cw});
    if (c.t_text.defined()) {
      Tensor<S> text = reshape(broadcast_to(reshape(c.t_text, {b, 1, 1, cw}), {b, t, 1, cw}), {bt, 1, cw});
      ctx = concat(std::vector<Tensor<S>>{ctx, text}, 1);
    }
    tok = add(tok, attend(cross_.attn, cross_.ln(tok), ctx, ctx));
  }
  m = mid2_(reshape(permute(tok, {0, 2, 1}), {bt, c2, q, q}), emb);

  Tensor<S> u2 = up2_(concat(std::vector<Tensor<S>>{upsample_nearest2x(m), s2}, 1), emb);
  Tensor<S> u1 = up1_(concat(std::vector<Tensor<S>>{upsample_nearest2x(u2), s1}, 1), emb);
  Tensor<S> out = out_(silu(out_norm_(u1)));
  return reshape(out, {b, t, 3, h, h});
}

template <typename S>
DenoiseFn<S> Denoiser<S>::fn() const {
  return [this](const Tensor<S>& x, const std::vector<int>& n, const ConditionBundle<S>& c) { return (*this)(x, n, c); };
}

#define IDE_INSTANTIATE(S)                                                                                          \
  template Tensor<S> make_state<S>(const FlowFieldSeq<S>&);                                                         \
  template FlowFieldSeq<S> split_state<S>(const Tensor<S>&);                                                        \
  template Tensor<S> q_sample<S>(const Tensor<S>&, int, const Tensor<S>&, const NoiseSchedule&);                    \
  template Tensor<S> q_sample<S>(const Tensor<S>&, const std::vector<int>&, const Tensor<S>&, const NoiseSchedule&); \
  template Tensor<S> posterior_mean<S>(const Tensor<S>&, const Tensor<S>&, int, const NoiseSchedule&);              \
  template Tensor<S> dm_distance<S>(const Tensor<S>&, const Tensor<S>&, DmLoss);                                    \
  template Tensor<S> ddpm_loss<S>(const DenoiseFn<S>&, const Tensor<S>&, const ConditionBundle<S>&,                 \
                                  const NoiseSchedule&, Rng&, DmLoss);                                              \
  template Tensor<S> ddpm_loss_at<S>(const DenoiseFn<S>&, const Tensor<S>&, const ConditionBundle<S>&,              \
                                     const NoiseSchedule&, const std::vector<int>&, const Tensor<S>&, DmLoss);      \
  template Tensor<S> denoise_step<S>(const DenoiseFn<S>&, const Tensor<S>&, int, const ConditionBundle<S>&,         \
                                     const NoiseSchedule&, std::vector<Rng>&);                                      \
  template FlowFieldSeq<S> sample_sequence<S>(const DenoiseFn<S>&, const ConditionBundle<S>&, const NoiseSchedule&, \
                                              std::uint64_t, const Shape&, const StepHook&);                       \
  template FlowFieldSeq<S> sample_sequence<S>(const DenoiseFn<S>&, const ConditionBundle<S>&, const NoiseSchedule&, \
                                              const std::vector<std::uint64_t>&, const Shape&, const StepHook&);   \
  template class Denoiser<S>;

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

double denoiser_gradcheck() {
  DenoiserConfig cfg;
  cfg.latent = 4;
  cfg.c_lat = 2;
  cfg.frames = 2;
  cfg.cond_width = 4;
  cfg.base = 4;
  cfg.heads = 2;
  Rng rng(13);
  ParamStore<double> store;
  Denoiser<double> net(store, cfg, rng);
  for (const auto& e : store.entries()) {
    if (e.name.rfind("dm.out.", 0) == 0) {
      Tensord t = e.tensor;
      t.value_mut() = randn<double>(t.shape(), rng, 0.3).value();
    }
  }
  Tensord x = randn<double>({1, 2, 3, 4, 4}, rng);
  Tensord z = randn<double>({1, 2, 4, 4}, rng);
  Tensord r = randn<double>({1, 2, 3, 4}, rng);
  Tensord text = randn<double>({1, 4}, rng);
  for (Tensord* t : {&x, &z, &r, &text}) t->set_requires_grad(true);
  std::vector<Tensord> inputs{x, z, r, text};
  for (const auto& t : store.trainable()) inputs.push_back(t);
  return gradcheck_max_error(
      [&](const std::vector<Tensord>& in) {
        ConditionBundle<double> c;
        c.z = in[1];
        c.r_exo = in[2];
        c.t_text = in[3];
        return random_projection_loss(net(in[0], {37}, c), 83);
      },
      inputs);
}

}  // namespace ide
