// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/lfae.hpp"

#include "ide/gradcheck.hpp"

namespace ide {

void LfaeConfig::validate() const {
  if (size < 8 || size % 4 != 0) throw DimensionError("lfae: frame size must be a multiple of 4, >= 8");
  if (c_lat < 1 || width < 2) throw DimensionError("lfae: channel counts must be positive");
  if (!(flow_scale > 0.0)) throw DimensionError("lfae: flow_scale must be positive");
  if (!(lambda >= 0.0)) throw DimensionError("lfae: lambda must be >= 0");
}

namespace {

template <typename S>
Tensor<S> batched(const Tensor<S>& x, bool* squeezed) {
  *squeezed = x.rank() == 3;
  if (x.rank() == 3) return reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4) throw DimensionError("expected [C x H x W] or [N x C x H x W], got " + to_string(x.shape()));
  return x;
}

template <typename S>
Tensor<S> unbatched(const Tensor<S>& y, bool squeezed) {
  return squeezed ? reshape(y, {y.dim(1), y.dim(2), y.dim(3)}) : y;
}

}  // namespace

template <typename S>
PerceptualNet<S>::PerceptualNet(ParamStore<S>& store, const std::string& prefix) {
  Rng rng(Rng::derive(0, 0x9E7C));
  c1 = Conv2d<S>(store, prefix + ".c1", 3, 8, 3, 1, rng, Init::He, false);
  c2 = Conv2d<S>(store, prefix + ".c2", 8, 16, 3, 2, rng, Init::He, false);
  c3 = Conv2d<S>(store, prefix + ".c3", 16, 32, 3, 2, rng, Init::He, false);
}

template <typename S>
std::vector<Tensor<S>> PerceptualNet<S>::features(const Tensor<S>& x) const {
  Tensor<S> f1 = relu(c1(x));
  Tensor<S> f2 = relu(c2(f1));
  Tensor<S> f3 = relu(c3(f2));
  return {f1, f2, f3};
}

template <typename S>
Tensor<S> PerceptualNet<S>::distance(const Tensor<S>& a, const Tensor<S>& b) const {
  if (a.shape() != b.shape())
    throw DimensionError("perceptual distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  auto fa = features(a);
  auto fb = features(b);
  Tensor<S> total = mean(square(sub(fa[0], fb[0])));
  for (std::size_t l = 1; l < fa.size(); ++l) total = add(total, mean(square(sub(fa[l], fb[l]))));
  return scale(total, static_cast<S>(1.0 / static_cast<double>(fa.size())));
}

template <typename S>
Tensor<S> warp(const Tensor<S>& z, const FlowField<S>& field) {
  bool squeezed = false;
  Tensor<S> zb = batched(z, &squeezed);
  bool fs = false, ms = false;
  Tensor<S> f = batched(field.flow, &fs);
  Tensor<S> m = batched(field.occlusion, &ms);
  if (f.dim(0) != zb.dim(0) || f.dim(1) != 2 || f.dim(2) != zb.dim(2) || f.dim(3) != zb.dim(3) ||
      m.dim(0) != zb.dim(0) || m.dim(1) != 1 || m.dim(2) != zb.dim(2) || m.dim(3) != zb.dim(3)) {
    throw DimensionError("warp: latent " + to_string(z.shape()) + " vs flow " + to_string(field.flow.shape()) +
                         " / occlusion " + to_string(field.occlusion.shape()));
  }
  return unbatched(mul(grid_sample_bilinear(zb, f), m), squeezed);
}

template <typename S>
Lfae<S>::Lfae(const LfaeConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(Rng::derive(seed, 0x1FAE));
  const Index w1 = cfg_.width, w2 = 2 * cfg_.width, cl = cfg_.c_lat;
  per_ = PerceptualNet<S>(store_, "lfae.per");

  enc_in_ = Conv2d<S>(store_, "lfae.enc.in", 3, w1, 3, 1, rng);
  enc_rb1_ = ResBlock<S>(store_, "lfae.enc.rb1", w1, w1, 2, 0, rng);
  enc_rb2_ = ResBlock<S>(store_, "lfae.enc.rb2", w1, w2, 2, 0, rng);
  enc_norm_ = GroupNorm<S>(store_, "lfae.enc.norm", w2, norm_groups(w2));
  enc_out_ = Conv2d<S>(store_, "lfae.enc.out", w2, cl, 1, 1, rng);

  flow_in_ = Conv2d<S>(store_, "lfae.flow.in", 6, w1, 3, 1, rng);
  flow_rb1_ = ResBlock<S>(store_, "lfae.flow.rb1", w1, w1, 2, 0, rng);
  flow_rb2_ = ResBlock<S>(store_, "lfae.flow.rb2", w1, w2, 2, 0, rng);
  flow_rb3_ = ResBlock<S>(store_, "lfae.flow.rb3", w2, w2, 1, 0, rng);
  flow_norm_ = GroupNorm<S>(store_, "lfae.flow.norm", w2, norm_groups(w2));
  // Zero head: an untrained estimator predicts zero flow and a mostly-open mask.
  flow_head_ = Conv2d<S>(store_, "lfae.flow.head", w2, 3, 3, 1, rng, Init::Zero);
  flow_head_.b.value_mut()[2] = S(3);

  dec_in_ = Conv2d<S>(store_, "lfae.dec.in", cl, w2, 3, 1, rng);
  dec_rb1_ = ResBlock<S>(store_, "lfae.dec.rb1", w2, w2, 1, 0, rng);
  dec_rb2_ = ResBlock<S>(store_, "lfae.dec.rb2", w2, w1, 1, 0, rng);
  dec_norm_mid_ = GroupNorm<S>(store_, "lfae.dec.norm_mid", w1, norm_groups(w1));
  dec_mid_ = Conv2d<S>(store_, "lfae.dec.mid", w1, w1, 3, 1, rng);
  dec_norm_out_ = GroupNorm<S>(store_, "lfae.dec.norm_out", w1, norm_groups(w1));
  dec_out_ = Conv2d<S>(store_, "lfae.dec.out", w1, 3, 3, 1, rng);
}

template <typename S>
void Lfae<S>::check_frames(const Tensor<S>& x, const char* what) const {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.size || x.dim(3) != cfg_.size) {
    throw DimensionError(std::string(what) + ": expected [N x 3 x " + std::to_string(cfg_.size) + " x " +
                         std::to_string(cfg_.size) + "], got " + to_string(x.shape()));
  }
}

template <typename S>
Tensor<S> Lfae<S>::encode_batch(const Tensor<S>& x) const {
  check_frames(x, "encode");
  Tensor<S> h = enc_in_(x);
  h = enc_rb1_(h);
  h = enc_rb2_(h);
  return enc_out_(silu(enc_norm_(h)));
}

template <typename S>
Tensor<S> Lfae<S>::encode(const Tensor<S>& frames) const {
  bool squeezed = false;
  Tensor<S> x = batched(frames, &squeezed);
  return unbatched(encode_batch(x), squeezed);
}

template <typename S>
FlowField<S> Lfae<S>::estimate_flow(const Tensor<S>& frame_i, const Tensor<S>& frame_j) const {
  bool si = false, sj = false;
  Tensor<S> a = batched(frame_i, &si);
  Tensor<S> b = batched(frame_j, &sj);
  check_frames(a, "estimate_flow");
  check_frames(b, "estimate_flow");
  if (a.dim(0) != b.dim(0)) throw DimensionError("estimate_flow: batch sizes differ");
  Tensor<S> h = flow_in_(concat(std::vector<Tensor<S>>{a, b}, 1));
  h = flow_rb1_(h);
  h = flow_rb2_(h);
  h = flow_rb3_(h);
  Tensor<S> out = flow_head_(silu(flow_norm_(h)));
  FlowField<S> field;
  field.flow = scale(tanh(slice(out, 1, 0, 2)), static_cast<S>(cfg_.flow_scale));
  field.occlusion = sigmoid(slice(out, 1, 2, 1));
  field.flow = unbatched(field.flow, si);
  field.occlusion = unbatched(field.occlusion, si);
  return field;
}

template <typename S>
Tensor<S> Lfae<S>::decode_batch(const Tensor<S>& z) const {
  const Index h = cfg_.latent_size();
  if (z.rank() != 4 || z.dim(1) != cfg_.c_lat || z.dim(2) != h || z.dim(3) != h) {
    throw DimensionError("decode: expected [N x " + std::to_string(cfg_.c_lat) + " x " + std::to_string(h) + " x " +
                         std::to_string(h) + "], got " + to_string(z.shape()));
  }
  Tensor<S> x = dec_in_(z);
  x = dec_rb1_(x);
  x = upsample_nearest2x(x);
  x = dec_rb2_(x);
  x = upsample_nearest2x(x);
  x = dec_mid_(silu(dec_norm_mid_(x)));
  return sigmoid(dec_out_(silu(dec_norm_out_(x))));
}

template <typename S>
Tensor<S> Lfae<S>::decode(const Tensor<S>& z) const {
  bool squeezed = false;
  Tensor<S> zb = batched(z, &squeezed);
  return unbatched(decode_batch(zb), squeezed);
}

template <typename S>
Tensor<S> Lfae<S>::reconstruct(const Tensor<S>& frame_i, const Tensor<S>& frame_j) const {
  return decode(warp(encode(frame_i), estimate_flow(frame_i, frame_j)));
}

template <typename S>
Stage1Terms<S> Lfae<S>::stage1_terms(const Tensor<S>& recon, const Tensor<S>& target) const {
  if (recon.shape() != target.shape())
    throw DimensionError("stage1 loss: " + to_string(recon.shape()) + " vs " + to_string(target.shape()));
  bool s1 = false, s2 = false;
  Tensor<S> r = batched(recon, &s1);
  Tensor<S> t = batched(target, &s2);
  Stage1Terms<S> out;
  out.rec = mean(square(sub(r, t)));
  out.per = per_.distance(r, t);
  out.total = cfg_.lambda == 0.0 ? out.rec : add(out.rec, scale(out.per, static_cast<S>(cfg_.lambda)));
  return out;
}

template <typename S>
Stage1Terms<S> Lfae<S>::stage1_loss(const Tensor<S>& frame_i, const Tensor<S>& frame_j) const {
  return stage1_terms(reconstruct(frame_i, frame_j), frame_j);
}

template struct PerceptualNet<float>;
template struct PerceptualNet<double>;
template class Lfae<float>;
template class Lfae<double>;
template Tensor<float> warp<float>(const Tensor<float>&, const FlowField<float>&);
template Tensor<double> warp<double>(const Tensor<double>&, const FlowField<double>&);

double stage1_gradcheck() {
  LfaeConfig cfg;
  cfg.size = 8;
  cfg.c_lat = 2;
  cfg.width = 4;
  Lfae<double> model(cfg, 3);
  // The zero-initialized head would hide every upstream gradient.
  Rng rng(77);
  for (const auto& e : model.params().entries()) {
    if (e.name.rfind("lfae.flow.head", 0) == 0) {
      Tensord t = e.tensor;
      t.value_mut() = randn<double>(t.shape(), rng, 0.3).value();
    }
  }
  Tensord a = rand_uniform<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
  Tensord b = rand_uniform<double>({1, 3, 8, 8}, rng, 0.0, 1.0);
  std::vector<Tensord> inputs{a, b};
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  for (const auto& t : model.params().trainable()) inputs.push_back(t);
  // Bilinear sampling is piecewise; a 1e-4 step can straddle a lattice line.
  return gradcheck_max_error(
      [&model](const std::vector<Tensord>& in) { return model.stage1_loss(in[0], in[1]).total; }, inputs, 1e-6);
}

}  // namespace ide
