// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/cfpm.hpp"

#include "ide/gradcheck.hpp"

namespace ide {

template <typename S>
TokenGrid<S> TokenGrid<S>::split(const Tensor<S>& tokens) {
  if (tokens.rank() != 3 || tokens.dim(1) < 2) throw DimensionError("token grid needs [B x 1+L x C]");
  return {slice(tokens, 1, 0, 1), slice(tokens, 1, 1, tokens.dim(1) - 1)};
}

void CfpmConfig::validate() const {
  if (patch < 1 || size % patch != 0)
    throw DimensionError("patch size " + std::to_string(patch) + " does not divide frame size " +
                         std::to_string(size));
  if (heads < 1 || width % heads != 0) throw DimensionError("cfpm width must be divisible by heads");
}

template <typename S>
PatchEmbed<S>::PatchEmbed(ParamStore<S>& store, const CfpmConfig& cfg, Rng& rng) : patch(cfg.patch) {
  cfg.validate();
  const Index in = 3 * cfg.patch * cfg.patch, c = cfg.width, l = cfg.tokens();
  Rng frozen(Rng::derive(0, 0xC11B));
  proj = store.add("vis.proj", randn<S>({in, c}, frozen, static_cast<S>(1.0 / std::sqrt(double(in)))), false);
  pos_exo = store.add(cfg.tie_views ? "vis.pos" : "vis.pos_exo", randn<S>({l, c}, rng, S(0.02)));
  cls_exo = store.add(cfg.tie_views ? "vis.cls" : "vis.cls_exo", randn<S>({1, c}, rng, S(0.02)));
  if (cfg.tie_views) {
    pos_ego = pos_exo;
    cls_ego = cls_exo;
  } else {
    pos_ego = store.add("vis.pos_ego", randn<S>({l, c}, rng, S(0.02)));
    cls_ego = store.add("vis.cls_ego", randn<S>({1, c}, rng, S(0.02)));
  }
}

template <typename S>
TokenGrid<S> PatchEmbed<S>::operator()(const Tensor<S>& frames, bool exo_view) const {
  Tensor<S> x = frames.rank() == 3 ? reshape(frames, {1, frames.dim(0), frames.dim(1), frames.dim(2)}) : frames;
  if (x.rank() != 4 || x.dim(1) != 3) throw DimensionError("embed_patches: expected [B x 3 x S x S]");
  const Index b = x.dim(0), h = x.dim(2), w = x.dim(3), p = patch;
  if (h % p != 0 || w % p != 0)
    throw DimensionError("embed_patches: frame " + to_string(x.shape()) + " not divisible by patch " +
                         std::to_string(p));
  const Index gh = h / p, gw = w / p;
  const Index l = pos_exo.dim(0);
  if (gh * gw != l) throw DimensionError("embed_patches: frame size does not match the positional table");
  Tensor<S> patches = reshape(permute(reshape(x, {b, 3, gh, p, gw, p}), {0, 2, 4, 1, 3, 5}), {b, gh * gw, 3 * p * p});
  Tensor<S> e = add(linear(patches, proj), exo_view ? pos_exo : pos_ego);
  Tensor<S> cls = broadcast_to(reshape(exo_view ? cls_exo : cls_ego, {1, 1, proj.dim(1)}), {b, 1, proj.dim(1)});
  return {cls, e};
}

template <typename S>
Tensor<S> cross_attention(const Tensor<S>& e1, const Tensor<S>& e2, const AttentionParams<S>& p,
                          Tensor<S>* weights_out) {
  if (e2.defined() && (e2.rank() != 3 || e2.dim(2) != e1.dim(2) || e2.dim(0) != e1.dim(0)))
    throw DimensionError("cross_attention: width mismatch " + to_string(e1.shape()) + " vs " + to_string(e2.shape()));
  Tensor<S> d = e2.defined() ? concat(std::vector<Tensor<S>>{e1, e2}, 1) : e1;
  return add(e1, attend(p, e1, d, d, weights_out));
}

template <typename S>
Cfpm<S>::Cfpm(ParamStore<S>& store, const CfpmConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index c = cfg.width;
  ca_exo = AttentionParams<S>(store, cfg.tie_views ? "cfpm.ca" : "cfpm.ca_exo", c, c, c, cfg.heads, rng);
  tl_exo = TransformerLayer<S>(store, cfg.tie_views ? "cfpm.tl" : "cfpm.tl_exo", c, cfg.heads, cfg.mlp_ratio * c, rng);
  if (cfg.tie_views) {
    ca_ego = ca_exo;
    tl_ego = tl_exo;
  } else {
    ca_ego = AttentionParams<S>(store, "cfpm.ca_ego", c, c, c, cfg.heads, rng);
    tl_ego = TransformerLayer<S>(store, "cfpm.tl_ego", c, cfg.heads, cfg.mlp_ratio * c, rng);
  }
}

template <typename S>
CfpmOutput<S> Cfpm<S>::operator()(const TokenGrid<S>& e_exo, const TokenGrid<S>& e_ego) const {
  if (e_exo.cls.shape() != e_ego.cls.shape() || e_exo.patch.dim(2) != e_ego.patch.dim(2))
    throw DimensionError("cfpm: view token shapes differ");
  Tensor<S> y_cls_ego = cross_attention(e_ego.cls, e_exo.patch, ca_ego);
  Tensor<S> y_cls_exo = cross_attention(e_exo.cls, e_ego.patch, ca_exo);
  CfpmOutput<S> out;
  out.exo = TokenGrid<S>::split(tl_exo(concat(std::vector<Tensor<S>>{y_cls_exo, e_exo.patch}, 1)));
  out.ego = TokenGrid<S>::split(tl_ego(concat(std::vector<Tensor<S>>{y_cls_ego, e_ego.patch}, 1)));
  return out;
}

template <typename S>
Tensor<S> align_loss(const Tensor<S>& y_cls_exo, const Tensor<S>& y_cls_ego, bool stop_ego_grad) {
  if (y_cls_exo.shape() != y_cls_ego.shape())
    throw DimensionError("align_loss: " + to_string(y_cls_exo.shape()) + " vs " + to_string(y_cls_ego.shape()));
  const Index c = y_cls_exo.dim(-1);
  const Index rows = y_cls_exo.size() / c;
  Tensor<S> a = reshape(y_cls_exo, {rows, c});
  Tensor<S> b = reshape(stop_ego_grad ? y_cls_ego.detach() : y_cls_ego, {rows, c});
  for (const auto* t : {&a, &b})
    if (!t->value().allFinite()) throw NumericError("align_loss: non-finite class token");
  Tensor<S> log_p = log_softmax(a, -1);
  Tensor<S> log_q = log_softmax(b, -1);
  Tensor<S> kl = sum(mul(exp(log_p), sub(log_p, log_q)));
  return scale(kl, static_cast<S>(1.0 / static_cast<double>(rows)));
}

template struct TokenGrid<float>;
template struct TokenGrid<double>;
template struct PatchEmbed<float>;
template struct PatchEmbed<double>;
template class Cfpm<float>;
template class Cfpm<double>;
template Tensor<float> cross_attention<float>(const Tensor<float>&, const Tensor<float>&, const AttentionParams<float>&,
                                              Tensor<float>*);
template Tensor<double> cross_attention<double>(const Tensor<double>&, const Tensor<double>&,
                                                const AttentionParams<double>&, Tensor<double>*);
template Tensor<float> align_loss<float>(const Tensor<float>&, const Tensor<float>&, bool);
template Tensor<double> align_loss<double>(const Tensor<double>&, const Tensor<double>&, bool);

double cfpm_gradcheck() {
  CfpmConfig cfg;
  cfg.size = 8;
  cfg.patch = 4;
  cfg.width = 8;
  cfg.heads = 2;
  Rng rng(5);
  ParamStore<double> store;
  PatchEmbed<double> embed(store, cfg, rng);
  Cfpm<double> cfpm(store, cfg, rng);
  Tensord exo = rand_uniform<double>({2, 3, 8, 8}, rng, 0.0, 1.0);
  Tensord ego = rand_uniform<double>({2, 3, 8, 8}, rng, 0.0, 1.0);
  exo.set_requires_grad(true);
  ego.set_requires_grad(true);
  std::vector<Tensord> inputs{exo, ego};
  for (const auto& t : store.trainable()) inputs.push_back(t);
  return gradcheck_max_error(
      [&](const std::vector<Tensord>& in) {
        CfpmOutput<double> y = cfpm(embed(in[0], true), embed(in[1], false));
        Tensord tokens = concat(std::vector<Tensord>{y.exo.tokens(), y.ego.tokens()}, 1);
        return add(random_projection_loss(tokens, 61), align_loss(y.exo.cls, y.ego.cls));
      },
      inputs);
}

}  // namespace ide
