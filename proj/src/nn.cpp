// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/nn.hpp"

#include <cmath>

namespace ide {

template <typename S>
Tensor<S> ParamStore<S>::add(const std::string& name, Tensor<S> value, bool trainable) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  value.set_requires_grad(trainable);
  index_[name] = entries_.size();
  entries_.push_back({name, value, trainable});
  return value;
}

template <typename S>
const Tensor<S>& ParamStore<S>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

template <typename S>
std::vector<Tensor<S>> ParamStore<S>::trainable() const {
  std::vector<Tensor<S>> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

template <typename S>
void ParamStore<S>::assign(const std::string& name, const typename Tensor<S>::Array& values) {
  Tensor<S> t = get(name);
  if (t.size() != values.size()) {
    throw DimensionError("parameter " + name + " expects " + std::to_string(t.size()) + " values, got " +
                         std::to_string(values.size()));
  }
  t.value_mut() = values;
}

template <typename S>
void ParamStore<S>::freeze_all() {
  for (auto& e : entries_) {
    e.trainable = false;
    e.tensor.set_requires_grad(false);
    e.tensor.zero_grad();
  }
}

namespace {

template <typename S>
Tensor<S> init_weight(const Shape& shape, Index fan_in, Init init, Rng& rng) {
  switch (init) {
    case Init::Zero:
      return Tensor<S>::zeros(shape);
    case Init::He:
      return randn<S>(shape, rng, static_cast<S>(std::sqrt(2.0 / static_cast<double>(fan_in))));
    case Init::Uniform:
    default: {
      const S bound = static_cast<S>(1.0 / std::sqrt(static_cast<double>(fan_in)));
      return rand_uniform<S>(shape, rng, -bound, bound);
    }
  }
}

}  // namespace

template <typename S>
Linear<S>::Linear(ParamStore<S>& store, const std::string& prefix, Index in, Index out, Rng& rng, bool bias,
                  Init init) {
  w = store.add(prefix + ".w", init_weight<S>({in, out}, in, init, rng));
  if (bias) b = store.add(prefix + ".b", Tensor<S>::zeros({out}));
}

template <typename S>
Conv2d<S>::Conv2d(ParamStore<S>& store, const std::string& prefix, Index in, Index out, int kernel, int stride_,
                  Rng& rng, Init init, bool trainable)
    : stride(stride_), pad(kernel / 2) {
  w = store.add(prefix + ".w", init_weight<S>({out, in, kernel, kernel}, in * kernel * kernel, init, rng), trainable);
  b = store.add(prefix + ".b", Tensor<S>::zeros({out}), trainable);
}

template <typename S>
GroupNorm<S>::GroupNorm(ParamStore<S>& store, const std::string& prefix, Index channels, int groups_)
    : groups(groups_) {
  gamma = store.add(prefix + ".gamma", Tensor<S>::constant({channels}, S(1)));
  beta = store.add(prefix + ".beta", Tensor<S>::zeros({channels}));
}

template <typename S>
LayerNorm<S>::LayerNorm(ParamStore<S>& store, const std::string& prefix, Index channels) {
  gamma = store.add(prefix + ".gamma", Tensor<S>::constant({channels}, S(1)));
  beta = store.add(prefix + ".beta", Tensor<S>::zeros({channels}));
}

int norm_groups(Index channels) {
  for (int g : {8, 4, 2}) {
    if (channels % g == 0 && channels / g >= 2) return g;
  }
  return 1;
}

template <typename S>
ResBlock<S>::ResBlock(ParamStore<S>& store, const std::string& prefix, Index in, Index out, int stride, Index emb_dim,
                      Rng& rng) {
  norm1 = GroupNorm<S>(store, prefix + ".norm1", in, norm_groups(in));
  conv1 = Conv2d<S>(store, prefix + ".conv1", in, out, 3, stride, rng);
  norm2 = GroupNorm<S>(store, prefix + ".norm2", out, norm_groups(out));
  conv2 = Conv2d<S>(store, prefix + ".conv2", out, out, 3, 1, rng);
  has_skip = in != out || stride != 1;
  if (has_skip) skip = Conv2d<S>(store, prefix + ".skip", in, out, 1, stride, rng);
  has_emb = emb_dim > 0;
  if (has_emb) emb = Linear<S>(store, prefix + ".emb", emb_dim, out, rng);
}

template <typename S>
Tensor<S> ResBlock<S>::operator()(const Tensor<S>& x, const Tensor<S>& emb_in) const {
  Tensor<S> h = conv1(silu(norm1(x)));
  if (has_emb) {
    if (!emb_in.defined()) throw ContractError("ResBlock: embedding input required");
    Tensor<S> e = emb(silu(emb_in));
    h = add(h, reshape(e, {e.shape()[0], e.shape()[1], 1, 1}));
  }
  h = conv2(silu(norm2(h)));
  return add(h, has_skip ? skip(x) : x);
}

template <typename S>
AttentionParams<S>::AttentionParams(ParamStore<S>& store, const std::string& prefix, Index query_dim, Index kv_dim,
                                    Index width, int heads_, Rng& rng)
    : heads(heads_) {
  if (heads <= 0 || width % heads != 0) throw DimensionError("attention width must be divisible by head count");
  wq = store.add(prefix + ".wq", init_weight<S>({query_dim, width}, query_dim, Init::Uniform, rng));
  wk = store.add(prefix + ".wk", init_weight<S>({kv_dim, width}, kv_dim, Init::Uniform, rng));
  wv = store.add(prefix + ".wv", init_weight<S>({kv_dim, width}, kv_dim, Init::Uniform, rng));
  wo = store.add(prefix + ".wo", init_weight<S>({width, query_dim}, width, Init::Uniform, rng));
}

template <typename S>
Tensor<S> attend(const AttentionParams<S>& p, const Tensor<S>& q_in, const Tensor<S>& k_in, const Tensor<S>& v_in,
                 Tensor<S>* weights_out) {
  if (q_in.rank() != 3 || k_in.rank() != 3 || v_in.rank() != 3 || q_in.shape()[0] != k_in.shape()[0] ||
      k_in.shape() != v_in.shape()) {
    throw DimensionError("attend: incompatible token shapes " + to_string(q_in.shape()) + ", " +
                         to_string(k_in.shape()) + ", " + to_string(v_in.shape()));
  }
  const Index b = q_in.shape()[0], n1 = q_in.shape()[1], n2 = k_in.shape()[1];
  const Index d = p.width();
  const Index h = p.heads, dh = d / h;
  Tensor<S> q = linear(q_in, p.wq);
  Tensor<S> k = linear(k_in, p.wk);
  Tensor<S> v = linear(v_in, p.wv);
  if (h > 1) {
    q = reshape(permute(reshape(q, {b, n1, h, dh}), {0, 2, 1, 3}), {b * h, n1, dh});
    k = reshape(permute(reshape(k, {b, n2, h, dh}), {0, 2, 3, 1}), {b * h, dh, n2});
    v = reshape(permute(reshape(v, {b, n2, h, dh}), {0, 2, 1, 3}), {b * h, n2, dh});
  } else {
    k = permute(k, {0, 2, 1});
  }
  Tensor<S> a = softmax(scale(bmm(q, k), static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)))), -1);
  if (weights_out) *weights_out = a;
  Tensor<S> o = bmm(a, v);
  if (h > 1) o = reshape(permute(reshape(o, {b, h, n1, dh}), {0, 2, 1, 3}), {b, n1, d});
  return linear(o, p.wo);
}

template <typename S>
Mlp<S>::Mlp(ParamStore<S>& store, const std::string& prefix, Index dim, Index hidden, Rng& rng)
    : fc1(store, prefix + ".fc1", dim, hidden, rng), fc2(store, prefix + ".fc2", hidden, dim, rng) {}

template <typename S>
TransformerLayer<S>::TransformerLayer(ParamStore<S>& store, const std::string& prefix, Index dim, int heads,
                                      Index mlp_hidden, Rng& rng)
    : ln1(store, prefix + ".ln1", dim),
      ln2(store, prefix + ".ln2", dim),
      attn(store, prefix + ".attn", dim, dim, dim, heads, rng),
      mlp(store, prefix + ".mlp", dim, mlp_hidden, rng) {}

template <typename S>
Tensor<S> TransformerLayer<S>::operator()(const Tensor<S>& x) const {
  Tensor<S> h = ln1(x);
  Tensor<S> y = add(x, attend(attn, h, h, h));
  return add(y, mlp(ln2(y)));
}

template <typename S>
Tensor<S> sinusoidal_embedding(const std::vector<double>& positions, Index dim) {
  const Index half = dim / 2;
  typename Tensor<S>::Array out = Tensor<S>::Array::Zero(static_cast<Index>(positions.size()) * dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    for (Index i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      out[r * dim + i] = static_cast<S>(std::sin(positions[r] * freq));
      out[r * dim + half + i] = static_cast<S>(std::cos(positions[r] * freq));
    }
  }
  return Tensor<S>::from_array({static_cast<Index>(positions.size()), dim}, std::move(out));
}

#define IDE_INSTANTIATE(S)                                                                                  \
  template class ParamStore<S>;                                                                             \
  template struct Linear<S>;                                                                                \
  template struct Conv2d<S>;                                                                                \
  template struct GroupNorm<S>;                                                                             \
  template struct LayerNorm<S>;                                                                             \
  template struct ResBlock<S>;                                                                              \
  template struct AttentionParams<S>;                                                                       \
  template struct Mlp<S>;                                                                                   \
  template struct TransformerLayer<S>;                                                                      \
  template Tensor<S> attend<S>(const AttentionParams<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, \
                               Tensor<S>*);                                                                 \
  template Tensor<S> sinusoidal_embedding<S>(const std::vector<double>&, Index);

IDE_INSTANTIATE(float)
IDE_INSTANTIATE(double)

}  // namespace ide
