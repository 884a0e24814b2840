// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ide/ops.hpp"
#include "ide/rng.hpp"

namespace ide {

/// Named parameter table shared by every model. Insertion order is kept so
/// optimizer state and checkpoints enumerate tensors deterministically.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<S> tensor;
    bool trainable;
  };

  // Registers a leaf; trainable leaves get requires_grad.
  Tensor<S> add(const std::string& name, Tensor<S> value, bool trainable = true);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<S>& get(const std::string& name) const;
  std::vector<Tensor<S>> trainable() const;
  const std::vector<Entry>& entries() const { return entries_; }
  // Overwrites values in place (shapes must agree).
  void assign(const std::string& name, const typename Tensor<S>::Array& values);
  void freeze_all();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Init { Uniform, He, Zero };

template <typename S>
struct Linear {
  Tensor<S> w, b;
  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& prefix, Index in, Index out, Rng& rng, bool bias = true,
         Init init = Init::Uniform);
  Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, w, b); }
};

template <typename S>
struct Conv2d {
  Tensor<S> w, b;
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(ParamStore<S>& store, const std::string& prefix, Index in, Index out, int kernel, int stride, Rng& rng,
         Init init = Init::Uniform, bool trainable = true);
  Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename S>
struct GroupNorm {
  Tensor<S> gamma, beta;
  int groups = 1;
  GroupNorm() = default;
  GroupNorm(ParamStore<S>& store, const std::string& prefix, Index channels, int groups);
  Tensor<S> operator()(const Tensor<S>& x) const { return group_norm(x, groups, gamma, beta); }
};

// Largest of 8, 4, 2 groups that leaves at least two channels per group.
int norm_groups(Index channels);

template <typename S>
struct LayerNorm {
  Tensor<S> gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore<S>& store, const std::string& prefix, Index channels);
  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm(x, gamma, beta); }
};

// Pre-activation residual block: GN-SiLU-conv, optional embedding bias,
// GN-SiLU-conv, plus a 1x1 skip when the shape changes.
template <typename S>
struct ResBlock {
  GroupNorm<S> norm1, norm2;
  Conv2d<S> conv1, conv2, skip;
  Linear<S> emb;
  bool has_skip = false;
  bool has_emb = false;
  ResBlock() = default;
  ResBlock(ParamStore<S>& store, const std::string& prefix, Index in, Index out, int stride, Index emb_dim,
           Rng& rng);
  // emb is [N x emb_dim] or undefined.
  Tensor<S> operator()(const Tensor<S>& x, const Tensor<S>& emb_in = {}) const;
};

/// Multi-head attention projections. W_q maps query width to `width`, W_k and
/// W_v map key/value width to `width`, W_o maps back to the query width.
template <typename S>
struct AttentionParams {
  Tensor<S> wq, wk, wv, wo;
  int heads = 1;
  AttentionParams() = default;
  AttentionParams(ParamStore<S>& store, const std::string& prefix, Index query_dim, Index kv_dim, Index width,
                  int heads, Rng& rng);
  Index width() const { return wq.shape()[1]; }
};

/// softmax(q k^T / sqrt(width/heads)) v, per head, followed by W_o.
/// q_in [B x n1 x Cq], k_in / v_in [B x n2 x Ckv]; returns [B x n1 x Cq].
/// When `weights_out` is given it receives the attention rows [B*heads x n1 x n2].
template <typename S>
Tensor<S> attend(const AttentionParams<S>& p, const Tensor<S>& q_in, const Tensor<S>& k_in, const Tensor<S>& v_in,
                 Tensor<S>* weights_out = nullptr);

template <typename S>
struct Mlp {
  Linear<S> fc1, fc2;
  Mlp() = default;
  Mlp(ParamStore<S>& store, const std::string& prefix, Index dim, Index hidden, Rng& rng);
  Tensor<S> operator()(const Tensor<S>& x) const { return fc2(silu(fc1(x))); }
};

// Pre-norm transformer layer over tokens [B x n x C].
template <typename S>
struct TransformerLayer {
  LayerNorm<S> ln1, ln2;
  AttentionParams<S> attn;
  Mlp<S> mlp;
  TransformerLayer() = default;
  TransformerLayer(ParamStore<S>& store, const std::string& prefix, Index dim, int heads, Index mlp_hidden, Rng& rng);
  Tensor<S> operator()(const Tensor<S>& x) const;
};

/// Sinusoidal embedding of integer positions: [positions.size() x dim].
template <typename S>
Tensor<S> sinusoidal_embedding(const std::vector<double>& positions, Index dim);

}  // namespace ide
