// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "ide/nn.hpp"

namespace ide {

/// One class token plus L patch tokens per batch element:
/// cls [B x 1 x C], patch [B x L x C].
template <typename S>
struct TokenGrid {
  Tensor<S> cls;
  Tensor<S> patch;
  Tensor<S> tokens() const { return concat(std::vector<Tensor<S>>{cls, patch}, 1); }
  static TokenGrid split(const Tensor<S>& tokens);
};

struct CfpmConfig {
  int size = 64;
  int patch = 8;
  int width = 64;
  int heads = 4;
  int mlp_ratio = 2;
  bool tie_views = false;       // one parameter set for both views
  bool stop_ego_grad = false;   // detach the ego side of the alignment loss

  int grid() const { return size / patch; }
  int tokens() const { return grid() * grid(); }
  void validate() const;
};

/// Frozen random patch projection with learned positional embedding and
/// class token per view. Registered under "vis.*".
template <typename S>
struct PatchEmbed {
  Tensor<S> proj;  // [3 P^2 x C], frozen
  Tensor<S> pos_exo, pos_ego;  // [L x C]
  Tensor<S> cls_exo, cls_ego;  // [1 x C]
  int patch = 8;
  PatchEmbed() = default;
  PatchEmbed(ParamStore<S>& store, const CfpmConfig& cfg, Rng& rng);
  // frames [B x 3 x S x S]
  TokenGrid<S> operator()(const Tensor<S>& frames, bool exo_view) const;
};

/// Y = e1 + W_o softmax(q k^T / sqrt(C/h)) v with q = e1 W_q and k, v from
/// d = [e1; e2]. e1 [B x n1 x C]; e2 [B x n2 x C] or undefined for n2 = 0.
template <typename S>
Tensor<S> cross_attention(const Tensor<S>& e1, const Tensor<S>& e2, const AttentionParams<S>& p,
                          Tensor<S>* weights_out = nullptr);

template <typename S>
struct CfpmOutput {
  TokenGrid<S> exo;
  TokenGrid<S> ego;
};

/// Cross-view feature perception: each view's class token attends to the
/// other view's patches, then a transformer layer runs over each view.
/// Registered under "cfpm.*".
template <typename S>
class Cfpm {
 public:
  Cfpm() = default;
  Cfpm(ParamStore<S>& store, const CfpmConfig& cfg, Rng& rng);
  CfpmOutput<S> operator()(const TokenGrid<S>& e_exo, const TokenGrid<S>& e_ego) const;

  AttentionParams<S> ca_exo, ca_ego;
  TransformerLayer<S> tl_exo, tl_ego;
};

/// KL(softmax(y_exo) || softmax(y_ego)) over channels, averaged over the
/// batch. Inputs [B x 1 x C], [B x C] or [C].
template <typename S>
Tensor<S> align_loss(const Tensor<S>& y_cls_exo, const Tensor<S>& y_cls_ego, bool stop_ego_grad = false);

double cfpm_gradcheck();

}  // namespace ide
