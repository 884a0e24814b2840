// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ide/nn.hpp"

namespace ide {

struct LfaeConfig {
  int size = 64;     // frame side S
  int c_lat = 16;    // latent channels
  int width = 16;    // first-stage channels; the second stage doubles it
  double flow_scale = 1.0;
  double lambda = 0.1;  // perceptual weight

  int latent_size() const { return size / 4; }
  void validate() const;
};

// Backward flow [N x 2 x h x w] (normalized units) and occlusion [N x 1 x h x w].
template <typename S>
struct FlowField {
  Tensor<S> flow;
  Tensor<S> occlusion;
};

/// Fixed random convolutional features standing in for a pretrained
/// perceptual network. Weights are drawn from seed 0 and never trained.
template <typename S>
struct PerceptualNet {
  Conv2d<S> c1, c2, c3;
  PerceptualNet() = default;
  PerceptualNet(ParamStore<S>& store, const std::string& prefix);
  std::vector<Tensor<S>> features(const Tensor<S>& x) const;
  // Mean over layers of the mean squared feature difference.
  Tensor<S> distance(const Tensor<S>& a, const Tensor<S>& b) const;
};

template <typename S>
struct Stage1Terms {
  Tensor<S> rec;
  Tensor<S> per;
  Tensor<S> total;
};

/// z_tilde = m * W(z, f), with m broadcast over channels.
template <typename S>
Tensor<S> warp(const Tensor<S>& z, const FlowField<S>& field);

/// Latent flow autoencoder: image encoder, flow/occlusion estimator, decoder.
/// Frames are [N x 3 x S x S] in [0,1]; rank-3 inputs are a batch of one and
/// give rank-3 outputs.
template <typename S>
class Lfae {
 public:
  explicit Lfae(const LfaeConfig& cfg, std::uint64_t seed = 0);
  Lfae(const Lfae&) = delete;
  Lfae& operator=(const Lfae&) = delete;

  const LfaeConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }
  const PerceptualNet<S>& perceptual() const { return per_; }

  Tensor<S> encode(const Tensor<S>& frames) const;
  FlowField<S> estimate_flow(const Tensor<S>& frame_i, const Tensor<S>& frame_j) const;
  Tensor<S> decode(const Tensor<S>& z) const;
  // decode(warp(encode(frame_i), estimate_flow(frame_i, frame_j)))
  Tensor<S> reconstruct(const Tensor<S>& frame_i, const Tensor<S>& frame_j) const;
  Stage1Terms<S> stage1_loss(const Tensor<S>& frame_i, const Tensor<S>& frame_j) const;
  // Loss terms for an already reconstructed frame.
  Stage1Terms<S> stage1_terms(const Tensor<S>& recon, const Tensor<S>& target) const;

 private:
  Tensor<S> encode_batch(const Tensor<S>& x) const;
  Tensor<S> decode_batch(const Tensor<S>& z) const;
  void check_frames(const Tensor<S>& x, const char* what) const;

  LfaeConfig cfg_;
  ParamStore<S> store_;
  PerceptualNet<S> per_;
  // encoder
  Conv2d<S> enc_in_, enc_out_;
  ResBlock<S> enc_rb1_, enc_rb2_;
  GroupNorm<S> enc_norm_;
  // flow / occlusion estimator
  Conv2d<S> flow_in_, flow_head_;
  ResBlock<S> flow_rb1_, flow_rb2_, flow_rb3_;
  GroupNorm<S> flow_norm_;
  // decoder
  Conv2d<S> dec_in_, dec_mid_, dec_out_;
  ResBlock<S> dec_rb1_, dec_rb2_;
  GroupNorm<S> dec_norm_mid_, dec_norm_out_;
};

// Finite-difference check of every Stage-1 parameter and input on an 8x8 toy
// configuration in 64-bit mode; returns the max relative error.
double stage1_gradcheck();

}  // namespace ide
