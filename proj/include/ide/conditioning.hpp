// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ide/cfpm.hpp"
#include "ide/worldsim.hpp"

namespace ide {

class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

enum class FuseMode { Ide, TrajCondition, TrajConcat, EgoVideoFeats };

FuseMode parse_fuse_mode(const std::string& name);
std::string fuse_mode_name(FuseMode mode);

struct ConditionConfig {
  int size = 64;
  int patch = 8;
  int width = 64;
  int heads = 4;
  int frames = 8;
  int vocab = 20;
  int text_dim = 32;
  int video_dim = 64;  // ego video feature width (EgoVideoFeats mode)
  FuseMode fuse_mode = FuseMode::Ide;
  bool use_cfpm = true;
  bool use_adu = true;
  bool use_ttm = true;
  bool stop_ego_grad = false;

  CfpmConfig cfpm() const;
  void validate() const;
};

/// c = {r_exo, t_text, z}. r_exo is [B x T x n x C]; n = 1 + L, plus one
/// trajectory token for the TrajCondition / TrajConcat variants. t_text is
/// [B x C] and undefined when the text unit is disabled.
template <typename S>
struct ConditionBundle {
  Tensor<S> r_exo;
  Tensor<S> t_text;
  Tensor<S> z;
  Tensor<S> y_cls_exo;  // [B x 1 x C], undefined when CFPM is disabled
  Tensor<S> y_cls_ego;
};

// Per-frame (x/S, y/S, sin th, cos th, dx/S, dy/S, dth); deltas are zero at
// frame 0 and dth is wrapped to (-pi, pi]. Returns [B x T x 7].
template <typename S>
Tensor<S> trajectory_features(const std::vector<std::vector<Pose>>& trajectories, int room_size);

constexpr int kTrajectoryFeatures = 7;

template <typename S>
class Conditioner {
 public:
  Conditioner() = default;
  Conditioner(ParamStore<S>& store, const ConditionConfig& cfg, Rng& rng);

  const ConditionConfig& config() const { return cfg_; }

  // [B x T x 7] -> [B x T x C]
  Tensor<S> encode_trajectory(const Tensor<S>& features) const;
  // y_ego tokens replicated over T, each frame attending to the trajectory.
  Tensor<S> temporal_fuse(const TokenGrid<S>& y_ego, const Tensor<S>& traj) const;
  // Per frame: exo class token queries r_ego patches, then a transformer
  // layer over [r_cls, y_patch_exo].
  Tensor<S> exo_update(const TokenGrid<S>& y_exo, const Tensor<S>& r_ego) const;
  // Mean-pooled token embeddings -> [B x C]; empty lists use the null token.
  Tensor<S> encode_text(const std::vector<std::vector<int>>& tokens) const;

  // exo1 / ego1 [B x 3 x S x S]; traj_features [B x T x 7]; z from the frozen
  // Stage-1 encoder; ego_video [B x T x video_dim] for EgoVideoFeats only.
  ConditionBundle<S> build(const Tensor<S>& exo1, const Tensor<S>& ego1, const Tensor<S>& traj_features,
                           const std::vector<std::vector<int>>& tokens, const Tensor<S>& z,
                           const Tensor<S>& ego_video = {}) const;

  PatchEmbed<S> embed;
  Cfpm<S> cfpm;

 private:
  ConditionConfig cfg_;
  Linear<S> traj_in_, traj_out_;
  Linear<S> video_proj_;
  Linear<S> concat_proj_;
  AttentionParams<S> fuse_attn_, update_attn_;
  TransformerLayer<S> update_tl_;
  Tensor<S> text_table_, text_null_;
  Linear<S> text_proj_;
};

double conditioning_gradcheck();

}  // namespace ide
