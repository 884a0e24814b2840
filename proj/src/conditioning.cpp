// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/conditioning.hpp"

#include <cmath>
#include <numbers>

#include "ide/gradcheck.hpp"

namespace ide {

FuseMode parse_fuse_mode(const std::string& name) {
  if (name == "ide") return FuseMode::Ide;
  if (name == "traj_condition") return FuseMode::TrajCondition;
  if (name == "traj_concat") return FuseMode::TrajConcat;
  if (name == "ego_video_feats") return FuseMode::EgoVideoFeats;
  throw ConfigError("unknown fuse_mode '" + name + "' (ide, traj_condition, traj_concat, ego_video_feats)");
}

std::string fuse_mode_name(FuseMode mode) {
  switch (mode) {
    case FuseMode::Ide: return "ide";
    case FuseMode::TrajCondition: return "traj_condition";
    case FuseMode::TrajConcat: return "traj_concat";
    case FuseMode::EgoVideoFeats: return "ego_video_feats";
  }
  return "ide";
}

CfpmConfig ConditionConfig::cfpm() const {
  CfpmConfig c;
  c.size = size;
  c.patch = patch;
  c.width = width;
  c.heads = heads;
  c.stop_ego_grad = stop_ego_grad;
  return c;
}

void ConditionConfig::validate() const {
  cfpm().validate();
  if (frames < 1) throw ConfigError("frames must be >= 1");
  if (vocab < 1 || text_dim < 1 || video_dim < 1) throw ConfigError("vocab, text_dim and video_dim must be positive");
  if (!use_ttm && fuse_mode != FuseMode::Ide)
    throw ConfigError("fuse_mode " + fuse_mode_name(fuse_mode) + " needs the trajectory module");
}

template <typename S>
Tensor<S> trajectory_features(const std::vector<std::vector<Pose>>& trajectories, int room_size) {
  if (trajectories.empty()) throw DimensionError("trajectory_features: empty batch");
  const Index b = static_cast<Index>(trajectories.size());
  const Index t = static_cast<Index>(trajectories[0].size());
  if (t == 0) throw DimensionError("trajectory_features: empty trajectory");
  const double inv = 1.0 / room_size;
  typename Tensor<S>::Array out(b * t * kTrajectoryFeatures);
  for (Index i = 0; i < b; ++i) {
    const auto& tr = trajectories[i];
    if (static_cast<Index>(tr.size()) != t) throw DimensionError("trajectory_features: ragged batch");
    for (Index f = 0; f < t; ++f) {
      const Pose& p = tr[f];
      const Pose& q = f == 0 ? p : tr[f - 1];
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.theta))
        throw DataError("trajectory_features: non-finite pose at frame " + std::to_string(f));
      double dth = std::remainder(p.theta - q.theta, 2.0 * std::numbers::pi);
      if (dth <= -std::numbers::pi) dth += 2.0 * std::numbers::pi;
      const double v[kTrajectoryFeatures] = {p.x * inv, p.y * inv, std::sin(p.theta), std::cos(p.theta),
                                             (p.x - q.x) * inv, (p.y - q.y) * inv, dth};
      for (int k = 0; k < kTrajectoryFeatures; ++k) out[(i * t + f) * kTrajectoryFeatures + k] = static_cast<S>(v[k]);
    }
  }
  return Tensor<S>::from_array({b, t, kTrajectoryFeatures}, std::move(out));
}

template <typename S>
Conditioner<S>::Conditioner(ParamStore<S>& store, const ConditionConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const CfpmConfig vc = cfg_.cfpm();
  const Index c = cfg_.width;
  embed = PatchEmbed<S>(store, vc, rng);
  if (cfg_.use_cfpm) cfpm = Cfpm<S>(store, vc, rng);
  if (cfg_.use_ttm) {
    if (cfg_.fuse_mode == FuseMode::EgoVideoFeats) {
      video_proj_ = Linear<S>(store, "ttm.video_proj", cfg_.video_dim, c, rng);
    } else {
      traj_in_ = Linear<S>(store, "ttm.traj.fc1", kTrajectoryFeatures, c, rng);
      traj_out_ = Linear<S>(store, "ttm.traj.fc2", c, c, rng);
    }
    if (cfg_.fuse_mode == FuseMode::Ide || cfg_.fuse_mode == FuseMode::EgoVideoFeats) {
      fuse_attn_ = AttentionParams<S>(store, "ttm.fuse", c, c, c, cfg_.heads, rng);
      update_attn_ = AttentionParams<S>(store, "ttm.ca", c, c, c, cfg_.heads, rng);
      update_tl_ = TransformerLayer<S>(store, "ttm.tl", c, cfg_.heads, 2 * c, rng);
    }
    if (cfg_.fuse_mode == FuseMode::TrajConcat) concat_proj_ = Linear<S>(store, "ttm.concat", 2 * c, c, rng);
  }
  if (cfg_.use_adu) {
    text_table_ = store.add("adu.embed", randn<S>({cfg_.vocab, cfg_.text_dim}, rng, S(1)));
    text_null_ = store.add("adu.null", randn<S>({1, cfg_.text_dim}, rng, S(1)));
    text_proj_ = Linear<S>(store, "adu.proj", cfg_.text_dim, c, rng);
  }
}

template <typename S>
Tensor<S> Conditioner<S>::encode_trajectory(const Tensor<S>& features) const {
  if (!traj_in_.w.defined()) throw ContractError("encode_trajectory: no trajectory encoder in this configuration");
  if (features.rank() != 3 || features.dim(2) != kTrajectoryFeatures)
    throw DimensionError("encode_trajectory: expected [B x T x 7], got " + to_string(features.shape()));
  return traj_out_(silu(traj_in_(features)));
}

namespace {

template <typename S>
Tensor<S> frame_codes(Index frames, Index width) {
  std::vector<double> pos(frames);
  for (Index t = 0; t < frames; ++t) pos[t] = static_cast<double>(t);
  return sinusoidal_embedding<S>(pos, width);
}

// [B x n x C] -> [B x T x n x C]
template <typename S>
Tensor<S> repeat_frames(const Tensor<S>& tokens, Index frames) {
  const Index b = tokens.dim(0), n = tokens.dim(1), c = tokens.dim(2);
  return broadcast_to(reshape(tokens, {b, 1, n, c}), {b, frames, n, c});
}

}  // namespace

template <typename S>
Tensor<S> Conditioner<S>::temporal_fuse(const TokenGrid<S>& y_ego, const Tensor<S>& traj) const {
  Tensor<S> tok = y_ego.tokens();
  const Index b = tok.dim(0), n = tok.dim(1), c = tok.dim(2);
  if (traj.rank() != 3 || traj.dim(0) != b || traj.dim(2) != c)
    throw DimensionError("temporal_fuse: trajectory " + to_string(traj.shape()) + " vs tokens " +
                         to_string(tok.shape()));
  const Index t = traj.dim(1);
  Tensor<S> pe = frame_codes<S>(t, c);
  // Frame codes enter queries and keys only, so values stay pure content.
  Tensor<S> e1 = reshape(repeat_frames(tok, t), {b * t, n, c});
  Tensor<S> q = reshape(add(repeat_frames(tok, t), reshape(pe, {1, t, 1, c})), {b * t, n, c});
  Tensor<S> k_traj = reshape(broadcast_to(reshape(add(traj, reshape(pe, {1, t, c})), {b, 1, t, c}), {b, t, t, c}),
                             {b * t, t, c});
  Tensor<S> v_traj = reshape(broadcast_to(reshape(traj, {b, 1, t, c}), {b, t, t, c}), {b * t, t, c});
  Tensor<S> keys = concat(std::vector<Tensor<S>>{q, k_traj}, 1);
  Tensor<S> values = concat(std::vector<Tensor<S>>{e1, v_traj}, 1);
  return reshape(add(e1, attend(fuse_attn_, q, keys, values)), {b, t, n, c});
}

template <typename S>
Tensor<S> Conditioner<S>::exo_update(const TokenGrid<S>& y_exo, const Tensor<S>& r_ego) const {
  const Index b = y_exo.cls.dim(0), l = y_exo.patch.dim(1), c = y_exo.patch.dim(2);
  if (r_ego.rank() != 4 || r_ego.dim(0) != b || r_ego.dim(2) != l + 1 || r_ego.dim(3) != c)
    throw DimensionError("exo_update: r_ego " + to_string(r_ego.shape()) + " vs exo patches " +
                         to_string(y_exo.patch.shape()));
  const Index t = r_ego.dim(1);
  Tensor<S> patches = reshape(slice(r_ego, 2, 1, l), {b * t, l, c});
  Tensor<S> cls = reshape(repeat_frames(y_exo.cls, t), {b * t, 1, c});
  Tensor<S> r_cls = cross_attention(cls, patches, update_attn_);
  Tensor<S> yp = reshape(repeat_frames(y_exo.patch, t), {b * t, l, c});
  return reshape(update_tl_(concat(std::vector<Tensor<S>>{r_cls, yp}, 1)), {b, t, l + 1, c});
}

template <typename S>
Tensor<S> Conditioner<S>::encode_text(const std::vector<std::vector<int>>& tokens) const {
  if (!text_table_.defined()) throw ContractError("encode_text: text unit is disabled");
  if (tokens.empty()) throw DimensionError("encode_text: empty batch");
  std::vector<Tensor<S>> rows;
  rows.reserve(tokens.size());
  for (const auto& ids : tokens) {
    for (int id : ids)
      if (id < 0 || id >= cfg_.vocab)
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(cfg_.vocab));
    if (ids.empty()) {
      rows.push_back(text_null_);
    } else {
      rows.push_back(reshape(mean_axis(gather_rows(text_table_, ids), 0), {1, cfg_.text_dim}));
    }
  }
  return text_proj_(concat(rows, 0));
}

template <typename S>
ConditionBundle<S> Conditioner<S>::build(const Tensor<S>& exo1, const Tensor<S>& ego1, const Tensor<S>& traj_features,
                                         const std::vector<std::vector<int>>& tokens, const Tensor<S>& z,
                                         const Tensor<S>& ego_video) const {
  if (!traj_features.defined() || traj_features.rank() != 3)
    throw DimensionError("build: trajectory features must be [B x T x 7]");
  TokenGrid<S> e_exo = embed(exo1, true);
  TokenGrid<S> e_ego = embed(ego1, false);
  const Index b = e_exo.cls.dim(0), t = traj_features.dim(1), c = cfg_.width;
  if (traj_features.dim(0) != b) throw DimensionError("build: trajectory batch does not match frames");

  ConditionBundle<S> out;
  out.z = z;
  TokenGrid<S> y_exo = e_exo, y_ego = e_ego;
  if (cfg_.use_cfpm) {
    CfpmOutput<S> y = cfpm(e_exo, e_ego);
    y_exo = y.exo;
    y_ego = y.ego;
    out.y_cls_exo = y.exo.cls;
    out.y_cls_ego = y.ego.cls;
  }

  if (!cfg_.use_ttm) {
    out.r_exo = repeat_frames(y_exo.tokens(), t);
  } else {
    switch (cfg_.fuse_mode) {
      case FuseMode::Ide:
        out.r_exo = exo_update(y_exo, temporal_fuse(y_ego, encode_trajectory(traj_features)));
        break;
      case FuseMode::EgoVideoFeats: {
        if (!ego_video.defined() || ego_video.rank() != 3 || ego_video.dim(0) != b || ego_video.dim(1) != t ||
            ego_video.dim(2) != cfg_.video_dim)
          throw DimensionError("build: ego video features must be [B x T x " + std::to_string(cfg_.video_dim) + "]");
        out.r_exo = exo_update(y_exo, temporal_fuse(y_ego, video_proj_(ego_video)));
        break;
      }
      case FuseMode::TrajCondition: {
        Tensor<S> traj = encode_trajectory(traj_features);
        out.r_exo = concat(std::vector<Tensor<S>>{repeat_frames(y_exo.tokens(), t), reshape(traj, {b, t, 1, c})}, 2);
        break;
      }
      case FuseMode::TrajConcat: {
        Tensor<S> traj = encode_trajectory(traj_features);
        Tensor<S> cls_ego = broadcast_to(y_ego.cls, {b, t, c});
        Tensor<S> fused = concat_proj_(concat(std::vector<Tensor<S>>{cls_ego, traj}, 2));
        out.r_exo = concat(std::vector<Tensor<S>>{repeat_frames(y_exo.tokens(), t), reshape(fused, {b, t, 1, c})}, 2);
        break;
      }
    }
  }
  if (cfg_.use_adu) {
    if (static_cast<Index>(tokens.size()) != b) throw DimensionError("build: one token list per batch element");
    out.t_text = encode_text(tokens);
  }
  return out;
}

template class Conditioner<float>;
template class Conditioner<double>;
template Tensor<float> trajectory_features<float>(const std::vector<std::vector<Pose>>&, int);
template Tensor<double> trajectory_features<double>(const std::vector<std::vector<Pose>>&, int);

double conditioning_gradcheck() {
  ConditionConfig cfg;
  cfg.size = 8;
  cfg.patch = 4;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.frames = 3;
  cfg.vocab = 5;
  cfg.text_dim = 4;
  Rng rng(9);
  ParamStore<double> store;
  Conditioner<double> cond(store, cfg, rng);
  Tensord exo = rand_uniform<double>({2, 3, 8, 8}, rng, 0.0, 1.0);
  Tensord ego = rand_uniform<double>({2, 3, 8, 8}, rng, 0.0, 1.0);
  Tensord traj = randn<double>({2, 3, kTrajectoryFeatures}, rng, 0.5);
  for (Tensord* t : {&exo, &ego, &traj}) t->set_requires_grad(true);
  std::vector<Tensord> inputs{exo, ego, traj};
  for (const auto& t : store.trainable()) inputs.push_back(t);
  const std::vector<std::vector<int>> tokens{{1, 3, 3}, {}};
  return gradcheck_max_error(
      [&](const std::vector<Tensord>& in) {
        ConditionBundle<double> c = cond.build(in[0], in[1], in[2], tokens, Tensord());
        Tensord loss = add(random_projection_loss(c.r_exo, 71), random_projection_loss(c.t_text, 72));
        return add(loss, align_loss(c.y_cls_exo, c.y_cls_ego));
      },
      inputs);
}

}  // namespace ide
