// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "ide/conditioning.hpp"
#include "ide/ops.hpp"

using namespace ide;

namespace {

ConditionConfig toy(FuseMode mode = FuseMode::Ide) {
  ConditionConfig c;
  c.size = 16;
  c.patch = 4;
  c.width = 8;
  c.heads = 2;
  c.frames = 3;
  c.vocab = 5;
  c.text_dim = 4;
  c.video_dim = 6;
  c.fuse_mode = mode;
  return c;
}

struct Inputs {
  Tensord exo, ego, traj, z;
  std::vector<std::vector<int>> tokens;
};

Inputs inputs(Rng& rng, Index b = 2, Index t = 3) {
  Inputs in;
  in.exo = rand_uniform<double>({b, 3, 16, 16}, rng, 0.0, 1.0);
  in.ego = rand_uniform<double>({b, 3, 16, 16}, rng, 0.0, 1.0);
  in.traj = randn<double>({b, t, kTrajectoryFeatures}, rng);
  in.z = randn<double>({b, 2, 4, 4}, rng);
  for (Index i = 0; i < b; ++i) in.tokens.push_back({static_cast<int>(i % 5), 2, 4});
  return in;
}

bool has_prefix(const ParamStore<double>& store, const std::string& prefix) {
  for (const auto& e : store.entries())
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

void zero(const ParamStore<double>& store, const std::string& name) {
  Tensord t = store.get(name);
  t.value_mut().setZero();
}

Tensord frame(const Tensord& x, Index b, Index t) {
  return reshape(slice(slice(x, 0, b, 1), 1, t, 1), {x.dim(2), x.dim(3)});
}

}  // namespace

TEST_CASE("trajectory features: constant pose and rigid translation") {
  std::vector<Pose> still(4, Pose{20.0, 30.0, 0.5});
  Tensord f = trajectory_features<double>({still}, 64);
  REQUIRE(f.shape() == Shape{1, 4, 7});
  for (Index t = 0; t < 4; ++t)
    for (Index k = 0; k < 7; ++k) {
      CHECK(f.at({0, t, k}) == f.at({0, 0, k}));
      if (k >= 4) CHECK(f.at({0, t, k}) == 0.0);
    }
  CHECK(f.at({0, 0, 0}) == doctest::Approx(20.0 / 64));
  CHECK(f.at({0, 0, 2}) == doctest::Approx(std::sin(0.5)));

  std::vector<Pose> path{{10, 10, 0.1}, {13, 11, 0.4}, {15, 14, 3.0}, {16, 18, -3.0}};
  std::vector<Pose> shifted = path;
  for (auto& p : shifted) {
    p.x += 7;
    p.y -= 3;
  }
  Tensord a = trajectory_features<double>({path, shifted}, 64);
  for (Index t = 0; t < 4; ++t) {
    CHECK(a.at({1, t, 0}) != a.at({0, t, 0}));
    for (Index k = 2; k < 7; ++k) CHECK(a.at({1, t, k}) == doctest::Approx(a.at({0, t, k})).epsilon(1e-12));
  }
  CHECK(a.at({0, 0, 4}) == 0.0);
  CHECK(a.at({0, 1, 4}) == doctest::Approx(3.0 / 64));
  // 3.0 -> -3.0 wraps to a small positive turn.
  CHECK(a.at({0, 3, 6}) == doctest::Approx(2 * std::numbers::pi - 6.0));

  std::vector<Pose> bad = path;
  bad[1].x = std::nan("");
  CHECK_THROWS_AS(trajectory_features<double>({bad}, 64), DataError);
}

TEST_CASE("trajectory encoder and temporal fusion shapes") {
  ParamStore<double> store;
  Rng rng(1);
  Conditioner<double> cond(store, toy(), rng);
  Tensord traj = cond.encode_trajectory(randn<double>({2, 3, 7}, rng));
  CHECK(traj.shape() == Shape{2, 3, 8});
  TokenGrid<double> y{randn<double>({2, 1, 8}, rng), randn<double>({2, 16, 8}, rng)};
  Tensord r = cond.temporal_fuse(y, traj);
  CHECK(r.shape() == Shape{2, 3, 17, 8});
  // Distinct trajectory rows give distinct fused frames.
  CHECK(frame(r, 0, 0).value().matrix() != frame(r, 0, 2).value().matrix());

  Tensord one = cond.temporal_fuse(y, slice(traj, 1, 0, 1));
  CHECK(one.shape() == Shape{2, 1, 17, 8});
  CHECK_THROWS_AS(cond.temporal_fuse(y, randn<double>({2, 3, 5}, rng)), DimensionError);
}

TEST_CASE("temporal fusion reduces to replication with a zero value path and zero trajectory") {
  ParamStore<double> store;
  Rng rng(2);
  Conditioner<double> cond(store, toy(), rng);
  zero(store, "ttm.fuse.wv");
  TokenGrid<double> y{randn<double>({1, 1, 8}, rng), randn<double>({1, 16, 8}, rng)};
  Tensord r = cond.temporal_fuse(y, Tensord::zeros({1, 3, 8}));
  Tensord tok = y.tokens();
  for (Index t = 0; t < 3; ++t)
    for (Index i = 0; i < tok.size(); ++i) CHECK(r.value()[t * tok.size() + i] == tok.value()[i]);
}

TEST_CASE("exo update: residual identity and per-frame equivariance") {
  ParamStore<double> store;
  Rng rng(3);
  Conditioner<double> cond(store, toy(), rng);
  TokenGrid<double> y{randn<double>({1, 1, 8}, rng), randn<double>({1, 16, 8}, rng)};
  Tensord r_ego = randn<double>({1, 3, 17, 8}, rng);

  Tensord out = cond.exo_update(y, r_ego);
  CHECK(out.shape() == Shape{1, 3, 17, 8});
  Tensord permuted = concat(std::vector<Tensord>{slice(r_ego, 1, 2, 1), slice(r_ego, 1, 0, 1), slice(r_ego, 1, 1, 1)}, 1);
  Tensord out_p = cond.exo_update(y, permuted);
  const int order[3] = {2, 0, 1};
  for (Index t = 0; t < 3; ++t)
    CHECK((frame(out_p, 0, t).value() - frame(out, 0, order[t]).value()).abs().maxCoeff() < 1e-12);

  for (const char* name : {"ttm.ca.wv", "ttm.tl.attn.wv", "ttm.tl.mlp.fc2.w", "ttm.tl.mlp.fc2.b"}) zero(store, name);
  Tensord ident = cond.exo_update(y, r_ego);
  Tensord tok = y.tokens();
  for (Index t = 0; t < 3; ++t)
    for (Index i = 0; i < tok.size(); ++i) CHECK(ident.value()[t * tok.size() + i] == tok.value()[i]);
}

TEST_CASE("text unit: null token, order invariance, vocabulary errors") {
  ParamStore<double> store;
  Rng rng(4);
  Conditioner<double> cond(store, toy(), rng);
  Tensord t = cond.encode_text({{}, {1, 3, 4}, {3, 1, 4}, {}});
  REQUIRE(t.shape() == Shape{4, 8});
  CHECK((frame(reshape(t, {4, 1, 1, 8}), 0, 0).value() == frame(reshape(t, {4, 1, 1, 8}), 3, 0).value()).all());
  for (Index k = 0; k < 8; ++k) CHECK(t.at({1, k}) == doctest::Approx(t.at({2, k})).epsilon(1e-14));
  CHECK(t.at({0, 0}) != t.at({1, 0}));

  try {
    cond.encode_text({{1, 7}});
    FAIL("expected a vocabulary error");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find('7') != std::string::npos);
  }
  CHECK_THROWS_AS(cond.encode_text({{-1}}), VocabularyError);
}

TEST_CASE("condition bundle shapes and determinism") {
  ParamStore<double> store;
  Rng rng(5);
  Conditioner<double> cond(store, toy(), rng);
  Inputs in = inputs(rng);
  ConditionBundle<double> a = cond.build(in.exo, in.ego, in.traj, in.tokens, in.z);
  ConditionBundle<double> b = cond.build(in.exo, in.ego, in.traj, in.tokens, in.z);
  CHECK(a.r_exo.shape() == Shape{2, 3, 17, 8});
  CHECK(a.t_text.shape() == Shape{2, 8});
  CHECK(a.z.shape() == in.z.shape());
  CHECK(a.y_cls_exo.shape() == Shape{2, 1, 8});
  CHECK((a.r_exo.value() == b.r_exo.value()).all());
  CHECK((a.t_text.value() == b.t_text.value()).all());
}

TEST_CASE("ablations drop their parameters and degrade the bundle") {
  Rng rng(6);
  Inputs in = inputs(rng);

  ParamStore<double> full;
  Rng r0(7);
  Conditioner<double> cf(full, toy(), r0);
  CHECK(has_prefix(full, "cfpm."));
  CHECK(has_prefix(full, "ttm."));
  CHECK(has_prefix(full, "adu."));

  ConditionConfig c = toy();
  c.use_ttm = false;
  ParamStore<double> no_ttm;
  Rng r1(7);
  Conditioner<double> ct(no_ttm, c, r1);
  CHECK_FALSE(has_prefix(no_ttm, "ttm."));
  ConditionBundle<double> b = ct.build(in.exo, in.ego, in.traj, in.tokens, in.z);
  CfpmOutput<double> y = ct.cfpm(ct.embed(in.exo, true), ct.embed(in.ego, false));
  Tensord tok = y.exo.tokens();
  const Index per = tok.size() / 2;
  for (Index e = 0; e < 2; ++e)
    for (Index t = 0; t < 3; ++t)
      for (Index i = 0; i < per; ++i) CHECK(b.r_exo.value()[(e * 3 + t) * per + i] == tok.value()[e * per + i]);

  c = toy();
  c.use_cfpm = false;
  ParamStore<double> no_cfpm;
  Rng r2(7);
  Conditioner<double> cc(no_cfpm, c, r2);
  CHECK_FALSE(has_prefix(no_cfpm, "cfpm."));
  ConditionBundle<double> bc = cc.build(in.exo, in.ego, in.traj, in.tokens, in.z);
  CHECK_FALSE(bc.y_cls_exo.defined());
  CHECK(bc.r_exo.shape() == Shape{2, 3, 17, 8});

  c = toy();
  c.use_adu = false;
  ParamStore<double> no_adu;
  Rng r3(7);
  Conditioner<double> ca(no_adu, c, r3);
  CHECK_FALSE(has_prefix(no_adu, "adu."));
  CHECK_FALSE(ca.build(in.exo, in.ego, in.traj, in.tokens, in.z).t_text.defined());
}

TEST_CASE("motion fusion variants") {
  Rng rng(8);
  Inputs in = inputs(rng);
  for (FuseMode m : {FuseMode::TrajCondition, FuseMode::TrajConcat}) {
    ParamStore<double> store;
    Rng r(9);
    Conditioner<double> cond(store, toy(m), r);
    CHECK(cond.build(in.exo, in.ego, in.traj, in.tokens, in.z).r_exo.shape() == Shape{2, 3, 18, 8});
    CHECK(has_prefix(store, "ttm.traj."));
    CHECK(has_prefix(store, "ttm.concat.") == (m == FuseMode::TrajConcat));
  }
  ParamStore<double> store;
  Rng r(10);
  Conditioner<double> cond(store, toy(FuseMode::EgoVideoFeats), r);
  CHECK_FALSE(has_prefix(store, "ttm.traj."));
  CHECK(has_prefix(store, "ttm.video_proj."));
  Tensord video = randn<double>({2, 3, 6}, rng);
  CHECK(cond.build(in.exo, in.ego, in.traj, in.tokens, in.z, video).r_exo.shape() == Shape{2, 3, 17, 8});
  CHECK_THROWS_AS(cond.build(in.exo, in.ego, in.traj, in.tokens, in.z), DimensionError);

  for (const char* name : {"ide", "traj_condition", "traj_concat", "ego_video_feats"})
    CHECK(fuse_mode_name(parse_fuse_mode(name)) == name);
  CHECK_THROWS_AS(parse_fuse_mode("video"), ConfigError);

  ConditionConfig c = toy(FuseMode::TrajConcat);
  c.use_ttm = false;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("conditioning gradients pass finite differences") { CHECK(conditioning_gradcheck() < 1e-4); }
