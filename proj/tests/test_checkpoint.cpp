// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "ide/checkpoint.hpp"
#include "ide/config.hpp"
#include "test_util.hpp"

using namespace ide;
using ide::testing::TempDir;

namespace {

std::vector<NamedTensor> sample_tensors() {
  return {{"a.w", {2, 3}, {1, -2, 3.5f, 0, 1e-30f, -7}},
          {"b", {}, {42}},
          {"c.empty", {0, 4}, {}},
          meta_tensor("meta.lr", 2e-4)};
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact and resaves identically") {
  TempDir d("ck");
  const std::vector<NamedTensor> t = sample_tensors();
  save_checkpoint(d / "a.ckpt", t);
  std::vector<NamedTensor> back = load_checkpoint(d / "a.ckpt");
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i].name == t[i].name);
    CHECK(back[i].shape == t[i].shape);
    CHECK(back[i].data == t[i].data);
  }
  save_checkpoint(d / "b.ckpt", back);
  CHECK(ide::testing::read_bytes(d / "a.ckpt") == ide::testing::read_bytes(d / "b.ckpt"));
  CHECK(ide::testing::read_bytes(d / "a.ckpt").rfind("IDECKPT1", 0) == 0);
}

TEST_CASE("every flipped byte after the header is detected") {
  const std::string bytes = encode_checkpoint(sample_tensors());
  for (std::size_t i = 12; i < bytes.size(); ++i) {
    std::string bad = bytes;
    bad[i] = static_cast<char>(bad[i] ^ 0x01);
    CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
  }
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint("IDECKPT2" + bytes.substr(8)), CheckpointError);
}

TEST_CASE("unknown versions are rejected with a version error") {
  std::string bytes = encode_checkpoint(sample_tensors());
  bytes[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bytes), CheckpointVersionError);
}

TEST_CASE("saving colliding or malformed tensors is a contract error") {
  CHECK_THROWS_AS(encode_checkpoint({{"x", {1}, {1}}, {"x", {1}, {2}}}), ContractError);
  CHECK_THROWS_AS(encode_checkpoint({{"x", {2, 2}, {1, 2, 3}}}), ContractError);
  TempDir d("ck_missing");
  CHECK_THROWS_AS(load_checkpoint(d / "nope.ckpt"), IoError);
}

TEST_CASE("metadata scalars survive the f32 payload") {
  for (double v : {2e-4, 1e-4, 0.1, 3.0, 123456789.0, -0.3}) {
    std::vector<NamedTensor> t{meta_tensor("m", v)};
    std::vector<NamedTensor> back = decode_checkpoint(encode_checkpoint(t));
    CHECK(std::abs(meta_value(back, "m") - v) <= std::abs(v) * 1e-13);
  }
  CHECK_THROWS_AS(meta_value({}, "absent"), CheckpointError);
}

TEST_CASE("parameter export and import") {
  ParamStore<float> a, b;
  Rng rng(1);
  a.add("l.w", randn<float>({3, 4}, rng));
  a.add("l.b", randn<float>({4}, rng));
  b.add("l.w", Tensorf::zeros({3, 4}));
  b.add("l.b", Tensorf::zeros({4}));
  import_params(b, export_params(a));
  CHECK((b.get("l.w").value() == a.get("l.w").value()).all());
  CHECK((b.get("l.b").value() == a.get("l.b").value()).all());

  ParamStore<float> wrong;
  wrong.add("l.w", Tensorf::zeros({4, 3}));
  CHECK_THROWS_AS(import_params(wrong, export_params(a)), CheckpointError);
  ParamStore<float> extra;
  extra.add("m.w", Tensorf::zeros({1}));
  CHECK_THROWS_AS(import_params(extra, export_params(a)), CheckpointError);
}

TEST_CASE("config parsing: comments, unknown keys, round trip") {
  RunConfig c = parse_config("# desk run\n\niterations = 40\nlr=2e-4\ndisable=ttm,adu\nfuse_mode=traj_concat\n");
  CHECK(c.iterations == 40);
  CHECK(c.lr == 2e-4);
  CHECK(c.disabled("ttm"));
  CHECK(c.disabled("adu"));
  CHECK_FALSE(c.disabled("cfpm"));

  try {
    parse_config("iterations=4\nbogus_key=1\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("iterations=four\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);

  RunConfig r = parse_config(format_config(c));
  CHECK(format_config(r) == format_config(c));
  for (const std::string& key : config_keys()) CHECK(format_config(c).find(key + "=") != std::string::npos);
}

TEST_CASE("config validation") {
  RunConfig c;
  c.validate();
  c.disable = {"vision"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.size = 60;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.beta_max = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
