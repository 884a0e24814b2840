// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ide/checkpoint.hpp"
#include "ide/gradcheck.hpp"
#include "ide/image_io.hpp"
#include "test_util.hpp"

using namespace ide;
using ide::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

Run ide_cli(const std::string& args) {
  const std::string cmd = std::string(IDE_BINARY) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

const std::string kSmall =
    " --set clips=10 --set batch=2 --set eval_clips=2 --set c_lat=4 --set lfae_width=8"
    " --set cond_width=16 --set heads=2 --set text_dim=8 --set unet_base=8 --set steps=5";

// One small dataset and Stage-1 run shared by the cases below.
struct Fixture {
  TempDir root{"cli"};
  std::string data = root / "data", s1 = root / "s1";

  Fixture() {
    REQUIRE(ide_cli("gen-data --seed 3 --out " + data + kSmall).code == 0);
    Run r = ide_cli("train --stage 1 --out " + s1 + " --set data_dir=" + data + " --set iterations=4 --set log_every=1" + kSmall);
    REQUIRE_MESSAGE(r.code == 0, r.output);
  }
  std::string common() const { return " --set data_dir=" + data + kSmall; }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::vector<int> logged_iterations(const std::string& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<int> its;
  while (std::getline(in, line)) its.push_back(std::stoi(line.substr(0, line.find(','))));
  return its;
}

bool has_prefix(const std::vector<NamedTensor>& t, const std::string& prefix) {
  for (const auto& e : t)
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("gen-data: manifest, reruns, bad keys") {
  Fixture& f = fixture();
  CHECK(fs::exists(fs::path(f.data) / "manifest.tsv"));
  TempDir again("cli_again");
  REQUIRE(ide_cli("gen-data --seed 3 --out " + again.str() + kSmall).code == 0);
  CHECK(ide::testing::tree_bytes(f.data) == ide::testing::tree_bytes(again.str()));

  Run bad = ide_cli("gen-data --out " + again.str() + " --set colour=red");
  CHECK(bad.code == 2);
  CHECK(bad.output.find("colour") != std::string::npos);
  CHECK(ide_cli("gen-data --frobnicate").code == 2);
}

TEST_CASE("train: logs, echoed config, prerequisites") {
  Fixture& f = fixture();
  CHECK(fs::exists(fs::path(f.s1) / "stage1.ckpt"));
  std::vector<int> its = logged_iterations(f.s1 + "/train_log.csv");
  REQUIRE(its.size() >= 2);
  for (std::size_t i = 1; i < its.size(); ++i) CHECK(its[i] > its[i - 1]);
  CHECK(ide::testing::read_bytes(f.s1 + "/train_log.csv").rfind("iteration,l_rec,l_per,total\n", 0) == 0);
  CHECK(ide::testing::read_bytes(f.s1 + "/run.cfg").find("iterations=4") != std::string::npos);

  Run missing = ide_cli("train --stage 2 --out " + (f.root / "nope") + f.common());
  CHECK(missing.code == 3);
  CHECK(missing.output.find("stage1") != std::string::npos);
  CHECK(ide_cli("train --stage 2 --stage1-ckpt " + (f.root / "absent.ckpt") + " --out " + (f.root / "nope") + f.common())
            .code == 3);
  CHECK(ide_cli("train --stage 1 --set data_dir=" + (f.root / "no_data") + " --out " + (f.root / "nope")).code == 3);
}

TEST_CASE("stage 2: ablation checkpoints, frozen stage-1 tensors, generation and evaluation") {
  Fixture& f = fixture();
  const std::string s1ckpt = f.s1 + "/stage1.ckpt";
  const std::string full = f.root / "full", nottm = f.root / "nottm";
  Run r = ide_cli("train --stage 2 --stage1-ckpt " + s1ckpt + " --out " + full + " --set iterations=2" + f.common());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = ide_cli("train --stage 2 --stage1-ckpt " + s1ckpt + " --disable ttm --out " + nottm + " --set iterations=2" + f.common());
  REQUIRE_MESSAGE(r.code == 0, r.output);

  std::vector<NamedTensor> a = load_checkpoint(full + "/stage2.ckpt"), b = load_checkpoint(nottm + "/stage2.ckpt");
  CHECK(has_prefix(a, "ttm."));
  CHECK_FALSE(has_prefix(b, "ttm."));
  CHECK(has_prefix(b, "cfpm."));
  CHECK(ide::testing::read_bytes(full + "/train_log.csv").rfind("iteration,l_dm,l_align,total\n", 0) == 0);

  for (const auto& t : load_checkpoint(s1ckpt)) {
    if (t.name.rfind("meta.", 0) == 0) continue;
    const NamedTensor* same = find_tensor(a, t.name);
    REQUIRE_MESSAGE(same != nullptr, t.name);
    CHECK(same->data == t.data);
  }

  const std::string g1 = f.root / "g1", g2 = f.root / "g2";
  const std::string gen = "generate --ckpt " + full + "/stage2.ckpt --seed 5" + f.common();
  REQUIRE(ide_cli(gen + " --out " + g1).code == 0);
  REQUIRE(ide_cli(gen + " --out " + g2).code == 0);
  CHECK(ide::testing::tree_bytes(g1) == ide::testing::tree_bytes(g2));
  int clips = 0;
  for (const auto& e : fs::directory_iterator(g1)) {
    ++clips;
    for (int t = 0; t < 8; ++t) {
      char name[16];
      std::snprintf(name, sizeof(name), "%04d.ppm", t);
      Image img = read_ppm((e.path() / "exo" / name).string());
      CHECK(img.height == 64);
      CHECK(img.width == 64);
    }
    CHECK_FALSE(fs::exists(e.path() / "exo" / "0008.ppm"));
  }
  CHECK(clips == 2);

  CHECK(ide_cli("generate --out " + (f.root / "g3") + f.common()).code == 3);
  CHECK(ide_cli("generate --untrained --ckpt " + full + "/stage2.ckpt --out " + (f.root / "g3") + f.common()).code == 2);
  CHECK(ide_cli("generate --ckpt " + full + "/stage2.ckpt --clip no_such_clip --out " + (f.root / "g3") + f.common())
            .code == 4);

  Run self = ide_cli("evaluate --gen " + g1 + " --ref " + g2);
  REQUIRE(self.code == 0);
  CHECK(self.output.rfind("lpips_surr,fvd,kvd\n0.000000,", 0) == 0);
  Run vs_data = ide_cli("evaluate --gen " + g1 + " --ref " + f.data + " --out " + (f.root / "report.csv"));
  CHECK(vs_data.code == 0);
  CHECK(ide::testing::read_bytes(f.root / "report.csv").rfind("lpips_surr,fvd,kvd\n", 0) == 0);

  fs::remove_all(fs::path(g2) / fs::directory_iterator(g2)->path().filename());
  Run mismatch = ide_cli("evaluate --gen " + g1 + " --ref " + g2);
  CHECK(mismatch.code == 4);
  CHECK(mismatch.output.find("missing") != std::string::npos);
}

TEST_CASE("gradcheck: passes, lists every registry entry, notices a corrupted matmul") {
  Run ok = ide_cli("gradcheck");
  CHECK(ok.code == 0);
  std::size_t lines = 0;
  for (std::size_t p = ok.output.find("max_rel_err="); p != std::string::npos; p = ok.output.find("max_rel_err=", p + 1))
    ++lines;
  CHECK(lines == gradcheck_registry().size());
  for (const auto& e : gradcheck_registry()) CHECK(ok.output.find(e.name) != std::string::npos);
  CHECK(ide_cli("gradcheck --corrupt-matmul-grad").code != 0);
}
