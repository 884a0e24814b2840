// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

// ide: gen-data | train | generate | evaluate | gradcheck

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "ide/gradcheck.hpp"
#include "ide/ops.hpp"
#include "ide/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kPrerequisite = 3, kData = 4, kNumeric = 5 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value run configuration file");
  cmd->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "run seed (overrides the config)")->each([&](const std::string&) { c.seed_given = true; });
}

ide::RunConfig resolve(const Common& c) {
  ide::RunConfig cfg = c.config.empty() ? ide::RunConfig{} : ide::load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ide::ConfigError("--set expects key=value, got '" + kv + "'");
    ide::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_given) cfg.seed = c.seed;
  return cfg;
}

void split_list(const std::vector<std::string>& in, std::vector<std::string>* out) {
  for (const auto& item : in) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out->push_back(part);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Exocentric video generation from egocentric input (desk-scale)"};
  app.require_subcommand(1);

  Common gen_common, train_common, generate_common;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic ego/exo dataset");
  add_common(gen, gen_common);
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset directory (overrides data_dir)");

  auto* train = app.add_subcommand("train", "train Stage 1 (latent flow autoencoder) or Stage 2 (diffusion)");
  add_common(train, train_common);
  int stage = 0;
  std::string stage1_ckpt, fuse_mode, train_out;
  std::vector<std::string> disable;
  train->add_option("--stage", stage, "1 or 2 (overrides the config)")->check(CLI::IsMember({1, 2}));
  train->add_option("--stage1-ckpt", stage1_ckpt, "Stage-1 checkpoint (stage 2 only)");
  train->add_option("--disable", disable, "conditioning modules to drop: cfpm, adu, ttm");
  train->add_option("--fuse-mode", fuse_mode, "ide | traj_condition | traj_concat | ego_video_feats");
  train->add_option("--out", train_out, "run directory (overrides out_dir)");

  auto* generate = app.add_subcommand("generate", "sample exocentric videos");
  add_common(generate, generate_common);
  ide::GenerateOptions gopts;
  bool untrained = false;
  generate->add_option("--ckpt", gopts.checkpoint, "Stage-2 checkpoint");
  generate->add_flag("--untrained", untrained, "sample from a freshly initialized model instead");
  generate->add_option("--clip", gopts.clip_ids, "clip id, repeatable (default: every test clip)");
  generate->add_option("--out", gopts.out_dir, "output directory")->required();
  generate->add_flag("--dump-steps", gopts.dump_steps, "store every reverse-step state in <clip>/steps.ckpt");

  auto* evaluate = app.add_subcommand("evaluate", "score generated videos against references");
  std::string gen_dir, ref_dir, csv_out;
  std::uint64_t extractor_seed = 0;
  evaluate->add_option("--gen", gen_dir, "generated videos")->required();
  evaluate->add_option("--ref", ref_dir, "reference videos or dataset root")->required();
  evaluate->add_option("--out", csv_out, "CSV path (default: stdout)");
  evaluate->add_option("--seed", extractor_seed, "feature extractor seed");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  bool corrupt = false;
  gradcheck->add_flag("--corrupt-matmul-grad", corrupt, "test hook: perturb the matmul backward pass")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*gen) {
    ide::RunConfig cfg = resolve(gen_common);
    if (!gen_out.empty()) cfg.data_dir = gen_out;
    cfg.validate();
    ide::Dataset ds = ide::run_gen_data(cfg);
    std::cout << "wrote " << ds.entries.size() << " clips to " << cfg.data_dir << "\n";
    return kOk;
  }

  if (*train) {
    ide::RunConfig cfg = resolve(train_common);
    if (stage) cfg.stage = stage;
    if (!fuse_mode.empty()) cfg.fuse_mode = fuse_mode;
    split_list(disable, &cfg.disable);
    if (!train_out.empty()) cfg.out_dir = train_out;
    cfg.validate();
    ide::TrainReport r = cfg.stage == 1 ? ide::train_stage1(cfg, &std::cout)
                                        : ide::train_stage2(cfg, stage1_ckpt, &std::cout);
    std::printf("held-out loss %.6f -> %.6f; first-100 mean %.6f; %.1fs; checkpoint %s\n", r.heldout_init,
                r.heldout_final, r.first100_avg, r.seconds, r.checkpoint.c_str());
    return kOk;
  }

  if (*generate) {
    ide::RunConfig cfg = resolve(generate_common);
    cfg.validate();
    if (gopts.checkpoint.empty() && !untrained)
      throw ide::PrerequisiteError("generate needs --ckpt (or --untrained)");
    if (!gopts.checkpoint.empty() && untrained) throw ide::ConfigError("--ckpt and --untrained are exclusive");
    gopts.seed = cfg.seed;
    std::vector<std::string> ids = ide::generate(cfg, gopts);
    std::cout << "wrote " << ids.size() << " clips to " << gopts.out_dir << "\n";
    return kOk;
  }

  if (*evaluate) {
    ide::EvalReport r = ide::evaluate(gen_dir, ref_dir, extractor_seed);
    if (csv_out.empty()) {
      std::printf("lpips_surr,fvd,kvd\n%.6f,%.6f,%.6f\n", r.lpips_surr, r.fvd, r.kvd);
    } else {
      ide::write_report_csv(csv_out, r);
      std::cout << "wrote " << csv_out << "\n";
    }
    std::cout << "# " << r.clip_ids.size()
              << " clips; features come from a fixed random network, so scores only rank runs against each other "
                 "and are not comparable to published numbers\n";
    return kOk;
  }

  if (*gradcheck) {
    ide::set_matmul_grad_corruption(corrupt);
    std::vector<ide::GradcheckResult> results = ide::run_gradcheck_suite(std::cout);
    int failed = 0;
    for (const auto& r : results) failed += r.passed ? 0 : 1;
    std::cout << results.size() << " entries, " << failed << " failed\n";
    return failed == 0 ? kOk : kNumeric;
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ide::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ide::PrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return kPrerequisite;
  } catch (const ide::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ide::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kData;
  } catch (const ide::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
