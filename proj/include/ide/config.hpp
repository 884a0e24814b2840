// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ide/conditioning.hpp"
#include "ide/diffusion.hpp"
#include "ide/lfae.hpp"
#include "ide/worldsim.hpp"

namespace ide {

/// Flat key=value run configuration. '#' starts a comment; blank lines are
/// ignored; unknown keys are rejected.
struct RunConfig {
  std::string data_dir = "data";
  std::string out_dir = "runs";
  std::uint64_t seed = 0;
  int stage = 1;
  int iterations = 500;
  int batch = 8;
  double lr = 1e-3;
  int frames = 8;
  int size = 64;
  // dataset generation
  int clips = 256;
  int clips_per_layout = 4;
  int min_objects = 2;
  int max_objects = 4;
  double v_max = 3.0;
  std::string split_rule = "seen";
  double train_fraction = 0.8;
  // Stage 1
  int c_lat = 16;
  int lfae_width = 16;
  double flow_scale = 1.0;
  double lambda = 0.1;
  // Stage 2
  int steps = 100;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  std::string dm_loss = "l2sq";
  std::string fuse_mode = "ide";
  std::vector<std::string> disable;  // subset of {cfpm, adu, ttm}
  int cond_width = 64;
  int heads = 4;
  int patch = 8;
  int text_dim = 32;
  int unet_base = 24;
  bool stop_ego_grad = false;
  // bookkeeping
  int log_every = 10;
  int ckpt_every = 0;   // 0: final checkpoint only
  int eval_clips = 16;  // held-out clips used for held-out losses

  bool disabled(const std::string& module) const;
  void validate() const;

  WorldConfig world() const;
  LfaeConfig lfae() const;
  ConditionConfig condition(int vocab) const;
  DenoiserConfig denoiser() const;
  NoiseSchedule schedule() const;
};

// Throws ConfigError naming the key for unknown keys or malformed values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Every key with its current value, one "key=value" per line, in a fixed order.
std::string format_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace ide
