// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ide/checkpoint.hpp"
#include "ide/config.hpp"
#include "ide/diffusion.hpp"
#include "ide/metrics.hpp"

namespace ide {

// A required input (checkpoint, dataset) is absent.
class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainReport {
  int stage = 0;
  int iterations = 0;
  double heldout_init = 0.0;   // held-out loss before the first update
  double heldout_final = 0.0;  // held-out loss after the last update
  double first100_avg = 0.0;   // mean training loss over the first min(100, iterations) updates
  double seconds = 0.0;
  std::string checkpoint;
};

Dataset run_gen_data(const RunConfig& cfg);

// Writes <out_dir>/stage1.ckpt, train_log.csv, run.cfg and summary.tsv.
TrainReport train_stage1(const RunConfig& cfg, std::ostream* progress = nullptr);
// Needs a Stage-1 checkpoint; writes <out_dir>/stage2.ckpt and the same logs.
TrainReport train_stage2(const RunConfig& cfg, const std::string& stage1_ckpt, std::ostream* progress = nullptr);

/// Everything generation needs: frozen Stage-1 model, conditioning modules and
/// the denoiser. Built either from a Stage-2 checkpoint or freshly initialized.
struct Stage2Model {
  RunConfig cfg;
  int vocab = 0;
  std::unique_ptr<Lfae<float>> lfae;
  ParamStore<float> store;
  Conditioner<float> cond;
  Denoiser<float> dm;
  NoiseSchedule sched;
  VideoFeatureNet video{0};

  Stage2Model(const RunConfig& cfg, int vocab);
  Stage2Model(const Stage2Model&) = delete;
  Stage2Model& operator=(const Stage2Model&) = delete;

  static std::unique_ptr<Stage2Model> from_checkpoint(const std::string& path);
  std::vector<NamedTensor> checkpoint_tensors() const;
};

// Model-size keys recorded in checkpoints.
std::vector<NamedTensor> stage2_meta(const RunConfig& cfg, int vocab);

struct GenerateOptions {
  std::string checkpoint;              // empty: freshly initialized model
  std::vector<std::string> clip_ids;   // empty: every test-split clip
  std::string out_dir;
  std::uint64_t seed = 0;
  bool dump_steps = false;
};

// Writes <out>/<clip>/exo/%04d.ppm plus flow/ and occ/ visualizations;
// returns the clip ids written.
std::vector<std::string> generate(const RunConfig& cfg, const GenerateOptions& opts);

// Hue encodes direction, saturation the magnitude relative to `scale`.
Image flow_to_image(const Tensorf& flow, double scale = 0.25, int upscale = 1);

}  // namespace ide
