// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ide/lfae.hpp"

namespace ide {

/// Fixed random 3D-convolution stack (3 -> 16 -> 32 -> 64, kernel 3x3x3,
/// stride (1,2,2), ReLU) with global average pooling. Stands in for a
/// pretrained video network; only orderings of its scores are meaningful.
class VideoFeatureNet {
 public:
  static constexpr int kDim = 64;

  explicit VideoFeatureNet(std::uint64_t seed = 0);
  std::uint64_t seed() const { return seed_; }

  // clip [T x 3 x S x S] -> D-vector
  Eigen::VectorXd extract(const Tensorf& clip) const;
  // Same stack with only the centre temporal tap: [T x D], one row per frame.
  Eigen::MatrixXd frame_features(const Tensorf& clip) const;

 private:
  Tensorf run(const Tensorf& clip, bool temporal) const;

  std::uint64_t seed_;
  // w[layer][tap] is [out x in x 3 x 3]
  std::vector<std::vector<Tensorf>> w_;
  std::vector<Tensorf> b_;
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean, unbiased covariance plus regularization * I. Needs M >= 2 rows.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features, double regularization = 1e-6);

// Symmetric square root of a symmetric PSD matrix; negative eigenvalues clip to 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Unbiased MMD^2 with k(x, y) = (x.y / D + 1)^3.
double kernel_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Perceptual distance on the fixed random feature net shared with Stage 1.
class PerceptualMetric {
 public:
  PerceptualMetric();
  // frames [3 x S x S] or [N x 3 x S x S]
  double operator()(const Tensorf& a, const Tensorf& b) const;

 private:
  ParamStore<float> store_;
  PerceptualNet<float> net_;
};

struct EvalReport {
  double lpips_surr = 0.0;
  double fvd = 0.0;
  double kvd = 0.0;
  std::vector<std::string> clip_ids;
};

// Clip ids under `dir` (subdirectories holding an exo/ frame folder), sorted.
std::vector<std::string> list_video_dirs(const std::string& dir);
// exo frames of <dir>/<id>/exo as [T x 3 x S x S]
Tensorf load_exo_video(const std::string& dir, const std::string& id);

// Feature rows for the given clips, one per clip.
Eigen::MatrixXd video_features(const std::string& dir, const std::vector<std::string>& ids,
                               const VideoFeatureNet& net);

/// Pairs generated and reference clips by id. When the reference directory is
/// a dataset root (has manifest.tsv) only the generated ids are compared;
/// otherwise the id sets must agree. Mismatches throw DataError listing ids.
EvalReport evaluate(const std::string& generated_dir, const std::string& reference_dir, std::uint64_t extractor_seed = 0);
void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace ide
