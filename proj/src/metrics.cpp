// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "ide/image_io.hpp"
#include "ide/parallel.hpp"
#include "ide/worldsim.hpp"

namespace fs = std::filesystem;

namespace ide {

VideoFeatureNet::VideoFeatureNet(std::uint64_t seed) : seed_(seed) {
  Rng rng(Rng::derive(seed, 0xF1D));
  const int widths[] = {3, 16, 32, kDim};
  for (int l = 0; l < 3; ++l) {
    const Index in = widths[l], out = widths[l + 1];
    const float std = static_cast<float>(std::sqrt(2.0 / (in * 27.0)));
    std::vector<Tensorf> taps;
    for (int k = 0; k < 3; ++k) taps.push_back(randn<float>({out, in, 3, 3}, rng, std));
    w_.push_back(std::move(taps));
    b_.push_back(rand_uniform<float>({out}, rng, -0.1f, 0.1f));
  }
}

namespace {

// Frames shifted by `offset` along time with zero fill: out[t] = x[t + offset].
Tensorf shift_time(const Tensorf& x, int offset) {
  const Index t = x.dim(0), per = x.size() / t;
  Tensorf::Array out = Tensorf::Array::Zero(x.size());
  for (Index i = 0; i < t; ++i) {
    const Index src = i + offset;
    if (src < 0 || src >= t) continue;
    out.segment(i * per, per) = x.value().segment(src * per, per);
  }
  return Tensorf::from_array(x.shape(), std::move(out));
}

}  // namespace

Tensorf VideoFeatureNet::run(const Tensorf& clip, bool temporal) const {
  if (clip.rank() != 4 || clip.dim(1) != 3 || clip.dim(0) < 1)
    throw DimensionError("video features: expected [T x 3 x S x S], got " + to_string(clip.shape()));
  NoGradGuard guard;
  Tensorf x = clip;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Tensorf y = conv2d(x, w_[l][1], b_[l], 2, 1);
    if (temporal) {
      y = add(y, conv2d(shift_time(x, -1), w_[l][0], Tensorf(), 2, 1));
      y = add(y, conv2d(shift_time(x, 1), w_[l][2], Tensorf(), 2, 1));
    }
    x = relu(y);
  }
  return x;
}

Eigen::VectorXd VideoFeatureNet::extract(const Tensorf& clip) const {
  Tensorf f = run(clip, true);
  const Index t = f.dim(0), c = f.dim(1), hw = f.dim(2) * f.dim(3);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(c);
  for (Index i = 0; i < t; ++i)
    for (Index k = 0; k < c; ++k) out[k] += f.value().segment((i * c + k) * hw, hw).cast<double>().sum();
  return out / static_cast<double>(t * hw);
}

Eigen::MatrixXd VideoFeatureNet::frame_features(const Tensorf& clip) const {
  Tensorf f = run(clip, false);
  const Index t = f.dim(0), c = f.dim(1), hw = f.dim(2) * f.dim(3);
  Eigen::MatrixXd out(t, c);
  for (Index i = 0; i < t; ++i)
    for (Index k = 0; k < c; ++k) out(i, k) = f.value().segment((i * c + k) * hw, hw).cast<double>().mean();
  return out;
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features, double regularization) {
  if (features.rows() < 2) throw DimensionError("gaussian_stats: need at least 2 feature rows");
  if (!features.allFinite()) throw NumericError("gaussian_stats: non-finite features");
  GaussianStats s;
  s.mean = features.colwise().mean().transpose();
  Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  s.cov.diagonal().array() += regularization;
  return s;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows())
    throw DimensionError("frechet_distance: feature dimensions differ");
  if (!a.mean.allFinite() || !b.mean.allFinite() || !a.cov.allFinite() || !b.cov.allFinite())
    throw NumericError("frechet_distance: non-finite statistics");
  Eigen::MatrixXd ra = psd_sqrt(a.cov);
  Eigen::MatrixXd inner = ra * b.cov * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  const double tr_sqrt = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

namespace {

double kernel_sum(std::vector<double> terms) {
  // Sorted summation keeps the estimator exactly symmetric in its arguments.
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += v;
  return s;
}

}  // namespace

double kernel_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() < 2 || b.rows() < 2) throw DimensionError("kernel_distance: need at least 2 rows per set");
  if (a.cols() != b.cols()) throw DimensionError("kernel_distance: feature dimensions differ");
  const double d = static_cast<double>(a.cols());
  auto k = [d](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return std::pow(x.dot(y) / d + 1.0, 3); };
  const Index m = a.rows(), n = b.rows();
  std::vector<double> xx, yy, xy;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      if (i != j) xx.push_back(k(a.row(i), a.row(j)));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) yy.push_back(k(b.row(i), b.row(j)));
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) xy.push_back(k(a.row(i), b.row(j)));
  const double sxx = kernel_sum(std::move(xx)) / static_cast<double>(m * (m - 1));
  const double syy = kernel_sum(std::move(yy)) / static_cast<double>(n * (n - 1));
  const double sxy = kernel_sum(std::move(xy)) / static_cast<double>(m * n);
  return std::min(sxx, syy) + std::max(sxx, syy) - 2.0 * sxy;
}

PerceptualMetric::PerceptualMetric() : net_(store_, "metric.per") {}

double PerceptualMetric::operator()(const Tensorf& a, const Tensorf& b) const {
  NoGradGuard guard;
  Tensorf x = a.rank() == 3 ? reshape(a, {1, a.dim(0), a.dim(1), a.dim(2)}) : a;
  Tensorf y = b.rank() == 3 ? reshape(b, {1, b.dim(0), b.dim(1), b.dim(2)}) : b;
  if (x.shape() != y.shape())
    throw DimensionError("perceptual_distance: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  auto fa = net_.features(x);
  auto fb = net_.features(y);
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l)
    total += (fa[l].value() - fb[l].value()).cast<double>().square().mean();
  return total / static_cast<double>(fa.size());
}

std::vector<std::string> list_video_dirs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::is_directory(e.path() / "exo")) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

Tensorf load_exo_video(const std::string& dir, const std::string& id) {
  const fs::path folder = fs::path(dir) / id / "exo";
  std::vector<Tensorf> frames;
  for (int t = 0;; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04d.ppm", t);
    const fs::path p = folder / name;
    if (!fs::exists(p)) break;
    frames.push_back(image_to_tensor(read_ppm(p.string())));
  }
  if (frames.empty()) throw DataError("no exo frames in " + folder.string());
  const Index c = frames[0].dim(0), h = frames[0].dim(1), w = frames[0].dim(2);
  Tensorf::Array all(static_cast<Index>(frames.size()) * c * h * w);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].shape() != frames[0].shape()) throw DataError("frame size changes within " + folder.string());
    all.segment(static_cast<Index>(t) * c * h * w, c * h * w) = frames[t].value();
  }
  return Tensorf::from_array({static_cast<Index>(frames.size()), c, h, w}, std::move(all));
}

Eigen::MatrixXd video_features(const std::string& dir, const std::vector<std::string>& ids,
                               const VideoFeatureNet& net) {
  Eigen::MatrixXd out(static_cast<Index>(ids.size()), VideoFeatureNet::kDim);
  parallel_for(static_cast<Index>(ids.size()), [&](Index i) { out.row(i) = net.extract(load_exo_video(dir, ids[i])); });
  return out;
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + ids[i];
  return s;
}

}  // namespace

EvalReport evaluate(const std::string& generated_dir, const std::string& reference_dir, std::uint64_t extractor_seed) {
  std::vector<std::string> gen = list_video_dirs(generated_dir);
  std::vector<std::string> ref = list_video_dirs(reference_dir);
  const std::set<std::string> gs(gen.begin(), gen.end()), rs(ref.begin(), ref.end());
  std::vector<std::string> missing_ref, missing_gen;
  for (const auto& id : gen)
    if (!rs.count(id)) missing_ref.push_back(id);
  const bool dataset_root = fs::exists(fs::path(reference_dir) / "manifest.tsv");
  if (!dataset_root)
    for (const auto& id : ref)
      if (!gs.count(id)) missing_gen.push_back(id);
  if (!missing_ref.empty() || !missing_gen.empty()) {
    std::string msg = "clip id mismatch;";
    if (!missing_ref.empty()) msg += " missing from reference: " + join_ids(missing_ref) + ";";
    if (!missing_gen.empty()) msg += " missing from generated: " + join_ids(missing_gen) + ";";
    throw DataError(msg);
  }
  if (gen.size() < 2) throw DataError("evaluate needs at least 2 clips, found " + std::to_string(gen.size()));

  EvalReport report;
  report.clip_ids = gen;
  PerceptualMetric lpips;
  std::vector<double> per_clip(gen.size());
  parallel_for(static_cast<Index>(gen.size()), [&](Index i) {
    Tensorf a = load_exo_video(generated_dir, gen[i]);
    Tensorf b = load_exo_video(reference_dir, gen[i]);
    if (a.shape() != b.shape())
      throw DataError("clip " + gen[i] + ": generated " + to_string(a.shape()) + " vs reference " + to_string(b.shape()));
    double sum = 0.0;
    for (Index t = 0; t < a.dim(0); ++t) sum += lpips(slice(a, 0, t, 1), slice(b, 0, t, 1));
    per_clip[i] = sum / static_cast<double>(a.dim(0));
  });
  for (double v : per_clip) report.lpips_surr += v;
  report.lpips_surr /= static_cast<double>(gen.size());

  VideoFeatureNet net(extractor_seed);
  Eigen::MatrixXd fa = video_features(generated_dir, gen, net);
  Eigen::MatrixXd fb = video_features(reference_dir, gen, net);
  report.fvd = frechet_distance(gaussian_stats(fa), gaussian_stats(fb));
  report.kvd = kernel_distance(fa, fb);
  return report;
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  char line[128];
  std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f\n", report.lpips_surr, report.fvd, report.kvd);
  out << "lpips_surr,fvd,kvd\n" << line;
}

}  // namespace ide
