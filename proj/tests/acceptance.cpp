// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion plus INFO
// lines for diagnostics that are not pass/fail gates. Exit status is non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ide/cfpm.hpp"
#include "ide/checkpoint.hpp"
#include "ide/diffusion.hpp"
#include "ide/gradcheck.hpp"
#include "ide/lfae.hpp"
#include "ide/metrics.hpp"
#include "ide/ops.hpp"
#include "ide/parallel.hpp"
#include "ide/pipeline.hpp"
#include "ide/worldsim.hpp"

using namespace ide;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

int failures = 0;

void verdict(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& line) {
  std::printf("INFO    %s\n", line.c_str());
  std::fflush(stdout);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Sorted relative paths with contents, skipping wall-clock summaries.
std::string tree_bytes(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "summary.tsv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string out;
  for (const auto& f : files) out += fs::relative(f, dir).string() + '\0' + read_bytes(f) + '\0';
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Tensorf frame_of(const Tensorf& video, Index t) {
  return reshape(slice(video, 0, t, 1), {video.dim(1), video.dim(2), video.dim(3)});
}

// ---------------------------------------------------------------- 1
void criterion_gradients() {
  const auto t0 = Clock::now();
  std::ostringstream sink;
  std::vector<GradcheckResult> results = run_gradcheck_suite(sink);
  const double secs = seconds_since(t0);
  int failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    if (r.max_error / r.tolerance > worst) {
      worst = r.max_error / r.tolerance;
      worst_name = r.name;
    }
  }
  verdict(1, "gradient suite", failed == 0 && secs < 120.0,
          std::to_string(results.size()) + " entries, " + std::to_string(failed) + " failed, tightest " + worst_name +
              fmt(" at %.2f of its tolerance, %.1fs", worst, secs));
}

// ---------------------------------------------------------------- 2
void criterion_warp() {
  Rng rng(11);
  bool ok = true;
  Tensorf z = randn<float>({2, 6, 16, 16}, rng);
  FlowField<float> id{Tensorf::zeros({2, 2, 16, 16}), Tensorf::constant({2, 1, 16, 16}, 1.0f)};
  ok = ok && (warp(z, id).value() == z.value()).all();
  FlowField<float> dead{randn<float>({2, 2, 16, 16}, rng, 0.3f), Tensorf::zeros({2, 1, 16, 16})};
  ok = ok && warp(z, dead).value().abs().maxCoeff() == 0.0f;

  double worst = 0.0;
  const Index h = 16, w = 16;
  for (int sx = -2; sx <= 2; ++sx)
    for (int sy = -2; sy <= 2; ++sy) {
      Tensorf flow = Tensorf::zeros({1, 2, h, w});
      for (Index p = 0; p < h * w; ++p) {
        flow.value_mut()[p] = 2.0f * sx / w;
        flow.value_mut()[h * w + p] = 2.0f * sy / h;
      }
      Tensorf out = warp(slice(z, 0, 0, 1), FlowField<float>{flow, Tensorf::constant({1, 1, h, w}, 1.0f)});
      for (Index c = 0; c < 6; ++c)
        for (Index y = 2; y < h - 2; ++y)
          for (Index x = 2; x < w - 2; ++x)
            worst = std::max(worst, static_cast<double>(std::abs(out.at({0, c, y, x}) - z.at({0, c, y + sy, x + sx}))));
    }
  verdict(2, "warp identities", ok && worst <= 1e-6,
          std::string(ok ? "identity exact, zero mask annihilates" : "identity or annihilation broken") +
              fmt(", integer shifts max error %.2e", worst));
}

// ---------------------------------------------------------------- 3
void criterion_ddpm() {
  const auto t0 = Clock::now();
  NoiseSchedule s = make_schedule(100);
  const int n = 50, draws = 100000;
  Rng rng(12);
  Tensord xn = q_sample(Tensord::constant({draws}, 1.0), n, randn<double>({draws}, rng), s);
  double m = xn.value().mean(), v = (xn.value() - m).square().sum() / (draws - 1);
  const double em = std::sqrt(s.alpha_bar[n]), ev = 1.0 - s.alpha_bar[n];
  const double mc = std::max(std::abs(m - em) / em, std::abs(v - ev) / ev);

  double bayes_err = 0.0;
  for (int k = 2; k <= 100; ++k) {
    const double x0 = rng.normal(), x = rng.normal();
    const double pm = std::sqrt(s.alpha_bar[k - 1]) * x0, pv = 1.0 - s.alpha_bar[k - 1];
    const double prec = 1.0 / pv + s.alpha[k] / s.beta[k];
    const double ref = (pm / pv + std::sqrt(s.alpha[k]) * x / s.beta[k]) / prec;
    bayes_err = std::max(bayes_err, std::abs(posterior_mean(Tensord::scalar(x), Tensord::scalar(x0), k, s).item() - ref));
  }

  Tensorf target = rand_uniform<float>({2, 8, 3, 8, 8}, rng, -0.9f, 0.9f);
  DenoiseFn<float> oracle = [&](const Tensorf&, const std::vector<int>&, const ConditionBundle<float>&) { return target; };
  Tensorf sampled = make_state(sample_sequence(oracle, ConditionBundle<float>{}, s, 7, target.shape()));
  const double fixed = (sampled.value() - target.value()).abs().mean();
  const double secs = seconds_since(t0);
  verdict(3, "DDPM oracles", mc <= 0.01 && bayes_err <= 1e-10 && fixed <= 1e-2 && secs < 60.0,
          fmt("Monte Carlo rel. error %.2e, posterior error %.1e, oracle sampling %.2e, %.1fs", mc, bayes_err, fixed, secs));
}

// ---------------------------------------------------------------- 4
void criterion_metrics() {
  auto analytic = [](double mean, double var) {
    GaussianStats g;
    g.mean = Eigen::VectorXd::Constant(1, mean);
    g.cov = Eigen::MatrixXd::Constant(1, 1, var);
    return g;
  };
  const double exact9 = frechet_distance(analytic(0, 1), analytic(3, 1));
  const double exact1 = frechet_distance(analytic(0, 1), analytic(0, 4));
  Rng rng(13);
  auto sample = [&](Index rows, Index cols, double mean, double sd) {
    Eigen::MatrixXd x(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) x(i, j) = mean + sd * rng.normal();
    return x;
  };
  GaussianStats a = gaussian_stats(sample(100000, 1, 0, 1)), b = gaussian_stats(sample(100000, 1, 3, 1)),
                c = gaussian_stats(sample(100000, 1, 0, 2));
  const double rel = std::max(std::abs(frechet_distance(a, b) - 9.0) / 9.0, std::abs(frechet_distance(a, c) - 1.0));

  std::vector<double> mmd;
  for (int r = 0; r < 200; ++r) mmd.push_back(kernel_distance(sample(40, 4, 0, 1), sample(40, 4, 0, 1)));
  const double mu = mean_of(mmd);
  double var = 0.0;
  for (double x : mmd) var += (x - mu) * (x - mu);
  const double se = std::sqrt(var / 199.0 / 200.0);
  const bool exact = std::abs(exact9 - 9.0) < 1e-12 && std::abs(exact1 - 1.0) < 1e-12;
  verdict(4, "metric closed forms", exact && rel <= 0.02 && std::abs(mu) < 3 * se,
          fmt("analytic %.12g and %.12g, sampled rel. error %.2e", exact9, exact1, rel) +
              fmt(", MMD mean %.2e at %.2f SE", mu, std::abs(mu) / se));
}

// ---------------------------------------------------------------- 5
void criterion_alignment() {
  Rng rng(14);
  double lowest = 1e300;
  for (int i = 0; i < 1000; ++i)
    lowest = std::min(lowest, align_loss(randn<double>({2, 1, 16}, rng, 3.0), randn<double>({2, 1, 16}, rng, 3.0)).item());
  Tensord y = randn<double>({4, 1, 16}, rng);
  const double same = align_loss(y, y).item();
  auto two_bin = [](double p) { return Tensord::from_vector({2}, {std::log(p), std::log(1.0 - p)}); };
  const double hand = 0.7 * std::log(0.7 / 0.5) + 0.3 * std::log(0.3 / 0.5);
  const double got = align_loss(two_bin(0.7), two_bin(0.5)).item();
  verdict(5, "KL alignment", lowest >= 0.0 && same == 0.0 && std::abs(got - hand) <= 1e-6,
          fmt("min over 1000 random pairs %.3e, identical tokens %.1f, two-bin %.8f vs %.8f", lowest, same, got, hand));
}

// ---------------------------------------------------------------- 6
void criterion_worldsim(const std::string& data) {
  Dataset ds = load_dataset(data);
  double worst = 0.0;
  long pairs = 0;
  for (const auto& e : ds.entries) {
    Clip clip = load_clip(ds, e);
    SceneState scene = load_scene(ds, e);
    const Index t = clip.exo.dim(0);
    for (Index i = 0; i < t; ++i)
      for (Index j = 0; j < t; ++j) {
        if (i == j) continue;
        FlowGroundTruth gt = gt_backward_flow(scene, clip.trajectory[i], clip.trajectory[j]);
        worst = std::max(worst, masked_warp_error(frame_of(clip.exo, i), frame_of(clip.exo, j), gt));
        ++pairs;
      }
  }
  verdict(6, "worldsim flow consistency", worst <= 1e-3,
          std::to_string(pairs) + " ordered frame pairs over " + std::to_string(ds.entries.size()) +
              fmt(" clips, worst masked warp error %.2e", worst));
}


// ---------------------------------------------------------------- 7
struct DeskRun {
  RunConfig cfg;
  std::string stage1_ckpt, stage2_ckpt;
};

DeskRun criterion_desk(const RunConfig& desk, const fs::path& work, double gen_seconds, std::ostream& log) {
  const auto t0 = Clock::now();
  DeskRun run;
  RunConfig c1 = desk;
  c1.stage = 1;
  c1.iterations = 400;
  c1.out_dir = (work / "stage1").string();
  TrainReport r1 = train_stage1(c1, &log);
  RunConfig c2 = desk;
  c2.stage = 2;
  c2.iterations = 600;
  c2.out_dir = (work / "stage2").string();
  TrainReport r2 = train_stage2(c2, r1.checkpoint, &log);
  const double secs = gen_seconds + seconds_since(t0);
  const bool s1 = r1.heldout_final <= 0.5 * r1.heldout_init;
  const bool s2 = r2.heldout_final <= 0.7 * r2.first100_avg;
  verdict(7, "desk end-to-end", s1 && s2 && secs <= 1800.0,
          fmt("stage 1 held-out %.5f -> %.5f (%.2fx); ", r1.heldout_init, r1.heldout_final,
              r1.heldout_final / r1.heldout_init) +
              fmt("stage 2 held-out %.6f vs first-100 mean %.6f (%.2fx); %.0fs", r2.heldout_final, r2.first100_avg,
                  r2.heldout_final / r2.first100_avg, secs));
  run.cfg = c2;
  run.stage1_ckpt = r1.checkpoint;
  run.stage2_ckpt = r2.checkpoint;
  return run;
}

// ---------------------------------------------------------------- 8
void criterion_ablation(const DeskRun& desk, const fs::path& work, std::ostream& log) {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    double loss[2];
    for (int variant = 0; variant < 2; ++variant) {
      RunConfig c = desk.cfg;
      c.seed = seed;
      c.iterations = 300;
      if (variant == 1) c.disable = {"ttm"};
      c.out_dir = (work / ("ablation_s" + std::to_string(seed) + (variant ? "_nottm" : "_full"))).string();
      loss[variant] = train_stage2(c, desk.stage1_ckpt, &log).heldout_final;
    }
    wins += loss[0] <= loss[1] ? 1 : 0;
    detail += fmt("seed %.0f full %.6f / no-ttm %.6f; ", static_cast<double>(seed), loss[0], loss[1]);
  }
  int completed = 0;
  for (const char* mode : {"ide", "traj_condition", "traj_concat", "ego_video_feats"}) {
    RunConfig c = desk.cfg;
    c.fuse_mode = mode;
    c.iterations = 20;
    c.out_dir = (work / (std::string("fuse_") + mode)).string();
    try {
      TrainReport r = train_stage2(c, desk.stage1_ckpt, &log);
      completed += std::isfinite(r.heldout_final) && fs::exists(r.checkpoint) ? 1 : 0;
    } catch (const std::exception& e) {
      log << "fuse mode " << mode << " failed: " << e.what() << "\n";
    }
  }
  verdict(8, "ablation directionality", wins >= 2 && completed == 4,
          detail + "full wins " + std::to_string(wins) + "/3; fuse modes completed " + std::to_string(completed) + "/4");
}

// ---------------------------------------------------------------- 9
// Small pipeline from dataset to CSV report, always under the same path.
std::string small_pipeline(const fs::path& dir, int threads, std::ostream& log) {
  set_worker_count(threads);
  fs::remove_all(dir);
  RunConfig c;
  c.data_dir = (dir / "data").string();
  c.clips = 10;
  c.batch = 2;
  c.eval_clips = 2;
  c.c_lat = 4;
  c.lfae_width = 8;
  c.cond_width = 16;
  c.heads = 2;
  c.text_dim = 8;
  c.unet_base = 8;
  c.steps = 10;
  c.iterations = 3;
  c.log_every = 1;
  c.seed = 5;
  run_gen_data(c);
  c.out_dir = (dir / "s1").string();
  TrainReport r1 = train_stage1(c, &log);
  c.stage = 2;
  c.out_dir = (dir / "s2").string();
  TrainReport r2 = train_stage2(c, r1.checkpoint, &log);
  GenerateOptions g;
  g.checkpoint = r2.checkpoint;
  g.out_dir = (dir / "gen").string();
  g.seed = 5;
  generate(c, g);
  write_report_csv((dir / "report.csv").string(), evaluate(g.out_dir, c.data_dir));
  std::string bytes = tree_bytes(dir);
  set_worker_count(1);
  return bytes;
}

void criterion_determinism(const fs::path& work, std::ostream& log) {
  const fs::path dir = work / "determinism";
  const std::string a = small_pipeline(dir, 1, log);
  const std::string b = small_pipeline(dir, 1, log);
  const std::string c = small_pipeline(dir, 3, log);
  verdict(9, "determinism", a == b && a == c,
          std::string("single-threaded reruns ") + (a == b ? "bitwise identical" : "differ") + ", 3 workers " +
              (a == c ? "bitwise identical" : "differ") + fmt(" (%.0f bytes of checkpoints, frames, logs and CSV)",
                                                             static_cast<double>(a.size())));
}

// ---------------------------------------------------------------- 10
std::vector<std::string> split_ids(const Dataset& ds, bool train) {
  std::vector<std::string> ids;
  for (const auto& e : ds.entries)
    if (is_train_split(e.split) == train) ids.push_back(e.clip_id);
  return ids;
}

double first_frame_distance(const std::string& gen, const std::string& ref, const std::vector<std::string>& ids) {
  PerceptualMetric d;
  std::vector<double> v;
  for (const auto& id : ids) v.push_back(d(frame_of(load_exo_video(gen, id), 0), frame_of(load_exo_video(ref, id), 0)));
  return mean_of(v);
}

void criterion_fvd(const DeskRun& desk, const fs::path& work) {
  Dataset ds = load_dataset(desk.cfg.data_dir);
  const std::vector<std::string> train = split_ids(ds, true), test = split_ids(ds, false);
  VideoFeatureNet net(0);
  const double real = frechet_distance(gaussian_stats(video_features(desk.cfg.data_dir, train, net)),
                                       gaussian_stats(video_features(desk.cfg.data_dir, test, net)));
  GenerateOptions g;
  g.out_dir = (work / "gen_untrained").string();
  generate(desk.cfg, g);
  EvalReport untrained = evaluate(g.out_dir, desk.cfg.data_dir);
  verdict(10, "FVD sanity ordering", real < untrained.fvd,
          fmt("train vs test %.4f < untrained generations vs test %.4f", real, untrained.fvd) + " over " +
              std::to_string(test.size()) + " test clips");

  g.checkpoint = desk.stage2_ckpt;
  g.out_dir = (work / "gen_trained").string();
  generate(desk.cfg, g);
  EvalReport trained = evaluate(g.out_dir, desk.cfg.data_dir);
  info(fmt("trained generations: lpips_surr %.5f fvd %.4f kvd %.4f", trained.lpips_surr, trained.fvd, trained.kvd));
  info(fmt("untrained generations: lpips_surr %.5f fvd %.4f kvd %.4f", untrained.lpips_surr, untrained.fvd,
           untrained.kvd));
  info(fmt("first generated frame vs real first frame, perceptual distance: trained %.5f, untrained %.5f",
           first_frame_distance(g.out_dir, desk.cfg.data_dir, test),
           first_frame_distance((work / "gen_untrained").string(), desk.cfg.data_dir, test)));
}

// End-point error of Stage-1 flow (frame 0 -> frame t) against the simulator,
// in pixels, over latent cells whose ground-truth motion is non-zero.
double moving_epe(const Lfae<float>& model, const Dataset& ds, int clips) {
  NoGradGuard guard;
  double err = 0.0;
  long cells = 0;
  int seen = 0;
  for (const auto& e : ds.entries) {
    if (is_train_split(e.split)) continue;
    if (++seen > clips) break;
    Clip clip = load_clip(ds, e);
    SceneState scene = load_scene(ds, e);
    const Index t = clip.exo.dim(0), s = clip.exo.dim(3);
    for (Index k = 1; k < t; ++k) {
      FlowField<float> f = model.estimate_flow(slice(clip.exo, 0, 0, 1), slice(clip.exo, 0, k, 1));
      FlowGroundTruth gt = gt_backward_flow(scene, clip.trajectory[0], clip.trajectory[k]);
      const Index h = f.flow.dim(2), r = s / h;
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < h; ++x) {
          double gx = 0.0, gy = 0.0;
          for (Index dy = 0; dy < r; ++dy)
            for (Index dx = 0; dx < r; ++dx) {
              gx += gt.flow.at({0, y * r + dy, x * r + dx});
              gy += gt.flow.at({1, y * r + dy, x * r + dx});
            }
          gx /= static_cast<double>(r * r);
          gy /= static_cast<double>(r * r);
          if (std::abs(gx) + std::abs(gy) < 1e-6) continue;
          err += std::hypot(f.flow.at({0, 0, y, x}) - gx, f.flow.at({0, 1, y, x}) - gy) * static_cast<double>(s) / 2.0;
          ++cells;
        }
    }
  }
  return err / static_cast<double>(std::max<long>(cells, 1));
}

void flow_diagnostic(const DeskRun& desk) {
  Dataset ds = load_dataset(desk.cfg.data_dir);
  Lfae<float> untrained(desk.cfg.lfae(), 0), trained(desk.cfg.lfae(), 0);
  import_params(trained.params(), load_checkpoint(desk.stage1_ckpt));
  info(fmt("stage-1 flow end-point error on moving cells (16 test clips): untrained %.3f px, trained %.3f px",
           moving_epe(untrained, ds, 16), moving_epe(trained, ds, 16)));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
  fs::remove_all(work);
  fs::create_directories(work);
  const auto start = Clock::now();

  criterion_gradients();
  criterion_warp();
  criterion_ddpm();
  criterion_metrics();
  criterion_alignment();

  RunConfig desk;
  desk.data_dir = (work / "data").string();
  desk.log_every = 50;
  std::ofstream log(work / "training.log");
  const auto gen_start = Clock::now();
  run_gen_data(desk);
  const double gen_seconds = seconds_since(gen_start);
  criterion_worldsim(desk.data_dir);
  DeskRun run = criterion_desk(desk, work, gen_seconds, log);
  criterion_ablation(run, work, log);
  criterion_determinism(work, log);
  criterion_fvd(run, work);
  flow_diagnostic(run);

  std::printf("%s\n", failures == 0 ? "all criteria passed" : (std::to_string(failures) + " criteria failed").c_str());
  std::printf("total %.0fs\n", seconds_since(start));
  return failures == 0 ? 0 : 1;
}
