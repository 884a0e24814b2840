// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "ide/image_io.hpp"
#include "ide/optim.hpp"

namespace fs = std::filesystem;

namespace ide {

namespace {

// [n x ...] from equally shaped parts.
Tensorf stack(const std::vector<Tensorf>& parts) {
  if (parts.empty()) throw DimensionError("stack: no parts");
  Shape shape = parts[0].shape();
  shape.insert(shape.begin(), static_cast<Index>(parts.size()));
  const Index per = parts[0].size();
  Tensorf::Array all(static_cast<Index>(parts.size()) * per);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].shape() != parts[0].shape()) throw DimensionError("stack: parts differ in shape");
    all.segment(static_cast<Index>(i) * per, per) = parts[i].value();
  }
  return Tensorf::from_array(shape, std::move(all));
}

Tensorf frame_of(const Tensorf& video, Index t) {
  const Index per = video.size() / video.dim(0);
  return Tensorf::from_array({video.dim(1), video.dim(2), video.dim(3)}, video.value().segment(t * per, per));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void check_finite(double v, const char* what, int iteration) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " became non-finite at iteration " + std::to_string(iteration));
}

Dataset open_dataset(const RunConfig& cfg) {
  if (!fs::exists(fs::path(cfg.data_dir) / "manifest.tsv"))
    throw PrerequisiteError("no dataset at " + cfg.data_dir + " (run gen-data first)");
  Dataset ds = load_dataset(cfg.data_dir);
  for (const auto& e : ds.entries)
    if (e.size != cfg.size || e.frames != cfg.frames)
      throw DataError("dataset clip " + e.clip_id + " is " + std::to_string(e.frames) + " frames of " +
                      std::to_string(e.size) + "px; config expects " + std::to_string(cfg.frames) + " of " +
                      std::to_string(cfg.size) + "px");
  return ds;
}

// Training entries and the first `eval_clips` held-out entries.
void split_entries(const Dataset& ds, int eval_clips, std::vector<ManifestEntry>* train,
                   std::vector<ManifestEntry>* eval) {
  for (const auto& e : ds.entries) {
    if (is_train_split(e.split)) {
      train->push_back(e);
    } else if (static_cast<int>(eval->size()) < eval_clips) {
      eval->push_back(e);
    }
  }
  if (train->empty()) throw DataError("dataset has no training clips");
  if (eval->size() < 2) throw DataError("dataset has fewer than 2 held-out clips");
}

void write_summary(const std::string& path, const TrainReport& r) {
  std::ofstream out(path);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "stage\t%d\niterations\t%d\nheldout_init\t%.9g\nheldout_final\t%.9g\nfirst100_avg\t%.9g\nseconds\t%.3f\n",
                r.stage, r.iterations, r.heldout_init, r.heldout_final, r.first100_avg, r.seconds);
  out << buf;
}

void write_run_config(const RunConfig& cfg, std::ostream* progress) {
  const std::string text = format_config(cfg);
  std::ofstream(fs::path(cfg.out_dir) / "run.cfg") << text;
  if (progress) *progress << text << std::flush;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- Stage 1

std::vector<NamedTensor> stage1_meta(const LfaeConfig& l) {
  return {meta_tensor("meta.stage", 1), meta_tensor("meta.size", l.size), meta_tensor("meta.c_lat", l.c_lat),
          meta_tensor("meta.lfae_width", l.width), meta_tensor("meta.flow_scale", l.flow_scale),
          meta_tensor("meta.lambda", l.lambda)};
}

std::vector<NamedTensor> stage1_tensors(const Lfae<float>& model) {
  std::vector<NamedTensor> out = export_params(model.params());
  for (auto& m : stage1_meta(model.config())) out.push_back(std::move(m));
  return out;
}

// L_stage1 over pairs (frame 0, frame t) of every held-out clip.
double stage1_heldout(const Lfae<float>& model, const std::vector<Tensorf>& videos, int batch) {
  NoGradGuard guard;
  std::vector<Tensorf> fi, fj;
  for (const auto& v : videos)
    for (Index t = 0; t < v.dim(0); ++t) {
      fi.push_back(frame_of(v, 0));
      fj.push_back(frame_of(v, t));
    }
  double total = 0.0;
  for (std::size_t s = 0; s < fi.size(); s += batch) {
    const std::size_t e = std::min(fi.size(), s + batch);
    std::vector<Tensorf> a(fi.begin() + s, fi.begin() + e), b(fj.begin() + s, fj.begin() + e);
    total += model.stage1_loss(stack(a), stack(b)).total.item() * static_cast<double>(e - s);
  }
  return total / static_cast<double>(fi.size());
}

// ---------------------------------------------------------------- Stage 2

struct Item {
  std::string id;
  std::uint64_t index = 0;  // position in the manifest
  Tensorf exo1, ego1;       // [3 x S x S]
  Tensorf z;                // [c_lat x h x h]
  Tensorf x0;               // [T x 3 x h x h]
  Tensorf traj;             // [T x 7]
  std::vector<int> tokens;
  Tensorf video;            // [T x D], EgoVideoFeats only
};

std::vector<Item> prepare_items(const Stage2Model& model, const Dataset& ds, const std::vector<ManifestEntry>& entries,
                                bool with_targets) {
  NoGradGuard guard;
  std::map<std::string, std::uint64_t> position;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) position[ds.entries[i].clip_id] = i;
  const bool video = model.cfg.fuse_mode == "ego_video_feats" && !model.cfg.disabled("ttm");
  std::vector<Item> items;
  for (const auto& e : entries) {
    Clip clip = load_clip(ds, e);
    Item it;
    it.id = e.clip_id;
    it.index = position[e.clip_id];
    it.exo1 = frame_of(clip.exo, 0);
    it.ego1 = frame_of(clip.ego, 0);
    it.z = model.lfae->encode(it.exo1);
    if (with_targets) {
      const Index t = clip.exo.dim(0);
      Tensorf first = broadcast_to(reshape(it.exo1, {1, 3, clip.exo.dim(2), clip.exo.dim(3)}), clip.exo.shape());
      FlowField<float> f = model.lfae->estimate_flow(first, clip.exo);
      const Index h = f.flow.dim(2);
      FlowFieldSeq<float> seq{reshape(f.flow, {1, t, 2, h, h}), reshape(f.occlusion, {1, t, 1, h, h})};
      it.x0 = reshape(make_state(seq), {t, 3, h, h});
    }
    Tensorf tf = trajectory_features<float>({clip.trajectory}, clip.size);
    it.traj = reshape(tf, {tf.dim(1), tf.dim(2)});
    it.tokens = clip.token_ids;
    if (video) {
      Eigen::MatrixXd ff = model.video.frame_features(clip.ego);
      Tensorf::Array a(ff.size());
      for (Index r = 0; r < ff.rows(); ++r)
        for (Index c = 0; c < ff.cols(); ++c) a[r * ff.cols() + c] = static_cast<float>(ff(r, c));
      it.video = Tensorf::from_array({ff.rows(), ff.cols()}, std::move(a));
    }
    items.push_back(std::move(it));
  }
  return items;
}

struct Batch {
  ConditionBundle<float> cond;
  Tensorf x0;
};

Batch make_batch(const Stage2Model& model, const std::vector<const Item*>& items, bool with_targets) {
  std::vector<Tensorf> exo, ego, z, x0, traj, video;
  std::vector<std::vector<int>> tokens;
  for (const Item* it : items) {
    exo.push_back(it->exo1);
    ego.push_back(it->ego1);
    z.push_back(it->z);
    traj.push_back(it->traj);
    tokens.push_back(it->tokens);
    if (with_targets) x0.push_back(it->x0);
    if (it->video.defined()) video.push_back(it->video);
  }
  Batch b;
  b.cond = model.cond.build(stack(exo), stack(ego), stack(traj), tokens, stack(z),
                            video.empty() ? Tensorf() : stack(video));
  if (with_targets) b.x0 = stack(x0);
  return b;
}

// Held-out L_dm with fixed draws shared by every run: steps are stratified
// over [1, N], noise comes from one constant stream.
double stage2_heldout(const Stage2Model& model, const std::vector<Item>& eval, int batch) {
  NoGradGuard guard;
  constexpr int kDraws = 4;
  const int total = static_cast<int>(eval.size()) * kDraws;
  const int steps = model.sched.steps;
  Rng rng(Rng::derive(0xE7A1, 0));
  std::vector<const Item*> items;
  std::vector<int> ns;
  std::vector<Tensorf> eps;
  for (int k = 0; k < total; ++k) {
    items.push_back(&eval[k % eval.size()]);
    ns.push_back(1 + static_cast<int>((static_cast<long>(k) * steps) / total));
    eps.push_back(randn<float>(eval[0].x0.shape(), rng));
  }
  const DmLoss kind = parse_dm_loss(model.cfg.dm_loss);
  double sum = 0.0;
  for (int s = 0; s < total; s += batch) {
    const int e = std::min(total, s + batch);
    std::vector<const Item*> part(items.begin() + s, items.begin() + e);
    Batch b = make_batch(model, part, true);
    std::vector<int> n(ns.begin() + s, ns.begin() + e);
    std::vector<Tensorf> noise(eps.begin() + s, eps.begin() + e);
    sum += ddpm_loss_at(model.dm.fn(), b.x0, b.cond, model.sched, n, stack(noise), kind).item() * (e - s);
  }
  return sum / total;
}

int fuse_mode_index(const std::string& name) { return static_cast<int>(parse_fuse_mode(name)); }

}  // namespace

Dataset run_gen_data(const RunConfig& cfg) {
  cfg.world().validate();
  return generate_dataset(cfg.world(), cfg.seed, cfg.data_dir);
}

TrainReport train_stage1(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Dataset ds = open_dataset(cfg);
  std::vector<ManifestEntry> train, eval;
  split_entries(ds, cfg.eval_clips, &train, &eval);
  std::vector<Tensorf> train_videos, eval_videos;
  for (const auto& e : train) train_videos.push_back(load_clip(ds, e).exo);
  for (const auto& e : eval) eval_videos.push_back(load_clip(ds, e).exo);

  ensure_dir(cfg.out_dir);
  write_run_config(cfg, progress);
  Lfae<float> model(cfg.lfae(), cfg.seed);
  std::vector<Tensorf> params = model.params().trainable();
  OptimizerState<float> opt;
  opt.config.lr = cfg.lr;
  Rng rng(Rng::derive(cfg.seed, 3));

  TrainReport report;
  report.stage = 1;
  report.iterations = cfg.iterations;
  report.heldout_init = stage1_heldout(model, eval_videos, cfg.batch);
  std::ofstream log(fs::path(cfg.out_dir) / "train_log.csv");
  log << "iteration,l_rec,l_per,total\n";
  double first = 0.0;
  const int frames = cfg.frames;
  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<Tensorf> fi, fj;
    for (int b = 0; b < cfg.batch; ++b) {
      const Tensorf& v = train_videos[rng.below(train_videos.size())];
      const int i = rng.uniform_int(0, frames - 1), j = rng.uniform_int(0, frames - 1);
      fi.push_back(frame_of(v, i));
      fj.push_back(frame_of(v, j));
    }
    Stage1Terms<float> terms = model.stage1_loss(stack(fi), stack(fj));
    const double loss = terms.total.item();
    check_finite(loss, "stage-1 loss", it);
    backward(terms.total);
    adam_step(params, opt);
    if (it <= 100) first += loss;
    if (it == 1 || it % cfg.log_every == 0 || it == cfg.iterations) {
      char row[160];
      std::snprintf(row, sizeof(row), "%d,%.9g,%.9g,%.9g\n", it, terms.rec.item(), terms.per.item(), loss);
      log << row << std::flush;
      if (progress) *progress << "stage1 it " << it << " loss " << loss << "\n" << std::flush;
    }
    if (cfg.ckpt_every > 0 && it % cfg.ckpt_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "stage1_iter%06d.ckpt", it);
      save_checkpoint((fs::path(cfg.out_dir) / name).string(), stage1_tensors(model));
    }
  }
  report.first100_avg = cfg.iterations > 0 ? first / std::min(100, cfg.iterations) : 0.0;
  report.heldout_final = stage1_heldout(model, eval_videos, cfg.batch);
  check_finite(report.heldout_final, "stage-1 held-out loss", cfg.iterations);
  report.checkpoint = (fs::path(cfg.out_dir) / "stage1.ckpt").string();
  save_checkpoint(report.checkpoint, stage1_tensors(model));
  report.seconds = elapsed(t0);
  write_summary((fs::path(cfg.out_dir) / "summary.tsv").string(), report);
  return report;
}

std::vector<NamedTensor> stage2_meta(const RunConfig& cfg, int vocab) {
  return {meta_tensor("meta.stage", 2),
          meta_tensor("meta.size", cfg.size),
          meta_tensor("meta.frames", cfg.frames),
          meta_tensor("meta.c_lat", cfg.c_lat),
          meta_tensor("meta.lfae_width", cfg.lfae_width),
          meta_tensor("meta.flow_scale", cfg.flow_scale),
          meta_tensor("meta.lambda", cfg.lambda),
          meta_tensor("meta.vocab", vocab),
          meta_tensor("meta.cond_width", cfg.cond_width),
          meta_tensor("meta.heads", cfg.heads),
          meta_tensor("meta.patch", cfg.patch),
          meta_tensor("meta.text_dim", cfg.text_dim),
          meta_tensor("meta.unet_base", cfg.unet_base),
          meta_tensor("meta.steps", cfg.steps),
          meta_tensor("meta.beta_min", cfg.beta_min),
          meta_tensor("meta.beta_max", cfg.beta_max),
          meta_tensor("meta.fuse_mode", fuse_mode_index(cfg.fuse_mode)),
          meta_tensor("meta.use_cfpm", cfg.disabled("cfpm") ? 0 : 1),
          meta_tensor("meta.use_adu", cfg.disabled("adu") ? 0 : 1),
          meta_tensor("meta.use_ttm", cfg.disabled("ttm") ? 0 : 1)};
}

Stage2Model::Stage2Model(const RunConfig& c, int v) : cfg(c), vocab(v) {
  lfae = std::make_unique<Lfae<float>>(cfg.lfae(), cfg.seed);
  lfae->params().freeze_all();
  Rng rc(Rng::derive(cfg.seed, 1));
  cond = Conditioner<float>(store, cfg.condition(vocab), rc);
  Rng rd(Rng::derive(cfg.seed, 2));
  dm = Denoiser<float>(store, cfg.denoiser(), rd);
  sched = cfg.schedule();
}

std::vector<NamedTensor> Stage2Model::checkpoint_tensors() const {
  std::vector<NamedTensor> out = export_params(lfae->params());
  for (auto& t : export_params(store)) out.push_back(std::move(t));
  for (auto& m : stage2_meta(cfg, vocab)) out.push_back(std::move(m));
  return out;
}

std::unique_ptr<Stage2Model> Stage2Model::from_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw PrerequisiteError("checkpoint not found: " + path);
  std::vector<NamedTensor> t = load_checkpoint(path);
  if (meta_value(t, "meta.stage") != 2) throw CheckpointError(path + " is not a Stage-2 checkpoint");
  auto as_int = [&](const char* k) { return static_cast<int>(std::lround(meta_value(t, k))); };
  RunConfig cfg;
  cfg.size = as_int("meta.size");
  cfg.frames = as_int("meta.frames");
  cfg.c_lat = as_int("meta.c_lat");
  cfg.lfae_width = as_int("meta.lfae_width");
  cfg.flow_scale = meta_value(t, "meta.flow_scale");
  cfg.lambda = meta_value(t, "meta.lambda");
  cfg.cond_width = as_int("meta.cond_width");
  cfg.heads = as_int("meta.heads");
  cfg.patch = as_int("meta.patch");
  cfg.text_dim = as_int("meta.text_dim");
  cfg.unet_base = as_int("meta.unet_base");
  cfg.steps = as_int("meta.steps");
  cfg.beta_min = meta_value(t, "meta.beta_min");
  cfg.beta_max = meta_value(t, "meta.beta_max");
  cfg.fuse_mode = fuse_mode_name(static_cast<FuseMode>(as_int("meta.fuse_mode")));
  cfg.disable.clear();
  if (!as_int("meta.use_cfpm")) cfg.disable.push_back("cfpm");
  if (!as_int("meta.use_adu")) cfg.disable.push_back("adu");
  if (!as_int("meta.use_ttm")) cfg.disable.push_back("ttm");
  auto model = std::make_unique<Stage2Model>(cfg, as_int("meta.vocab"));
  import_params(model->lfae->params(), t);
  import_params(model->store, t);
  return model;
}

TrainReport train_stage2(const RunConfig& cfg_in, const std::string& stage1_ckpt, std::ostream* progress) {
  cfg_in.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (stage1_ckpt.empty() || !fs::exists(stage1_ckpt))
    throw PrerequisiteError("stage 2 needs a Stage-1 checkpoint (--stage1-ckpt)" +
                            (stage1_ckpt.empty() ? std::string() : ": " + stage1_ckpt + " not found"));
  std::vector<NamedTensor> s1 = load_checkpoint(stage1_ckpt);
  if (meta_value(s1, "meta.stage") != 1) throw CheckpointError(stage1_ckpt + " is not a Stage-1 checkpoint");
  RunConfig cfg = cfg_in;
  if (std::lround(meta_value(s1, "meta.size")) != cfg.size)
    throw DataError("Stage-1 checkpoint was trained at " + std::to_string(std::lround(meta_value(s1, "meta.size"))) +
                    "px; config size is " + std::to_string(cfg.size));
  cfg.c_lat = static_cast<int>(std::lround(meta_value(s1, "meta.c_lat")));
  cfg.lfae_width = static_cast<int>(std::lround(meta_value(s1, "meta.lfae_width")));
  cfg.flow_scale = meta_value(s1, "meta.flow_scale");
  cfg.lambda = meta_value(s1, "meta.lambda");
  cfg.validate();

  Dataset ds = open_dataset(cfg);
  std::vector<ManifestEntry> train, eval;
  split_entries(ds, cfg.eval_clips, &train, &eval);
  ensure_dir(cfg.out_dir);
  write_run_config(cfg, progress);

  Stage2Model model(cfg, static_cast<int>(ds.tokens.size()));
  import_params(model.lfae->params(), s1);
  std::vector<Item> train_items = prepare_items(model, ds, train, true);
  std::vector<Item> eval_items = prepare_items(model, ds, eval, true);

  std::vector<Tensorf> params = model.store.trainable();
  OptimizerState<float> opt;
  opt.config.lr = cfg.lr;
  Rng data_rng(Rng::derive(cfg.seed, 3));
  Rng noise_rng(Rng::derive(cfg.seed, 4));
  const DmLoss kind = parse_dm_loss(cfg.dm_loss);
  const bool align = !cfg.disabled("cfpm");

  TrainReport report;
  report.stage = 2;
  report.iterations = cfg.iterations;
  report.heldout_init = stage2_heldout(model, eval_items, cfg.batch);
  std::ofstream log(fs::path(cfg.out_dir) / "train_log.csv");
  log << "iteration,l_dm,l_align,total\n";
  double first = 0.0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    std::vector<const Item*> batch;
    for (int b = 0; b < cfg.batch; ++b) batch.push_back(&train_items[data_rng.below(train_items.size())]);
    Batch bt = make_batch(model, batch, true);
    Tensorf l_dm = ddpm_loss(model.dm.fn(), bt.x0, bt.cond, model.sched, noise_rng, kind);
    Tensorf loss = l_dm;
    double l_align = 0.0;
    if (align) {
      Tensorf a = align_loss(bt.cond.y_cls_exo, bt.cond.y_cls_ego, cfg.stop_ego_grad);
      l_align = a.item();
      loss = add(loss, a);
    }
    const double dm_value = l_dm.item();
    check_finite(loss.item(), "stage-2 loss", it);
    backward(loss);
    adam_step(params, opt);
    if (it <= 100) first += dm_value;
    if (it == 1 || it % cfg.log_every == 0 || it == cfg.iterations) {
      char row[160];
      std::snprintf(row, sizeof(row), "%d,%.9g,%.9g,%.9g\n", it, dm_value, l_align, loss.item());
      log << row << std::flush;
      if (progress) *progress << "stage2 it " << it << " loss " << loss.item() << "\n" << std::flush;
    }
    if (cfg.ckpt_every > 0 && it % cfg.ckpt_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "stage2_iter%06d.ckpt", it);
      save_checkpoint((fs::path(cfg.out_dir) / name).string(), model.checkpoint_tensors());
    }
  }
  report.first100_avg = cfg.iterations > 0 ? first / std::min(100, cfg.iterations) : 0.0;
  report.heldout_final = stage2_heldout(model, eval_items, cfg.batch);
  check_finite(report.heldout_final, "stage-2 held-out loss", cfg.iterations);
  report.checkpoint = (fs::path(cfg.out_dir) / "stage2.ckpt").string();
  save_checkpoint(report.checkpoint, model.checkpoint_tensors());
  report.seconds = elapsed(t0);
  write_summary((fs::path(cfg.out_dir) / "summary.tsv").string(), report);
  return report;
}

Image flow_to_image(const Tensorf& flow, double scale, int upscale) {
  if (flow.rank() != 3 || flow.dim(0) != 2) throw DimensionError("flow_to_image: expected [2 x h x w]");
  const int h = static_cast<int>(flow.dim(1)), w = static_cast<int>(flow.dim(2));
  Image img(h * upscale, w * upscale);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fx = flow.value()[y * w + x], fy = flow.value()[h * w + y * w + x];
      const double hue = (std::atan2(fy, fx) + M_PI) / (2.0 * M_PI) * 6.0;
      const double sat = std::min(1.0, std::hypot(fx, fy) / scale);
      const int sector = static_cast<int>(std::floor(hue)) % 6;
      const double f = hue - std::floor(hue);
      const double p = 1.0 - sat, q = 1.0 - sat * f, t = 1.0 - sat * (1.0 - f);
      double rgb[3];
      switch (sector) {
        case 0: rgb[0] = 1; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = 1; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = 1; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = 1; break;
        default: rgb[0] = 1; rgb[1] = p; rgb[2] = q; break;
      }
      for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < upscale; ++dy)
          for (int dx = 0; dx < upscale; ++dx)
            img.at(c, y * upscale + dy, x * upscale + dx) = static_cast<float>(rgb[c]);
    }
  return img;
}

std::vector<std::string> generate(const RunConfig& cfg, const GenerateOptions& opts) {
  Dataset ds = open_dataset(cfg);
  std::unique_ptr<Stage2Model> model =
      opts.checkpoint.empty() ? std::make_unique<Stage2Model>(cfg, static_cast<int>(ds.tokens.size()))
                              : Stage2Model::from_checkpoint(opts.checkpoint);
  if (model->cfg.size != cfg.size || model->cfg.frames != cfg.frames)
    throw DataError("checkpoint was trained on " + std::to_string(model->cfg.frames) + " frames of " +
                    std::to_string(model->cfg.size) + "px; dataset has " + std::to_string(cfg.frames) + " of " +
                    std::to_string(cfg.size) + "px");
  if (model->vocab != static_cast<int>(ds.tokens.size()))
    throw DataError("checkpoint vocabulary has " + std::to_string(model->vocab) + " tokens, dataset has " +
                    std::to_string(ds.tokens.size()));

  std::vector<ManifestEntry> entries;
  if (opts.clip_ids.empty()) {
    for (const auto& e : ds.entries)
      if (!is_train_split(e.split)) entries.push_back(e);
  } else {
    for (const auto& id : opts.clip_ids) {
      auto it = std::find_if(ds.entries.begin(), ds.entries.end(), [&](const ManifestEntry& e) { return e.clip_id == id; });
      if (it == ds.entries.end()) throw DataError("unknown clip id '" + id + "'");
      entries.push_back(*it);
    }
  }
  std::vector<Item> items = prepare_items(*model, ds, entries, false);
  ensure_dir(opts.out_dir);

  const int batch = std::max(1, cfg.batch);
  const Index t = cfg.frames, h = model->dm.config().latent;
  std::vector<std::string> written;
  NoGradGuard guard;
  for (std::size_t s = 0; s < items.size(); s += batch) {
    const std::size_t e = std::min(items.size(), s + batch);
    std::vector<const Item*> part;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = s; i < e; ++i) {
      part.push_back(&items[i]);
      seeds.push_back(Rng::derive(opts.seed, items[i].index));
    }
    const Index b = static_cast<Index>(part.size());
    Batch bt = make_batch(*model, part, false);
    std::vector<std::vector<NamedTensor>> dumps(part.size());
    StepHook hook;
    if (opts.dump_steps) {
      hook = [&](int n, const Tensorf& x) {
        const Index per = x.size() / b;
        for (Index i = 0; i < b; ++i) {
          char name[32];
          std::snprintf(name, sizeof(name), "step_%03d", n);
          NamedTensor nt{name, {t, 3, h, h}, {}};
          nt.data.assign(x.data() + i * per, x.data() + (i + 1) * per);
          dumps[i].push_back(std::move(nt));
        }
      };
    }
    FlowFieldSeq<float> seq = sample_sequence(model->dm.fn(), bt.cond, model->sched, seeds, {b, t, 3, h, h}, hook);
    for (Index i = 0; i < b; ++i) {
      const Item& it = *part[i];
      FlowField<float> field{reshape(slice(seq.flow, 0, i, 1), {t, 2, h, h}),
                             reshape(slice(seq.occlusion, 0, i, 1), {t, 1, h, h})};
      Tensorf z = broadcast_to(reshape(it.z, {1, it.z.dim(0), h, h}), {t, it.z.dim(0), h, h});
      Tensorf frames = model->lfae->decode(warp(z, field));
      const fs::path dir = fs::path(opts.out_dir) / it.id;
      ensure_dir((dir / "exo").string());
      ensure_dir((dir / "flow").string());
      ensure_dir((dir / "occ").string());
      const int up = cfg.size / static_cast<int>(h);
      for (Index f = 0; f < t; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04d.ppm", static_cast<int>(f));
        write_ppm((dir / "exo" / name).string(), tensor_to_image(frames, f));
        write_ppm((dir / "flow" / name).string(), flow_to_image(frame_of(field.flow, f), 0.25, up));
        Tensorf occ = frame_of(field.occlusion, f);
        Image om(static_cast<int>(h) * up, static_cast<int>(h) * up);
        for (int y = 0; y < om.height; ++y)
          for (int x = 0; x < om.width; ++x)
            for (int c = 0; c < 3; ++c) om.at(c, y, x) = occ.value()[(y / up) * h + x / up];
        write_ppm((dir / "occ" / name).string(), om);
      }
      if (opts.dump_steps) save_checkpoint((dir / "steps.ckpt").string(), dumps[i]);
      written.push_back(it.id);
    }
  }
  return written;
}

}  // namespace ide
