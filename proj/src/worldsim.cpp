// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/worldsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ide/ops.hpp"
#include "ide/parallel.hpp"

namespace fs = std::filesystem;

namespace ide {

namespace {

using Rgb = std::array<float, 3>;

constexpr Rgb kFloor{0.42f, 0.44f, 0.47f};
constexpr Rgb kWall{0.15f, 0.13f, 0.12f};
constexpr Rgb kAgentBody{0.98f, 0.82f, 0.62f};
constexpr Rgb kAgentWedge{0.25f, 0.10f, 0.05f};

const std::array<Rgb, 10> kPalette{{
    {0.85f, 0.15f, 0.15f},  // red
    {0.15f, 0.70f, 0.20f},  // green
    {0.15f, 0.30f, 0.85f},  // blue
    {0.95f, 0.85f, 0.10f},  // yellow
    {0.10f, 0.80f, 0.85f},  // cyan
    {0.80f, 0.20f, 0.75f},  // magenta
    {0.95f, 0.55f, 0.10f},  // orange
    {0.45f, 0.20f, 0.65f},  // purple
    {0.97f, 0.97f, 0.97f},  // white
    {0.05f, 0.05f, 0.05f},  // black
}};

constexpr int kSpawnRetries = 400;
constexpr int kActionRetries = 200;
constexpr int kClipRetries = 64;

double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
}

bool inside_object(const SceneObject& o, double px, double py) {
  const double dx = px - o.cx, dy = py - o.cy;
  const double h = std::max(o.hx, o.hy);
  switch (o.shape) {
    case ShapeKind::Box:
    case ShapeKind::Bar:
      return std::abs(dx) <= o.hx && std::abs(dy) <= o.hy;
    case ShapeKind::Disc:
      return dx * dx + dy * dy <= h * h;
    case ShapeKind::Triangle: {
      if (dy < -h || dy > h) return false;
      const double half = 0.5 * h * (dy + h) / h;
      return std::abs(dx) <= half;
    }
    case ShapeKind::Diamond:
      return std::abs(dx) + std::abs(dy) <= h;
    case ShapeKind::Cross:
      return (std::abs(dx) <= h && std::abs(dy) <= 0.35 * h) || (std::abs(dx) <= 0.35 * h && std::abs(dy) <= h);
  }
  return false;
}

double box_distance(const SceneObject& o, double px, double py) {
  const double dx = std::max(std::abs(px - o.cx) - o.hx, 0.0);
  const double dy = std::max(std::abs(py - o.cy) - o.hy, 0.0);
  return std::hypot(dx, dy);
}

double clearance(int size) { return AgentStyle::for_size(size).support() + 2.0; }

double scale_of(int size) { return size / 64.0; }

// Wedge coverage in the agent's body frame (u forward, v lateral).
double wedge_alpha(const AgentStyle& st, double u, double v) {
  const double r = st.radius;
  const std::array<std::array<double, 2>, 3> p{{{0.85 * r, 0.0}, {-0.3 * r, 0.55 * r}, {-0.3 * r, -0.55 * r}}};
  double sd = -1e9;
  for (int e = 0; e < 3; ++e) {
    const auto& a = p[e];
    const auto& b = p[(e + 1) % 3];
    const double ex = b[0] - a[0], ey = b[1] - a[1];
    const double len = std::hypot(ex, ey);
    // Outward normal for counter-clockwise winding in (u, v).
    const double nx = ey / len, ny = -ex / len;
    sd = std::max(sd, (u - a[0]) * nx + (v - a[1]) * ny);
  }
  return smoothstep01((0.5 * st.soft - sd) / st.soft);
}

Rgb agent_color(const Pose& pose, int size, double px, double py) {
  const AgentStyle st = AgentStyle::for_size(size);
  const double dx = px - pose.x, dy = py - pose.y;
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  const double w = wedge_alpha(st, u, v);
  Rgb out;
  for (int k = 0; k < 3; ++k) out[k] = static_cast<float>((1.0 - w) * kAgentBody[k] + w * kAgentWedge[k]);
  return out;
}

Rgb layer_sample(const Image& layer, double px, double py) {
  // Continuous coordinates, pixel centers at i + 0.5; outside the room is wall.
  const double fx = px - 0.5, fy = py - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  Rgb out{0, 0, 0};
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const double wgt = (i ? ax : 1.0 - ax) * (j ? ay : 1.0 - ay);
      if (wgt == 0.0) continue;
      const int x = x0 + i, y = y0 + j;
      const bool in = x >= 0 && y >= 0 && x < layer.width && y < layer.height;
      for (int k = 0; k < 3; ++k) out[k] += static_cast<float>(wgt * (in ? layer.at(k, y, x) : kWall[k]));
    }
  return out;
}

ShapeKind shape_from_index(int i) { return static_cast<ShapeKind>(i); }

std::string verb_token(Verb v) { return verb_names()[static_cast<int>(v)]; }

std::string clip_id_for(int layout, int clip) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "l%03d_c%04d", layout, clip);
  return buf;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string frame_name(int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d.ppm", t);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void WorldConfig::validate() const {
  if (frames < 2) throw ConfigError("frames must be >= 2");
  if (size != 32 && size != 64 && size != 128) throw ConfigError("size must be 32, 64 or 128");
  if (clips < 10) throw ConfigError("clips must be >= 10");
  if (clips_per_layout < 1) throw ConfigError("clips_per_layout must be >= 1");
  if (min_objects < 1 || max_objects > 6 || min_objects > max_objects)
    throw ConfigError("object count range must lie within [1, 6]");
  if (!(v_max > 0.0)) throw ConfigError("v_max must be positive");
  if (split_rule != "seen" && split_rule != "unseen") throw ConfigError("split_rule must be seen or unseen");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
  if (split_rule == "unseen" && (clips + clips_per_layout - 1) / clips_per_layout < 2)
    throw ConfigError("unseen split needs at least two layouts");
}

const std::vector<std::string>& verb_names() {
  static const std::vector<std::string> v{"approach", "retreat", "circle", "pass"};
  return v;
}

const std::vector<std::string>& color_names() {
  static const std::vector<std::string> v{"red",    "green",  "blue",   "yellow", "cyan",
                                          "magenta", "orange", "purple", "white",  "black"};
  return v;
}

const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> v{"box", "bar", "disc", "triangle", "diamond", "cross"};
  return v;
}

std::vector<std::string> default_vocabulary() {
  std::vector<std::string> out = verb_names();
  for (const auto& c : color_names()) out.push_back(c);
  for (const auto& s : shape_names()) out.push_back(s);
  return out;
}

std::string describe(const ActionSpec& action, const SceneState& scene) {
  const SceneObject& o = scene.objects.at(action.target);
  return verb_token(action.verb) + " " + color_names()[o.color] + " " + shape_names()[static_cast<int>(o.shape)];
}

AgentStyle AgentStyle::for_size(int size) {
  const double k = scale_of(size);
  return {4.5 * k, std::max(1.5, 5.0 * k)};
}

SceneState spawn_layout(const WorldConfig& cfg, Rng& rng) {
  SceneState scene;
  scene.size = cfg.size;
  const double k = scale_of(cfg.size);
  const int lo = std::clamp(cfg.min_objects, 1, 6), hi = std::clamp(cfg.max_objects, lo, 6);
  const int count = rng.uniform_int(lo, hi);
  const double gap = 3.0 * k, margin = 3.0 * k;
  for (int n = 0; n < count; ++n) {
    SceneObject o;
    o.color = rng.uniform_int(0, static_cast<int>(color_names().size()) - 1);
    o.shape = shape_from_index(rng.uniform_int(0, static_cast<int>(shape_names().size()) - 1));
    const double h = rng.uniform(3.5, 5.5) * k;
    o.hx = o.shape == ShapeKind::Bar ? 1.5 * h : h;
    o.hy = o.shape == ShapeKind::Bar ? 0.6 * h : h;
    bool placed = false;
    for (int attempt = 0; attempt < kSpawnRetries && !placed; ++attempt) {
      o.cx = rng.uniform(margin + o.hx, cfg.size - margin - o.hx);
      o.cy = rng.uniform(margin + o.hy, cfg.size - margin - o.hy);
      placed = true;
      for (const auto& other : scene.objects) {
        if (std::abs(o.cx - other.cx) < o.hx + other.hx + gap && std::abs(o.cy - other.cy) < o.hy + other.hy + gap) {
          placed = false;
          break;
        }
      }
    }
    if (placed) scene.objects.push_back(o);
  }
  if (scene.objects.empty()) throw DataError("could not place any object");
  return scene;
}

bool trajectory_valid(const std::vector<Pose>& traj, const SceneState& scene) {
  const double lo = AgentStyle::for_size(scene.size).support() + 1.5;
  const double hi = scene.size - lo;
  const double clear = clearance(scene.size);
  for (const auto& p : traj) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.theta)) return false;
    if (p.x < lo || p.x > hi || p.y < lo || p.y > hi) return false;
    for (const auto& o : scene.objects)
      if (box_distance(o, p.x, p.y) < clear) return false;
  }
  return true;
}

std::vector<Pose> script_action(const ActionSpec& action, const SceneState& scene, const WorldConfig& cfg, Rng& rng) {
  if (action.target < 0 || action.target >= static_cast<int>(scene.objects.size()))
    throw DataError("action target does not exist");
  const SceneObject& target = scene.objects[action.target];
  const int T = cfg.frames;
  const double k = scale_of(cfg.size);
  const double vmax = cfg.v_max * k;
  const double reach = std::hypot(target.hx, target.hy) + clearance(cfg.size);
  const double pi = std::numbers::pi;

  for (int attempt = 0; attempt < kActionRetries; ++attempt) {
    const double v = rng.uniform(0.6, 1.0) * vmax;
    const double len = v * (T - 1);
    const double phi = rng.uniform(-pi, pi);
    std::vector<Pose> traj(T);
    switch (action.verb) {
      case Verb::Approach: {
        const double d0 = reach + len + rng.uniform(0.5, 4.0) * k;
        const double ux = -std::cos(phi), uy = -std::sin(phi);
        for (int t = 0; t < T; ++t) {
          const double d = d0 - v * t;
          traj[t] = {target.cx + d * std::cos(phi), target.cy + d * std::sin(phi), std::atan2(uy, ux)};
        }
        break;
      }
      case Verb::Retreat: {
        const double d0 = reach + rng.uniform(0.5, 3.0) * k;
        for (int t = 0; t < T; ++t) {
          const double d = d0 + v * t;
          traj[t] = {target.cx + d * std::cos(phi), target.cy + d * std::sin(phi), phi};
        }
        break;
      }
      case Verb::Circle: {
        const double radius = reach + rng.uniform(1.0, 6.0) * k;
        // Chord length per frame stays below v.
        const double omega = (rng.uniform() < 0.5 ? -1.0 : 1.0) * v / radius;
        for (int t = 0; t < T; ++t) {
          const double a = phi + omega * t;
          const double x = target.cx + radius * std::cos(a), y = target.cy + radius * std::sin(a);
          traj[t] = {x, y, std::atan2(target.cy - y, target.cx - x)};
        }
        break;
      }
      case Verb::Pass: {
        const double ux = std::cos(phi), uy = std::sin(phi);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double nx = -uy * side, ny = ux * side;
        const double offset = reach + rng.uniform(1.0, 5.0) * k;
        const double along0 = -0.5 * len + rng.uniform(-0.2, 0.2) * len;
        for (int t = 0; t < T; ++t) {
          const double a = along0 + v * t;
          traj[t] = {target.cx + nx * offset + ux * a, target.cy + ny * offset + uy * a, phi};
        }
        break;
      }
    }
    if (trajectory_valid(traj, scene)) return traj;
  }
  throw DataError("no valid spawn for action on target " + std::to_string(action.target));
}

double agent_alpha(const Pose& pose, int size, double px, double py) {
  const AgentStyle st = AgentStyle::for_size(size);
  const double d = std::hypot(px - pose.x, py - pose.y);
  return smoothstep01((st.support() - d) / st.soft);
}

PixelBox agent_bbox(const Pose& pose, int size) {
  const double r = AgentStyle::for_size(size).support();
  auto lo = [&](double c) { return std::clamp(static_cast<int>(std::floor(c - r - 0.5)), 0, size - 1); };
  auto hi = [&](double c) { return std::clamp(static_cast<int>(std::ceil(c + r - 0.5)), 0, size - 1); };
  return {lo(pose.x), lo(pose.y), hi(pose.x), hi(pose.y)};
}

Image render_layer(const SceneState& scene) {
  const int S = scene.size;
  Image img(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      Rgb c = kFloor;
      for (const auto& o : scene.objects)
        if (inside_object(o, x + 0.5, y + 0.5)) c = kPalette[o.color];
      for (int k = 0; k < 3; ++k) img.at(k, y, x) = c[k];
    }
  return img;
}

Image render_exo(const SceneState& scene, const Pose& pose, bool wedge) {
  Image img = render_layer(scene);
  const PixelBox b = agent_bbox(pose, scene.size);
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double a = agent_alpha(pose, scene.size, px, py);
      if (a <= 0.0) continue;
      const Rgb c = wedge ? agent_color(pose, scene.size, px, py) : kAgentBody;
      for (int k = 0; k < 3; ++k) img.at(k, y, x) = static_cast<float>(a * c[k] + (1.0 - a) * img.at(k, y, x));
    }
  return img;
}

double ego_forward_offset(int size) { return std::ceil(AgentStyle::for_size(size).support()) + 1.0; }

Image render_ego(const SceneState& scene, const Pose& pose) {
  const int S = scene.size;
  const Image layer = render_layer(scene);
  const double d0 = ego_forward_offset(S);
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  Image img(S, S);
  for (int v = 0; v < S; ++v)
    for (int u = 0; u < S; ++u) {
      const double a = d0 + u + 0.5;
      const double b = v + 0.5 - 0.5 * S;
      const Rgb col = layer_sample(layer, pose.x + a * c - b * s, pose.y + a * s + b * c);
      for (int k = 0; k < 3; ++k) img.at(k, v, u) = col[k];
    }
  return img;
}

FlowGroundTruth gt_backward_flow(const SceneState& scene, const Pose& pose_i, const Pose& pose_j) {
  const int S = scene.size;
  FlowGroundTruth gt{Tensorf::zeros({2, S, S}), Tensorf::constant({1, S, S}, 1.0f)};
  auto& f = gt.flow.value_mut();
  auto& m = gt.occlusion.value_mut();
  const double dth = pose_i.theta - pose_j.theta;
  const double c = std::cos(dth), s = std::sin(dth);
  const Index plane = static_cast<Index>(S) * S;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const Index p = static_cast<Index>(y) * S + x;
      if (agent_alpha(pose_j, S, px, py) > 0.0) {
        const double rx = px - pose_j.x, ry = py - pose_j.y;
        const double qx = pose_i.x + c * rx - s * ry, qy = pose_i.y + s * rx + c * ry;
        f[p] = static_cast<float>(2.0 * (qx - px) / S);
        f[plane + p] = static_cast<float>(2.0 * (qy - py) / S);
      } else if (agent_alpha(pose_i, S, px, py) > 0.0) {
        m[p] = 0.0f;
      }
    }
  return gt;
}

double masked_warp_error(const Tensorf& frame_i, const Tensorf& frame_j, const FlowGroundTruth& gt) {
  const Index S = frame_i.dim(1);
  Tensorf warped = grid_sample_bilinear(reshape(frame_i, {1, 3, S, S}), reshape(gt.flow, {1, 2, S, S}));
  const auto& w = warped.value();
  const auto& b = frame_j.value();
  const auto& m = gt.occlusion.value();
  double err = 0.0;
  Index count = 0;
  for (Index p = 0; p < S * S; ++p) {
    if (m[p] < 0.5f) continue;
    for (Index c = 0; c < 3; ++c) err += std::abs(static_cast<double>(w[c * S * S + p]) - b[c * S * S + p]);
    count += 3;
  }
  return count ? err / static_cast<double>(count) : 0.0;
}

int layout_of(const std::string& clip_id) {
  if (clip_id.size() < 5 || clip_id[0] != 'l') throw DataError("malformed clip id: " + clip_id);
  try {
    return std::stoi(clip_id.substr(1, clip_id.find('_') - 1));
  } catch (const std::exception&) {
    throw DataError("malformed clip id: " + clip_id);
  }
}

bool is_train_split(const std::string& split) { return split.size() > 6 && split.ends_with("_train"); }

ClipSource simulate_clip(const WorldConfig& cfg, std::uint64_t dataset_seed, int clip_index) {
  const int layout = clip_index / cfg.clips_per_layout;
  Rng layout_rng(Rng::derive(dataset_seed, 0x1000000ULL + static_cast<std::uint64_t>(layout)));
  ClipSource src;
  src.scene = spawn_layout(cfg, layout_rng);
  Rng rng(Rng::derive(dataset_seed, static_cast<std::uint64_t>(clip_index)));
  for (int attempt = 0; attempt < kClipRetries; ++attempt) {
    src.action.verb = static_cast<Verb>(rng.uniform_int(0, 3));
    src.action.target = rng.uniform_int(0, static_cast<int>(src.scene.objects.size()) - 1);
    try {
      src.trajectory = script_action(src.action, src.scene, cfg, rng);
      return src;
    } catch (const DataError&) {
    }
  }
  throw DataError("clip " + std::to_string(clip_index) + ": no realizable action in layout " +
                  std::to_string(layout));
}

Tensorf image_to_tensor(const Image& img) {
  Tensorf t = Tensorf::zeros({3, img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), t.value_mut().data());
  return t;
}

Image tensor_to_image(const Tensorf& t, Index frame) {
  const Index h = t.dim(-2), w = t.dim(-1);
  Image img(static_cast<int>(h), static_cast<int>(w));
  const Index off = frame < 0 ? 0 : frame * 3 * h * w;
  std::copy(t.data() + off, t.data() + off + 3 * h * w, img.data.begin());
  return img;
}

Dataset generate_dataset(const WorldConfig& cfg, std::uint64_t seed, const std::string& root) {
  cfg.validate();
  const fs::path base(root);
  std::error_code ec;
  if (fs::exists(base / "manifest.tsv")) {
    // Regenerating over an earlier dataset: drop the clips it listed.
    Dataset old = load_dataset(root);
    for (const auto& e : old.entries) fs::remove_all(base / e.clip_id);
  }
  fs::create_directories(base, ec);
  if (ec || !fs::is_directory(base)) throw IoError("cannot create dataset directory " + root);

  const int n = cfg.clips;
  const int layouts = (n + cfg.clips_per_layout - 1) / cfg.clips_per_layout;
  std::vector<std::string> split(n);
  Rng split_rng(Rng::derive(seed, 0x5EED5EEDULL));
  if (cfg.split_rule == "seen") {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[split_rng.below(static_cast<std::uint64_t>(i) + 1)]);
    const int n_train = std::clamp(static_cast<int>(std::lround(cfg.train_fraction * n)), 1, n - 1);
    for (int i = 0; i < n; ++i) split[order[i]] = i < n_train ? "seen_train" : "seen_test";
  } else {
    std::vector<int> order(layouts);
    for (int i = 0; i < layouts; ++i) order[i] = i;
    for (int i = layouts - 1; i > 0; --i)
      std::swap(order[i], order[split_rng.below(static_cast<std::uint64_t>(i) + 1)]);
    const int n_train = std::clamp(static_cast<int>(std::lround(cfg.train_fraction * layouts)), 1, layouts - 1);
    std::vector<bool> train_layout(layouts);
    for (int i = 0; i < layouts; ++i) train_layout[order[i]] = i < n_train;
    for (int i = 0; i < n; ++i)
      split[i] = train_layout[i / cfg.clips_per_layout] ? "unseen_train" : "unseen_test";
  }

  const std::vector<std::string> vocab = default_vocabulary();
  std::vector<ManifestEntry> entries(n);
  parallel_for(n, [&](Index ci) {
    const int c = static_cast<int>(ci);
    const ClipSource src = simulate_clip(cfg, seed, c);
    ManifestEntry& e = entries[c];
    e.clip_id = clip_id_for(c / cfg.clips_per_layout, c);
    e.seed = Rng::derive(seed, static_cast<std::uint64_t>(c));
    e.split = split[c];
    e.action = describe(src.action, src.scene);
    e.frames = cfg.frames;
    e.size = cfg.size;

    const fs::path dir = base / e.clip_id;
    fs::create_directories(dir / "ego");
    fs::create_directories(dir / "exo");
    std::string traj = "frame,x,y,theta\n";
    for (int t = 0; t < cfg.frames; ++t) {
      const Pose& p = src.trajectory[t];
      write_ppm((dir / "exo" / frame_name(t)).string(), render_exo(src.scene, p));
      write_ppm((dir / "ego" / frame_name(t)).string(), render_ego(src.scene, p));
      traj += std::to_string(t) + "," + fmt17(p.x) + "," + fmt17(p.y) + "," + fmt17(p.theta) + "\n";
    }
    write_text(dir / "traj.csv", traj);
    write_text(dir / "desc.txt", e.action + "\n");
    std::string layout = "color\tshape\tcx\tcy\thx\thy\n";
    for (const auto& o : src.scene.objects) {
      layout += std::to_string(o.color) + "\t" + std::to_string(static_cast<int>(o.shape)) + "\t" + fmt17(o.cx) +
                "\t" + fmt17(o.cy) + "\t" + fmt17(o.hx) + "\t" + fmt17(o.hy) + "\n";
    }
    write_text(dir / "layout.tsv", layout);
  });

  std::string manifest = "clip_id\tseed\tsplit\taction\tT\tS\n";
  for (const auto& e : entries) {
    manifest += e.clip_id + "\t" + std::to_string(e.seed) + "\t" + e.split + "\t" + e.action + "\t" +
                std::to_string(e.frames) + "\t" + std::to_string(e.size) + "\n";
  }
  write_text(base / "manifest.tsv", manifest);
  std::string vt = "token\tid\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) vt += vocab[i] + "\t" + std::to_string(i) + "\n";
  write_text(base / "vocab.tsv", vt);
  return load_dataset(root);
}

Dataset load_dataset(const std::string& root) {
  Dataset ds;
  ds.root = root;
  const fs::path base(root);
  std::ifstream man(base / "manifest.tsv");
  if (!man) throw DataError("missing manifest.tsv in " + root);
  std::string line;
  std::getline(man, line);
  if (split_tabs(line) != std::vector<std::string>{"clip_id", "seed", "split", "action", "T", "S"})
    throw DataError("manifest header mismatch in " + root);
  std::set<std::string> ids;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 6) throw DataError("manifest row has " + std::to_string(f.size()) + " fields: " + line);
    ManifestEntry e;
    try {
      e.clip_id = f[0];
      e.seed = std::stoull(f[1]);
      e.split = f[2];
      e.action = f[3];
      e.frames = std::stoi(f[4]);
      e.size = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw DataError("malformed manifest row: " + line);
    }
    if (!ids.insert(e.clip_id).second) throw DataError("duplicate clip id " + e.clip_id);
    ds.entries.push_back(e);
  }
  std::set<std::string> dirs;
  for (const auto& de : fs::directory_iterator(base))
    if (de.is_directory()) dirs.insert(de.path().filename().string());
  if (dirs != ids) {
    std::string missing, extra;
    for (const auto& id : ids)
      if (!dirs.count(id)) missing += " " + id;
    for (const auto& d : dirs)
      if (!ids.count(d)) extra += " " + d;
    throw DataError("manifest and clip directories disagree; missing:" + (missing.empty() ? " none" : missing) +
                    "; unlisted:" + (extra.empty() ? " none" : extra));
  }

  std::ifstream voc(base / "vocab.tsv");
  if (!voc) throw DataError("missing vocab.tsv in " + root);
  std::getline(voc, line);
  while (std::getline(voc, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 2) throw DataError("malformed vocab row: " + line);
    const int id = std::stoi(f[1]);
    ds.vocab[f[0]] = id;
    if (static_cast<int>(ds.tokens.size()) <= id) ds.tokens.resize(id + 1);
    ds.tokens[id] = f[0];
  }
  for (const auto& e : ds.entries)
    for (const auto& tok : split_ws(e.action))
      if (!ds.vocab.count(tok)) throw DataError("token '" + tok + "' of " + e.clip_id + " missing from vocabulary");
  return ds;
}

Clip load_clip(const Dataset& ds, const ManifestEntry& entry) {
  const fs::path dir = fs::path(ds.root) / entry.clip_id;
  Clip clip;
  clip.id = entry.clip_id;
  clip.seed = entry.seed;
  clip.split = entry.split;
  clip.action = entry.action;
  clip.layout = layout_of(entry.clip_id);
  clip.frames = entry.frames;
  clip.size = entry.size;
  const Index T = entry.frames, S = entry.size;
  clip.ego = Tensorf::zeros({T, 3, S, S});
  clip.exo = Tensorf::zeros({T, 3, S, S});
  for (int view = 0; view < 2; ++view) {
    Tensorf& dst = view == 0 ? clip.ego : clip.exo;
    for (Index t = 0; t < T; ++t) {
      const Image img = read_ppm((dir / (view == 0 ? "ego" : "exo") / frame_name(static_cast<int>(t))).string());
      if (img.width != S || img.height != S)
        throw DataError(entry.clip_id + ": frame " + std::to_string(t) + " is not " + std::to_string(S) + "x" +
                        std::to_string(S));
      std::copy(img.data.begin(), img.data.end(), dst.value_mut().data() + t * 3 * S * S);
    }
  }
  std::ifstream tr(dir / "traj.csv");
  if (!tr) throw DataError(entry.clip_id + ": missing traj.csv");
  std::string line;
  std::getline(tr, line);
  while (std::getline(tr, line)) {
    if (line.empty()) continue;
    Pose p;
    int frame = -1;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &frame, &p.x, &p.y, &p.theta) != 4 ||
        frame != static_cast<int>(clip.trajectory.size()))
      throw DataError(entry.clip_id + ": malformed trajectory row: " + line);
    clip.trajectory.push_back(p);
  }
  if (static_cast<Index>(clip.trajectory.size()) != T)
    throw DataError(entry.clip_id + ": trajectory length " + std::to_string(clip.trajectory.size()) + " != T");
  std::ifstream desc(dir / "desc.txt");
  if (!desc) throw DataError(entry.clip_id + ": missing desc.txt");
  std::getline(desc, line);
  clip.description = split_ws(line);
  for (const auto& tok : clip.description) {
    auto it = ds.vocab.find(tok);
    if (it == ds.vocab.end()) throw DataError(entry.clip_id + ": token '" + tok + "' not in vocabulary");
    clip.token_ids.push_back(it->second);
  }
  return clip;
}

SceneState load_scene(const Dataset& ds, const ManifestEntry& entry) {
  std::ifstream in(fs::path(ds.root) / entry.clip_id / "layout.tsv");
  if (!in) throw DataError(entry.clip_id + ": missing layout.tsv");
  SceneState scene;
  scene.size = entry.size;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 6) throw DataError(entry.clip_id + ": malformed layout row");
    SceneObject o;
    o.color = std::stoi(f[0]);
    o.shape = shape_from_index(std::stoi(f[1]));
    o.cx = std::stod(f[2]);
    o.cy = std::stod(f[3]);
    o.hx = std::stod(f[4]);
    o.hy = std::stod(f[5]);
    scene.objects.push_back(o);
  }
  return scene;
}

}  // namespace ide
