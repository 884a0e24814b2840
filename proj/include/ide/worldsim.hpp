// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ide/image_io.hpp"
#include "ide/rng.hpp"
#include "ide/tensor.hpp"

namespace ide {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Pose {
  double x = 0.0;  // pixels, pixel centers at i + 0.5
  double y = 0.0;
  double theta = 0.0;  // radians, 0 faces +x (image columns)
};

enum class ShapeKind { Box, Bar, Disc, Triangle, Diamond, Cross };

struct SceneObject {
  int color = 0;
  ShapeKind shape = ShapeKind::Box;
  double cx = 0.0, cy = 0.0;
  double hx = 0.0, hy = 0.0;  // half extents of the axis-aligned box
};

struct SceneState {
  int size = 64;
  std::vector<SceneObject> objects;
};

enum class Verb { Approach, Retreat, Circle, Pass };

struct ActionSpec {
  Verb verb = Verb::Approach;
  int target = 0;  // index into SceneState::objects
};

struct WorldConfig {
  int size = 64;
  int frames = 8;
  int clips = 256;
  int clips_per_layout = 4;
  int min_objects = 2;
  int max_objects = 4;
  double v_max = 3.0;  // pixels per frame at size 64, scaled with size
  std::string split_rule = "seen";  // seen | unseen
  double train_fraction = 0.8;

  void validate() const;
};

// Vocabulary: verbs, colors, shapes.
const std::vector<std::string>& verb_names();
const std::vector<std::string>& color_names();
const std::vector<std::string>& shape_names();
std::vector<std::string> default_vocabulary();
std::string describe(const ActionSpec& action, const SceneState& scene);

// Agent sprite geometry for a room of the given size.
struct AgentStyle {
  double radius;
  double soft;  // width of the anti-aliased rim
  double support() const { return radius + 0.5 * soft; }
  static AgentStyle for_size(int size);
};

// Places 1 to 6 non-overlapping objects.
SceneState spawn_layout(const WorldConfig& cfg, Rng& rng);

// Pose sequence of length cfg.frames. Throws DataError when no valid spawn is
// found within the retry budget.
std::vector<Pose> script_action(const ActionSpec& action, const SceneState& scene, const WorldConfig& cfg, Rng& rng);

// True when every pose keeps the agent inside the room and clear of objects.
bool trajectory_valid(const std::vector<Pose>& traj, const SceneState& scene);

// Floor and objects only.
Image render_layer(const SceneState& scene);
// Overhead view: floor, objects, agent disc with heading wedge.
Image render_exo(const SceneState& scene, const Pose& pose, bool wedge = true);
// Forward-facing window of the agent-free layer, S x S pixels starting just
// ahead of the agent's rim; image columns point forward, rows to the right.
Image render_ego(const SceneState& scene, const Pose& pose);
// Offset from the agent center to the first ego column, in pixels.
double ego_forward_offset(int size);

// Agent coverage in [0, 1] at a continuous point.
double agent_alpha(const Pose& pose, int size, double px, double py);
// Inclusive pixel box [x0, x1] x [y0, y1] covering the agent's support.
struct PixelBox {
  int x0, y0, x1, y1;
};
PixelBox agent_bbox(const Pose& pose, int size);

// Backward flow from frame j to frame i (normalized units, [2 x S x S]) and
// binary occlusion [1 x S x S]: warp(frame_i, flow) reproduces frame_j where
// occlusion is 1.
struct FlowGroundTruth {
  Tensorf flow;
  Tensorf occlusion;
};
FlowGroundTruth gt_backward_flow(const SceneState& scene, const Pose& pose_i, const Pose& pose_j);
// Mean absolute difference between warp(frame_i, gt.flow) and frame_j over
// the pixels (and channels) where gt.occlusion is 1. Frames are [3 x S x S].
double masked_warp_error(const Tensorf& frame_i, const Tensorf& frame_j, const FlowGroundTruth& gt);

struct Clip {
  std::string id;
  std::uint64_t seed = 0;
  std::string split;
  std::string action;
  int layout = 0;
  int frames = 0;
  int size = 0;
  Tensorf ego;  // [T x 3 x S x S]
  Tensorf exo;
  std::vector<Pose> trajectory;
  std::vector<std::string> description;
  std::vector<int> token_ids;
};

struct ManifestEntry {
  std::string clip_id;
  std::uint64_t seed = 0;
  std::string split;
  std::string action;
  int frames = 0;
  int size = 0;
};

struct Dataset {
  std::string root;
  std::vector<ManifestEntry> entries;
  std::map<std::string, int> vocab;
  std::vector<std::string> tokens;  // id -> token
};

// Layout index encoded in a clip id ("l003_c0012" -> 3).
int layout_of(const std::string& clip_id);
bool is_train_split(const std::string& split);

// Regenerates a clip fully in memory (frames quantized to 8 bits, as written).
struct ClipSource {
  SceneState scene;
  ActionSpec action;
  std::vector<Pose> trajectory;
};
ClipSource simulate_clip(const WorldConfig& cfg, std::uint64_t dataset_seed, int clip_index);

Dataset generate_dataset(const WorldConfig& cfg, std::uint64_t seed, const std::string& root);
Dataset load_dataset(const std::string& root);
Clip load_clip(const Dataset& ds, const ManifestEntry& entry);
// Layout description stored next to the frames (layout.tsv).
SceneState load_scene(const Dataset& ds, const ManifestEntry& entry);

// Converts between the planar image type and a [3 x H x W] tensor.
Tensorf image_to_tensor(const Image& img);
Image tensor_to_image(const Tensorf& t, Index frame = -1);

}  // namespace ide
