// Copyright 2026 The ego2exo Authors
// SPDX-License-Identifier: Apache-2.0

#include "ide/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ide/image_io.hpp"

namespace ide {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(const std::string& key, T RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

Field text(const std::string& key, std::string RunConfig::*member) {
  return {key, [member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

Field flag(const std::string& key, bool RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      text("data_dir", &RunConfig::data_dir),
      text("out_dir", &RunConfig::out_dir),
      number("seed", &RunConfig::seed),
      number("stage", &RunConfig::stage),
      number("iterations", &RunConfig::iterations),
      number("batch", &RunConfig::batch),
      number("lr", &RunConfig::lr),
      number("frames", &RunConfig::frames),
      number("size", &RunConfig::size),
      number("clips", &RunConfig::clips),
      number("clips_per_layout", &RunConfig::clips_per_layout),
      number("min_objects", &RunConfig::min_objects),
      number("max_objects", &RunConfig::max_objects),
      number("v_max", &RunConfig::v_max),
      text("split_rule", &RunConfig::split_rule),
      number("train_fraction", &RunConfig::train_fraction),
      number("c_lat", &RunConfig::c_lat),
      number("lfae_width", &RunConfig::lfae_width),
      number("flow_scale", &RunConfig::flow_scale),
      number("lambda", &RunConfig::lambda),
      number("steps", &RunConfig::steps),
      number("beta_min", &RunConfig::beta_min),
      number("beta_max", &RunConfig::beta_max),
      text("dm_loss", &RunConfig::dm_loss),
      text("fuse_mode", &RunConfig::fuse_mode),
      {"disable",
       [](RunConfig& c, const std::string& v) {
         c.disable.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           item = trim(item);
           if (!item.empty()) c.disable.push_back(item);
         }
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.disable.size(); ++i) s += (i ? "," : "") + c.disable[i];
         return s;
       }},
      number("cond_width", &RunConfig::cond_width),
      number("heads", &RunConfig::heads),
      number("patch", &RunConfig::patch),
      number("text_dim", &RunConfig::text_dim),
      number("unet_base", &RunConfig::unet_base),
      flag("stop_ego_grad", &RunConfig::stop_ego_grad),
      number("log_every", &RunConfig::log_every),
      number("ckpt_every", &RunConfig::ckpt_every),
      number("eval_clips", &RunConfig::eval_clips),
  };
  return f;
}

}  // namespace

bool RunConfig::disabled(const std::string& module) const {
  return std::find(disable.begin(), disable.end(), module) != disable.end();
}

void RunConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (iterations < 0 || batch < 1) throw ConfigError("iterations must be >= 0 and batch >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (log_every < 1 || ckpt_every < 0 || eval_clips < 2) throw ConfigError("log_every >= 1, ckpt_every >= 0, eval_clips >= 2");
  for (const auto& m : disable)
    if (m != "cfpm" && m != "adu" && m != "ttm") throw ConfigError("disable: unknown module '" + m + "' (cfpm, adu, ttm)");
  try {
    world().validate();
    lfae().validate();
    condition(1).validate();
    denoiser().validate();
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  parse_dm_loss(dm_loss);
  schedule();
}

WorldConfig RunConfig::world() const {
  WorldConfig w;
  w.size = size;
  w.frames = frames;
  w.clips = clips;
  w.clips_per_layout = clips_per_layout;
  w.min_objects = min_objects;
  w.max_objects = max_objects;
  w.v_max = v_max;
  w.split_rule = split_rule;
  w.train_fraction = train_fraction;
  return w;
}

LfaeConfig RunConfig::lfae() const {
  LfaeConfig l;
  l.size = size;
  l.c_lat = c_lat;
  l.width = lfae_width;
  l.flow_scale = flow_scale;
  l.lambda = lambda;
  return l;
}

ConditionConfig RunConfig::condition(int vocab) const {
  ConditionConfig c;
  c.size = size;
  c.patch = patch;
  c.width = cond_width;
  c.heads = heads;
  c.frames = frames;
  c.vocab = vocab;
  c.text_dim = text_dim;
  c.fuse_mode = parse_fuse_mode(fuse_mode);
  c.use_cfpm = !disabled("cfpm");
  c.use_adu = !disabled("adu");
  c.use_ttm = !disabled("ttm");
  c.stop_ego_grad = stop_ego_grad;
  return c;
}

DenoiserConfig RunConfig::denoiser() const {
  DenoiserConfig d;
  d.latent = size / 4;
  d.c_lat = c_lat;
  d.frames = frames;
  d.cond_width = cond_width;
  d.base = unet_base;
  d.heads = heads;
  return d;
}

NoiseSchedule RunConfig::schedule() const { return make_schedule(steps, beta_min, beta_max); }

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(number) + ")");
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace ide
