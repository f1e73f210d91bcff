#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sebvs/common.hpp"
#include "sebvs/dataset.hpp"
#include "sebvs/eval.hpp"
#include "sebvs/recorder.hpp"
#include "sebvs/trainer.hpp"
#include "sebvs/vit.hpp"

namespace sebvs::cfg {

// Every tunable as "section.key" = default. Files and overrides may only set
// keys listed here.
inline const std::vector<std::pair<std::string, std::string>>& registry() {
  static const std::vector<std::pair<std::string, std::string>> keys{
      {"sensor.res", "128"},
      {"sensor.control_hz", "20"},
      {"sensor.clip", "8"},

      {"emulator.pos_thres", "0.3"},
      {"emulator.neg_thres", "0.3"},
      {"emulator.sigma_thres", "0.09"},
      {"emulator.cutoff_hz", "15"},
      {"emulator.leak_rate_hz", "0"},
      {"emulator.downsample", "0.5"},
      {"emulator.blur", "true"},
      {"emulator.log_eps", "0.001"},
      {"emulator.seed", "0"},

      {"emulate.fps", "30"},

      {"nav.target_size", "0.3"},
      {"nav.standoff", "1.2"},
      {"nav.target_speed", "0.3"},
      {"nav.waypoints", "6"},
      {"nav.segment_min", "1"},
      {"nav.segment_max", "2.5"},
      {"nav.turn_max_deg", "75"},
      {"nav.dwell_max", "1"},
      {"nav.world_half_extent", "6"},
      {"nav.checker_size", "0.5"},
      {"nav.hfov_deg", "90"},
      {"nav.fog_distance", "8"},

      {"expert.yaw_kp", "0.8"},
      {"expert.yaw_ki", "0.05"},
      {"expert.yaw_kd", "0.1"},
      {"expert.range_kp", "0.8"},
      {"expert.range_ki", "0.05"},
      {"expert.range_kd", "0.1"},
      {"expert.i_clamp", "1"},
      {"expert.v_max", "1"},
      {"expert.omega_max", "2"},
      {"expert.desired_bbox_px", "16"},
      {"expert.omega_search", "1"},
      {"expert.pixel_noise", "0"},

      {"arm.x_min", "0.15"},
      {"arm.x_max", "0.55"},
      {"arm.y_min", "-0.15"},
      {"arm.y_max", "0.55"},
      {"arm.yaw_max_deg", "45"},
      {"arm.cube_side", "0.06"},
      {"arm.min_separation", "0.1"},
      {"arm.belt_speed", "0.05"},
      {"arm.moving_probability", "0.5"},
      {"arm.multi_min", "2"},
      {"arm.multi_max", "3"},
      {"arm.table_height", "0.05"},
      {"arm.cam_res", "128"},
      {"arm.cam_fx", "102.4"},
      {"arm.cam_fy", "102.4"},
      {"arm.cam_cx", "64"},
      {"arm.cam_cy", "64"},
      {"arm.cam_x", "0.35"},
      {"arm.cam_y", "0.2"},
      {"arm.cam_z", "0.75"},
      {"arm.cam_roll", "3.14159265358979"},
      {"arm.cam_pitch", "0"},
      {"arm.cam_yaw", "0"},
      {"arm.workspace_y_limit", "0.449"},
      {"arm.hover_height", "0.15"},
      {"arm.home_x", "0.35"},
      {"arm.home_y", "0.2"},
      {"arm.home_z", "0.45"},
      {"arm.home_roll", "3.14159265358979"},
      {"arm.home_pitch", "0"},
      {"arm.home_yaw", "0"},

      {"data.nav_horizon_s", "30"},
      {"data.nav_exec_noise_v", "0.3"},
      {"data.nav_exec_noise_omega", "1.5"},
      {"data.arm_episode_steps", "10"},
      {"data.arm_scenario", "mixed"},

      {"policy.patch", "16"},
      {"policy.embed_dim", "64"},
      {"policy.heads", "4"},
      {"policy.ffn_dim", "256"},
      {"policy.depth", "1"},
      {"policy.dropout", "0.1"},
      {"policy.activation", "gelu"},

      {"train.nav_lr", "0.0002"},
      {"train.arm_lr", "0.0001"},
      {"train.weight_decay", "0.0001"},
      {"train.batch", "32"},
      {"train.epochs", "10"},
      {"train.patience", "2"},
      {"train.nav_loss", "mse"},
      {"train.arm_loss", "smooth_l1"},
      {"train.nav_plateau", "false"},
      {"train.arm_plateau", "true"},
      {"train.plateau_factor", "0.5"},
      {"train.plateau_threshold", "0.0001"},
      {"train.plateau_patience", "2"},
      {"train.val_fraction", "0.1"},
      {"train.arm_stride", "1"},

      {"eval.nav_horizon_s", "15"},
      {"eval.success_radius_px", "40"},
      {"eval.lost_timeout_s", "3"},
      {"eval.arm_scenario", "single"},
      {"eval.accuracy_mm", "50"},
      {"eval.success_mm", "20"},
      {"eval.success_deg", "10"},
  };
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class RunConfig {
public:
  RunConfig() {
    for (const auto& [k, v] : registry()) values_[k] = v;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = trim(value);
  }

  /// "section.key=value" as given on the command line.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
    set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }

  /// Sectioned key = value text. '#' and ';' start comments.
  void load_text(const std::string& text, const std::string& origin = "<config>") {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string full = section.empty() ? key : section + "." + key;
      if (!has(full)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown config key '" + full + "'");
      set(full, line.substr(eq + 1));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    load_text(ss.str(), path);
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
  }

  long long get_int(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      if (!s.empty() && s.front() == '-') throw std::invalid_argument(s);
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true|false, got '" + s + "'");
  }

  /// Fully resolved config, grouped by section, keys sorted.
  std::string snapshot() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      const std::string s = k.substr(0, dot);
      if (s != section) {
        if (!section.empty()) os << "\n";
        os << "[" << s << "]\n";
        section = s;
      }
      os << k.substr(dot + 1) << " = " << v << "\n";
    }
    return os.str();
  }

  std::uint64_t digest() const {
    const auto s = snapshot();
    return fnv1a64(s);
  }

private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views

inline dvs::EmulatorConfig emulator(const RunConfig& c) {
  dvs::EmulatorConfig e;
  e.pos_thres = c.get_double("emulator.pos_thres");
  e.neg_thres = c.get_double("emulator.neg_thres");
  e.sigma_thres = c.get_double("emulator.sigma_thres");
  e.cutoff_hz = c.get_double("emulator.cutoff_hz");
  e.leak_rate_hz = c.get_double("emulator.leak_rate_hz");
  e.downsample = c.get_double("emulator.downsample");
  e.blur = c.get_bool("emulator.blur");
  e.log_eps = c.get_double("emulator.log_eps");
  e.seed = c.get_u64("emulator.seed");
  e.validate();
  return e;
}

inline sim::NavSceneConfig nav_scene(const RunConfig& c) {
  sim::NavSceneConfig s;
  s.target_size = c.get_double("nav.target_size");
  s.standoff = c.get_double("nav.standoff");
  s.target_speed = c.get_double("nav.target_speed");
  s.waypoints = static_cast<int>(c.get_int("nav.waypoints"));
  s.segment_min = c.get_double("nav.segment_min");
  s.segment_max = c.get_double("nav.segment_max");
  s.turn_max_deg = c.get_double("nav.turn_max_deg");
  s.dwell_max = c.get_double("nav.dwell_max");
  s.world_half_extent = c.get_double("nav.world_half_extent");
  s.checker_size = c.get_double("nav.checker_size");
  s.hfov_deg = c.get_double("nav.hfov_deg");
  s.fog_distance = c.get_double("nav.fog_distance");
  return s;
}

inline expert::ExpertNav expert_nav(const RunConfig& c) {
  expert::ExpertNav e;
  e.yaw_axis.kp = c.get_double("expert.yaw_kp");
  e.yaw_axis.ki = c.get_double("expert.yaw_ki");
  e.yaw_axis.kd = c.get_double("expert.yaw_kd");
  e.range_axis.kp = c.get_double("expert.range_kp");
  e.range_axis.ki = c.get_double("expert.range_ki");
  e.range_axis.kd = c.get_double("expert.range_kd");
  e.yaw_axis.i_clamp = e.range_axis.i_clamp = c.get_double("expert.i_clamp");
  e.v_max = c.get_double("expert.v_max");
  e.omega_max = c.get_double("expert.omega_max");
  e.desired_bbox_px = c.get_double("expert.desired_bbox_px");
  e.omega_search = c.get_double("expert.omega_search");
  e.pixel_noise = c.get_double("expert.pixel_noise");
  if (!(e.v_max > 0 && e.omega_max > 0)) throw ConfigError("expert.v_max and expert.omega_max must be > 0");
  if (!(e.desired_bbox_px > 0)) throw ConfigError("expert.desired_bbox_px must be > 0");
  if (!(e.yaw_axis.i_clamp >= 0)) throw ConfigError("expert.i_clamp must be >= 0");
  return e;
}

inline rec::NavRecordConfig nav_run(const RunConfig& c, bool for_eval) {
  rec::NavRecordConfig r;
  r.res = static_cast<int>(c.get_int("sensor.res"));
  r.control_hz = c.get_double("sensor.control_hz");
  r.horizon_s = c.get_double(for_eval ? "eval.nav_horizon_s" : "data.nav_horizon_s");
  if (!for_eval) {
    r.exec_noise_v = c.get_double("data.nav_exec_noise_v");
    r.exec_noise_omega = c.get_double("data.nav_exec_noise_omega");
  }
  r.scene = nav_scene(c);
  r.emulator = emulator(c);
  r.expert = expert_nav(c);
  r.validate();
  return r;
}

inline expert::PregraspConfig pregrasp(const RunConfig& c) {
  expert::PregraspConfig p;
  p.workspace_y_limit = c.get_double("arm.workspace_y_limit");
  p.hover_height = c.get_double("arm.hover_height");
  p.home_pose = sim::Pose6D{c.get_double("arm.home_x"),    c.get_double("arm.home_y"),
                            c.get_double("arm.home_z"),    c.get_double("arm.home_roll"),
                            c.get_double("arm.home_pitch"), c.get_double("arm.home_yaw")}
                    .wrapped();
  return p;
}

inline sim::ArmSceneConfig arm_scene(const RunConfig& c) {
  sim::ArmSceneConfig s;
  s.x_min = c.get_double("arm.x_min");
  s.x_max = c.get_double("arm.x_max");
  s.y_min = c.get_double("arm.y_min");
  s.y_max = c.get_double("arm.y_max");
  if (!(s.x_max > s.x_min && s.y_max > s.y_min)) throw ConfigError("arm workspace box is empty");
  s.yaw_max_deg = c.get_double("arm.yaw_max_deg");
  s.cube_side = c.get_double("arm.cube_side");
  s.min_separation = c.get_double("arm.min_separation");
  s.belt_speed = c.get_double("arm.belt_speed");
  s.moving_probability = c.get_double("arm.moving_probability");
  if (!(s.moving_probability >= 0 && s.moving_probability <= 1))
    throw ConfigError("arm.moving_probability must be in [0,1]");
  s.multi_min = static_cast<int>(c.get_int("arm.multi_min"));
  s.multi_max = static_cast<int>(c.get_int("arm.multi_max"));
  s.table_height = c.get_double("arm.table_height");
  auto& cam = s.camera;
  cam.width = cam.height = static_cast<int>(c.get_int("arm.cam_res"));
  if (cam.width <= 0) throw ConfigError("arm.cam_res must be > 0");
  cam.fx = c.get_double("arm.cam_fx");
  cam.fy = c.get_double("arm.cam_fy");
  cam.cx = c.get_double("arm.cam_cx");
  cam.cy = c.get_double("arm.cam_cy");
  cam.pose = sim::Pose6D{c.get_double("arm.cam_x"),    c.get_double("arm.cam_y"),     c.get_double("arm.cam_z"),
                         c.get_double("arm.cam_roll"), c.get_double("arm.cam_pitch"), c.get_double("arm.cam_yaw")};
  cam.validate();
  return s;
}

inline rec::ArmRecordConfig arm_run(const RunConfig& c) {
  rec::ArmRecordConfig r;
  r.res = static_cast<int>(c.get_int("sensor.res"));
  r.control_hz = c.get_double("sensor.control_hz");
  r.episode_steps = static_cast<int>(c.get_int("data.arm_episode_steps"));
  r.scenario = rec::parse_arm_mix(c.get("data.arm_scenario"));
  r.scene = arm_scene(c);
  r.emulator = emulator(c);
  r.oracle = pregrasp(c);
  r.validate();
  return r;
}

inline int clip(const RunConfig& c) {
  const auto v = c.get_int("sensor.clip");
  if (v < 1) throw ConfigError("sensor.clip must be >= 1");
  return static_cast<int>(v);
}

inline eval::NavEvalConfig nav_eval(const RunConfig& c) {
  eval::NavEvalConfig e;
  e.run = nav_run(c, true);
  e.success_radius_px = c.get_double("eval.success_radius_px");
  e.lost_timeout_s = c.get_double("eval.lost_timeout_s");
  e.clip = clip(c);
  return e;
}

inline sim::ArmScenario parse_scenario(const std::string& s) {
  if (s == "single") return sim::ArmScenario::Single;
  if (s == "multi") return sim::ArmScenario::Multi;
  throw ConfigError("unknown arm scenario '" + s + "' (expected single|multi)");
}

inline eval::ArmEvalConfig arm_eval(const RunConfig& c) {
  eval::ArmEvalConfig e;
  e.run = arm_run(c);
  e.accuracy_mm = c.get_double("eval.accuracy_mm");
  e.success_mm = c.get_double("eval.success_mm");
  e.success_deg = c.get_double("eval.success_deg");
  e.clip = clip(c);
  return e;
}

inline vit::PolicyConfig policy(const RunConfig& c, data::Task task, vit::Modality modality, std::uint64_t seed) {
  vit::PolicyConfig p;
  p.input_res = static_cast<int>(c.get_int("sensor.res"));
  p.patch = static_cast<int>(c.get_int("policy.patch"));
  p.embed_dim = static_cast<int>(c.get_int("policy.embed_dim"));
  p.heads = static_cast<int>(c.get_int("policy.heads"));
  p.ffn_dim = static_cast<int>(c.get_int("policy.ffn_dim"));
  p.depth = static_cast<int>(c.get_int("policy.depth"));
  p.dropout_p = c.get_double("policy.dropout");
  p.activation = vit::parse_activation(c.get("policy.activation"));
  p.modality = modality;
  p.head = task == data::Task::Nav ? vit::Head::Nav : vit::Head::Arm;
  p.seed = seed;
  p.validate();
  return p;
}

inline train::TrainConfig training(const RunConfig& c, data::Task task, std::uint64_t seed) {
  const std::string t = data::task_name(task);
  train::TrainConfig tc;
  tc.lr = c.get_double("train." + t + "_lr");
  tc.weight_decay = c.get_double("train.weight_decay");
  tc.batch = static_cast<int>(c.get_int("train.batch"));
  tc.epochs = static_cast<int>(c.get_int("train.epochs"));
  tc.patience_early = static_cast<int>(c.get_int("train.patience"));
  tc.loss = train::parse_loss(c.get("train." + t + "_loss"));
  tc.plateau = c.get_bool("train." + t + "_plateau");
  tc.plateau_factor = c.get_double("train.plateau_factor");
  tc.plateau_threshold = c.get_double("train.plateau_threshold");
  tc.plateau_patience = static_cast<int>(c.get_int("train.plateau_patience"));
  tc.val_fraction = c.get_double("train.val_fraction");
  tc.seed = seed;
  tc.validate();
  return tc;
}

inline int arm_stride(const RunConfig& c) {
  const auto v = c.get_int("train.arm_stride");
  if (v < 1) throw ConfigError("train.arm_stride must be >= 1");
  return static_cast<int>(v);
}

/// Nav: symmetric speed limits. Arm: the workspace box for x and y, the span
/// between hover and home height for z, and [-pi, pi] for the angles.
inline data::ActionNormalizer normalizer(const RunConfig& c, data::Task task) {
  if (task == data::Task::Nav)
    return data::ActionNormalizer::nav(c.get_double("expert.v_max"), c.get_double("expert.omega_max"));
  const auto scene = arm_scene(c);
  const auto pg = pregrasp(c);
  const double hover_z = scene.table_height + pg.hover_height;
  double z_lo = std::min(hover_z, pg.home_pose.z), z_hi = std::max(hover_z, pg.home_pose.z);
  if (z_hi - z_lo < 0.1) {
    z_lo -= 0.05;
    z_hi += 0.05;
  }
  return data::ActionNormalizer::arm({std::min(scene.x_min, pg.home_pose.x), std::min(scene.y_min, pg.home_pose.y), z_lo},
                                     {std::max(scene.x_max, pg.home_pose.x), std::max(scene.y_max, pg.home_pose.y), z_hi});
}

}  // namespace sebvs::cfg
