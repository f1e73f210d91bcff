#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sebvs/dataset.hpp"
#include "sebvs/dvs.hpp"
#include "sebvs/event_frame.hpp"
#include "sebvs/expert.hpp"
#include "sebvs/image.hpp"
#include "sebvs/worldsim.hpp"

namespace sebvs::rec {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL * (stream + 1)) ^ (0xc2b2ae3d27d4eb4fULL * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Rendered frame in, event frame aligned to the frame grid out. The first
// frame only primes the emulator and yields an empty event frame.
class EventSensor {
public:
  EventSensor(const dvs::EmulatorConfig& cfg, int res)
      : res_(res), map_(ScaleOffset::from_downsample(cfg.downsample)),
        state_(dvs::init_emulator(cfg, res, res)) {}

  EventFrame observe(const RgbImage& frame, std::int64_t t_us) {
    if (frame.width != res_ || frame.height != res_) throw InputError("sensor frame size differs from configured res");
    const bool first = !state_.initialized;
    const std::int64_t t_prev = state_.last_t;
    const auto batch = dvs::emit_events(state_, to_float(frame), t_us);
    if (first) {
      EventFrame ef;
      ef.width = res_;
      ef.height = res_;
      ef.on_counts.assign(std::size_t(res_) * res_, 0);
      ef.off_counts.assign(std::size_t(res_) * res_, 0);
      ef.t_start = t_us;
      ef.t_end = t_us;
      return ef;
    }
    return accumulate(batch, t_prev, t_us, map_, res_, res_);
  }

  const ScaleOffset& mapping() const { return map_; }

private:
  int res_;
  ScaleOffset map_;
  dvs::EmulatorState state_;
};

struct NavRecordConfig {
  int res = 128;
  double control_hz = 20.0;
  double horizon_s = 15.0;
  // Perturbation added to the executed command only; the recorded label stays
  // the clean expert command.
  double exec_noise_v = 0.0;
  double exec_noise_omega = 0.0;
  sim::NavSceneConfig scene;
  dvs::EmulatorConfig emulator;
  expert::ExpertNav expert;

  double dt() const { return 1.0 / control_hz; }
  std::int64_t dt_us() const { return std::llround(1e6 / control_hz); }
  int steps() const { return static_cast<int>(std::lround(horizon_s * control_hz)); }
  void validate() const {
    if (res <= 0 || res % 16 != 0) throw ConfigError("sensor.res must be a positive multiple of 16");
    if (!(control_hz > 0)) throw ConfigError("sensor.control_hz must be > 0");
    if (!(horizon_s > 0)) throw ConfigError("nav.horizon_s must be > 0");
    if (!(exec_noise_v >= 0 && exec_noise_omega >= 0)) throw ConfigError("nav exec noise must be >= 0");
    emulator.validate();
  }
};

inline data::DatasetHeader make_header(data::Task task, int res, std::int64_t dt_us, const ScaleOffset& so,
                                       std::uint64_t digest) {
  data::DatasetHeader h;
  h.task = task;
  h.height = static_cast<std::uint32_t>(res);
  h.width = static_cast<std::uint32_t>(res);
  h.action_dim = static_cast<std::uint32_t>(data::default_action_dim(task));
  h.control_dt_us = static_cast<std::uint64_t>(dt_us);
  h.scale_offset = so;
  h.config_digest = digest;
  return h;
}

inline data::EpisodeRecord make_record(std::int64_t t, const RgbImage& rgb, const EventFrame& ef) {
  data::EpisodeRecord r;
  r.t = t;
  r.rgb = rgb;
  data::saturate_counts(ef.on_counts, r.ev_on);
  data::saturate_counts(ef.off_counts, r.ev_off);
  return r;
}

/// One expert-driven navigation episode.
inline data::Episode record_nav_episode(const NavRecordConfig& cfg, std::uint64_t seed, std::uint64_t digest = 0) {
  cfg.validate();
  auto scene = sim::make_nav_scene(cfg.scene, derive_seed(seed, 1));
  auto emu = cfg.emulator;
  emu.seed = derive_seed(seed, 2);
  EventSensor sensor(emu, cfg.res);
  auto exp = cfg.expert;
  exp.yaw_axis.reset();
  exp.range_axis.reset();
  exp.rng.seed(derive_seed(seed, 3));
  std::mt19937_64 noise_rng(derive_seed(seed, 4));
  std::normal_distribution<double> nv(0.0, cfg.exec_noise_v > 0 ? cfg.exec_noise_v : 1.0);
  std::normal_distribution<double> nw(0.0, cfg.exec_noise_omega > 0 ? cfg.exec_noise_omega : 1.0);

  data::Episode ep;
  ep.header = make_header(data::Task::Nav, cfg.res, cfg.dt_us(), sensor.mapping(), digest);
  const double dt = cfg.dt();
  for (int k = 0; k < cfg.steps(); ++k) {
    const std::int64_t t = k * cfg.dt_us();
    const auto nf = sim::render_nav(scene, cfg.res);
    const auto ef = sensor.observe(nf.frame, t);
    const auto cmd = expert::expert_nav_cmd(exp, nf.truth, dt);
    auto rec = make_record(t, nf.frame, ef);
    rec.action = {static_cast<float>(cmd.v), static_cast<float>(cmd.omega)};
    rec.aux = {static_cast<float>(nf.truth.centroid_x), static_cast<float>(nf.truth.centroid_y),
               static_cast<float>(nf.truth.visible ? nf.truth.bbox_width : 0.0)};
    ep.records.push_back(std::move(rec));

    sim::TwistCmd exec = cmd;
    if (cfg.exec_noise_v > 0) exec.v += nv(noise_rng);
    if (cfg.exec_noise_omega > 0) exec.omega += nw(noise_rng);
    exec = exec.clamped(exp.v_max, exp.omega_max);
    scene.robot = sim::step_unicycle(scene.robot, exec, dt);
    scene = sim::step_nav_scene(scene, dt);
  }
  ep.header.step_count = ep.records.size();
  return ep;
}

enum class ArmMix { Single, Multi, Mixed };

inline ArmMix parse_arm_mix(const std::string& s) {
  if (s == "single") return ArmMix::Single;
  if (s == "multi") return ArmMix::Multi;
  if (s == "mixed") return ArmMix::Mixed;
  throw ConfigError("unknown arm scenario '" + s + "' (expected single|multi|mixed)");
}

struct ArmRecordConfig {
  int res = 128;
  double control_hz = 20.0;
  int episode_steps = 10;
  ArmMix scenario = ArmMix::Mixed;
  sim::ArmSceneConfig scene;
  dvs::EmulatorConfig emulator;
  expert::PregraspConfig oracle;

  double dt() const { return 1.0 / control_hz; }
  std::int64_t dt_us() const { return std::llround(1e6 / control_hz); }
  void validate() const {
    if (res <= 0 || res % 16 != 0) throw ConfigError("sensor.res must be a positive multiple of 16");
    if (!(control_hz > 0)) throw ConfigError("sensor.control_hz must be > 0");
    if (episode_steps < 1) throw ConfigError("arm.episode_steps must be >= 1");
    emulator.validate();
    scene.camera.validate();
  }
};

inline sim::ArmScenario scenario_for(ArmMix mix, std::uint64_t episode) {
  if (mix == ArmMix::Single) return sim::ArmScenario::Single;
  if (mix == ArmMix::Multi) return sim::ArmScenario::Multi;
  return episode % 2 == 0 ? sim::ArmScenario::Single : sim::ArmScenario::Multi;
}

/// Pose of the object the oracle targets, or the home pose when it falls back.
inline sim::Pose6D selected_pose(const sim::ArmScene& scene, const expert::PregraspConfig& oracle) {
  std::vector<sim::Pose6D> poses;
  for (const auto& c : scene.cubes) poses.push_back(c.pose);
  const auto idx = expert::leftmost(poses);
  if (!idx || poses[*idx].y > oracle.workspace_y_limit) return oracle.home_pose;
  return poses[*idx];
}

/// One pre-grasp demonstration: the belt scene observed for episode_steps
/// control periods, each labelled with the oracle pose at that instant.
inline data::Episode record_arm_episode(const ArmRecordConfig& cfg, std::uint64_t seed, std::uint64_t episode_index,
                                        std::uint64_t digest = 0) {
  cfg.validate();
  auto scene_cfg = cfg.scene;
  scene_cfg.camera = cfg.scene.camera.rescaled(cfg.res);
  auto scene = sim::make_arm_scene(scene_cfg, scenario_for(cfg.scenario, episode_index), derive_seed(seed, 1));
  auto emu = cfg.emulator;
  emu.seed = derive_seed(seed, 2);
  EventSensor sensor(emu, cfg.res);

  data::Episode ep;
  ep.header = make_header(data::Task::Arm, cfg.res, cfg.dt_us(), sensor.mapping(), digest);
  const double dt = cfg.dt();
  for (int k = 0; k < cfg.episode_steps; ++k) {
    const std::int64_t t = k * cfg.dt_us();
    const auto af = sim::render_arm(scene, cfg.res);
    const auto ef = sensor.observe(af.frame, t);
    auto rec = make_record(t, af.frame, ef);
    const auto target = expert::pregrasp_oracle(scene, cfg.oracle).to_array();
    const auto sel = selected_pose(scene, cfg.oracle).to_array();
    rec.action.assign(target.begin(), target.end());
    rec.aux.assign(sel.begin(), sel.end());
    ep.records.push_back(std::move(rec));
    scene = sim::step_arm_scene(scene, dt);
  }
  ep.header.step_count = ep.records.size();
  return ep;
}

inline std::string episode_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%04zu.ebvs", index);
  return buf;
}

}  // namespace sebvs::rec
