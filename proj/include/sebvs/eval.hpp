#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sebvs/dataset.hpp"
#include "sebvs/recorder.hpp"
#include "sebvs/trainer.hpp"
#include "sebvs/vit.hpp"

namespace sebvs::eval {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  for (double x : v) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(v.size()));
  return r;
}

// ---------------------------------------------------------------------------
// Navigation

class NavController {
public:
  virtual ~NavController() = default;
  virtual void reset(std::uint64_t /*seed*/) {}
  virtual sim::TwistCmd act(const RgbImage& frame, const EventFrame& events, const sim::NavGroundTruth& truth,
                            double dt) = 0;
};

class ExpertController : public NavController {
public:
  explicit ExpertController(expert::ExpertNav proto) : proto_(std::move(proto)), exp_(proto_) {}
  void reset(std::uint64_t seed) override {
    exp_ = proto_;
    exp_.yaw_axis.reset();
    exp_.range_axis.reset();
    exp_.rng.seed(seed);
  }
  sim::TwistCmd act(const RgbImage&, const EventFrame&, const sim::NavGroundTruth& truth, double dt) override {
    return expert::expert_nav_cmd(exp_, truth, dt);
  }

private:
  expert::ExpertNav proto_;
  expert::ExpertNav exp_;
};

class ZeroController : public NavController {
public:
  sim::TwistCmd act(const RgbImage&, const EventFrame&, const sim::NavGroundTruth&, double) override { return {}; }
};

class PolicyNavController : public NavController {
public:
  PolicyNavController(const vit::PolicyParams<float>& params, data::ActionNormalizer norm, int clip)
      : params_(params), norm_(std::move(norm)), clip_(clip) {
    if (params.cfg.head != vit::Head::Nav) throw ConfigError("checkpoint head is not a navigation head");
  }
  sim::TwistCmd act(const RgbImage& frame, const EventFrame& events, const sim::NavGroundTruth&, double) override {
    const auto obs = vit::select_channels(to_observation(frame, events, clip_), params_.cfg.modality);
    const vit::Mat<float> y = vit::forward(params_, obs, vit::Mode::Eval, 0);
    const auto a = norm_.denormalize({y(0, 0), y(0, 1)});
    return {a[0], a[1]};
  }

private:
  const vit::PolicyParams<float>& params_;
  data::ActionNormalizer norm_;
  int clip_;
};

struct NavEvalConfig {
  rec::NavRecordConfig run;          // resolution, rate, horizon, scene, emulator, expert limits
  double success_radius_px = 40.0;  // 200 px at 640 scaled to 128
  double lost_timeout_s = 3.0;
  int clip = kDefaultCountClip;
};

struct NavFrameLog {
  int episode = 0;
  int step = 0;
  double t = 0.0;
  bool visible = false;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  double centroid_err = 0.0;
  double bbox_width = 0.0;
  bool in_radius = false;
  double v = 0.0;
  double omega = 0.0;
  sim::Pose2D robot;
  bool lost = false;  // episode already ended by the lost-target rule
};

struct NavMetrics {
  double centroid_err_mean = 0.0;
  double centroid_err_std = 0.0;
  double mean_bbox_width = 0.0;
  double success_rate = 0.0;
  double mean_trial_duration = 0.0;
  int episodes = 0;
  std::size_t frames = 0;
  std::size_t success_frames = 0;
};

struct NavEvalResult {
  NavMetrics metrics;
  std::vector<NavFrameLog> frames;
};

/// Aggregates per-frame logs. Centroid error and bbox width average over
/// visible frames; success counts in-radius frames over all frames, including
/// the frames left after an episode ended by losing the target.
inline NavMetrics nav_metrics(const std::vector<NavFrameLog>& frames, int episodes, double dt) {
  NavMetrics m;
  m.episodes = episodes;
  m.frames = frames.size();
  std::vector<double> err, bbox;
  std::vector<double> duration(static_cast<std::size_t>(episodes), 0.0);
  for (const auto& f : frames) {
    if (f.visible && !f.lost) {
      err.push_back(f.centroid_err);
      bbox.push_back(f.bbox_width);
    }
    if (f.in_radius) ++m.success_frames;
    if (!f.lost) duration.at(static_cast<std::size_t>(f.episode)) += dt;
  }
  const auto e = mean_std(err);
  m.centroid_err_mean = e.mean;
  m.centroid_err_std = e.std;
  m.mean_bbox_width = mean_std(bbox).mean;
  m.success_rate = frames.empty() ? 0.0 : static_cast<double>(m.success_frames) / static_cast<double>(frames.size());
  m.mean_trial_duration = mean_std(duration).mean;
  return m;
}

/// Closed-loop rollouts: render, emulate, accumulate, act, integrate.
inline NavEvalResult rollout_nav(NavController& ctl, const NavEvalConfig& cfg, int n_episodes, std::uint64_t seed) {
  cfg.run.validate();
  if (n_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (!(cfg.success_radius_px > 0)) throw ConfigError("eval.success_radius_px must be > 0");
  const double dt = cfg.run.dt();
  const int steps = cfg.run.steps();
  const int lost_frames = static_cast<int>(std::floor(cfg.lost_timeout_s / dt + 1e-9));
  NavEvalResult out;
  for (int e = 0; e < n_episodes; ++e) {
    const std::uint64_t ep_seed = rec::derive_seed(seed, 100, static_cast<std::uint64_t>(e));
    auto scene = sim::make_nav_scene(cfg.run.scene, rec::derive_seed(ep_seed, 1));
    auto emu = cfg.run.emulator;
    emu.seed = rec::derive_seed(ep_seed, 2);
    rec::EventSensor sensor(emu, cfg.run.res);
    ctl.reset(rec::derive_seed(ep_seed, 3));
    int invisible = 0;
    bool ended = false;
    for (int k = 0; k < steps; ++k) {
      NavFrameLog log;
      log.episode = e;
      log.step = k;
      log.t = k * dt;
      if (ended) {
        log.lost = true;
        log.robot = scene.robot;
        out.frames.push_back(log);
        continue;
      }
      const auto nf = sim::render_nav(scene, cfg.run.res);
      const auto ef = sensor.observe(nf.frame, k * cfg.run.dt_us());
      const auto& gt = nf.truth;
      log.visible = gt.visible;
      log.robot = scene.robot;
      if (gt.visible) {
        log.centroid_x = gt.centroid_x;
        log.centroid_y = gt.centroid_y;
        log.centroid_err = std::hypot(gt.centroid_x - cfg.run.res / 2.0, gt.centroid_y - cfg.run.res / 2.0);
        log.bbox_width = gt.bbox_width;
        log.in_radius = log.centroid_err <= cfg.success_radius_px;
        invisible = 0;
      } else {
        ++invisible;
      }
      const auto u = ctl.act(nf.frame, ef, gt, dt).clamped(cfg.run.expert.v_max, cfg.run.expert.omega_max);
      log.v = u.v;
      log.omega = u.omega;
      out.frames.push_back(log);
      if (invisible > lost_frames) {
        ended = true;
        continue;
      }
      scene.robot = sim::step_unicycle(scene.robot, u, dt);
      scene = sim::step_nav_scene(scene, dt);
    }
  }
  out.metrics = nav_metrics(out.frames, n_episodes, dt);
  return out;
}

inline std::string nav_frames_csv(const std::vector<NavFrameLog>& frames) {
  std::ostringstream os;
  os.precision(9);
  os << "episode,step,t,visible,centroid_x,centroid_y,centroid_err,bbox_width,in_radius,v,omega,robot_x,robot_y,"
        "robot_theta,lost\n";
  for (const auto& f : frames)
    os << f.episode << "," << f.step << "," << f.t << "," << f.visible << "," << f.centroid_x << "," << f.centroid_y
       << "," << f.centroid_err << "," << f.bbox_width << "," << f.in_radius << "," << f.v << "," << f.omega << ","
       << f.robot.x << "," << f.robot.y << "," << f.robot.theta << "," << f.lost << "\n";
  return os.str();
}

inline std::string nav_metrics_csv(const NavMetrics& m) {
  std::ostringstream os;
  os.precision(9);
  os << "episodes,frames,centroid_err_mean,centroid_err_std,mean_bbox_width,success_rate,mean_trial_duration\n"
     << m.episodes << "," << m.frames << "," << m.centroid_err_mean << "," << m.centroid_err_std << ","
     << m.mean_bbox_width << "," << m.success_rate << "," << m.mean_trial_duration << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Manipulation

class ArmPredictor {
public:
  virtual ~ArmPredictor() = default;
  virtual sim::Pose6D predict(const RgbImage& frame, const EventFrame& events, const sim::ArmScene& scene) = 0;
};

// Reads the answer straight from the scene; the ceiling for the metrics.
class OracleArmPredictor : public ArmPredictor {
public:
  explicit OracleArmPredictor(expert::PregraspConfig cfg) : cfg_(cfg) {}
  sim::Pose6D predict(const RgbImage&, const EventFrame&, const sim::ArmScene& scene) override {
    return expert::pregrasp_oracle(scene, cfg_);
  }

private:
  expert::PregraspConfig cfg_;
};

class PolicyArmPredictor : public ArmPredictor {
public:
  PolicyArmPredictor(const vit::PolicyParams<float>& params, data::ActionNormalizer norm, int clip)
      : params_(params), norm_(std::move(norm)), clip_(clip) {
    if (params.cfg.head != vit::Head::Arm) throw ConfigError("checkpoint head is not an arm head");
  }
  sim::Pose6D predict(const RgbImage& frame, const EventFrame& events, const sim::ArmScene&) override {
    const auto obs = vit::select_channels(to_observation(frame, events, clip_), params_.cfg.modality);
    const vit::Mat<float> y = vit::forward(params_, obs, vit::Mode::Eval, 0);
    std::vector<double> n(6);
    for (int i = 0; i < 6; ++i) n[static_cast<std::size_t>(i)] = y(0, i);
    const auto a = norm_.denormalize(n);
    return sim::Pose6D::from_array({a[0], a[1], a[2], a[3], a[4], a[5]}).wrapped();
  }

private:
  const vit::PolicyParams<float>& params_;
  data::ActionNormalizer norm_;
  int clip_;
};

struct ArmEvalConfig {
  rec::ArmRecordConfig run;
  double accuracy_mm = 50.0;
  double success_mm = 20.0;
  double success_deg = 10.0;
  int clip = kDefaultCountClip;
};

struct ArmTrialLog {
  int trial = 0;
  sim::Pose6D predicted;
  sim::Pose6D expected;
  double pos_err_mm = 0.0;
  double orient_err_deg = 0.0;
  bool accurate = false;
  bool success = false;
  double latency_ms = 0.0;
};

struct ArmMetrics {
  double pos_err_mean = 0.0;
  double pos_err_std = 0.0;
  double accuracy = 0.0;
  double latency_mean = 0.0;
  double latency_std = 0.0;
  double success_rate = 0.0;
  int trials = 0;
};

struct ArmEvalResult {
  ArmMetrics metrics;
  std::vector<ArmTrialLog> trials;
};

inline ArmMetrics arm_metrics(const std::vector<ArmTrialLog>& trials) {
  ArmMetrics m;
  m.trials = static_cast<int>(trials.size());
  std::vector<double> err, lat;
  std::size_t acc = 0, ok = 0;
  for (const auto& t : trials) {
    err.push_back(t.pos_err_mm);
    lat.push_back(t.latency_ms);
    acc += t.accurate;
    ok += t.success;
  }
  const auto e = mean_std(err), l = mean_std(lat);
  m.pos_err_mean = e.mean;
  m.pos_err_std = e.std;
  m.latency_mean = l.mean;
  m.latency_std = l.std;
  if (!trials.empty()) {
    m.accuracy = static_cast<double>(acc) / static_cast<double>(trials.size());
    m.success_rate = static_cast<double>(ok) / static_cast<double>(trials.size());
  }
  return m;
}

/// Single-shot pose prediction: one warm-up frame primes the emulator, the
/// second frame (with the events between the two) is the observation o_0.
inline ArmEvalResult eval_arm(ArmPredictor& pred, const ArmEvalConfig& cfg, sim::ArmScenario scenario,
                              int n_trials, std::uint64_t seed) {
  cfg.run.validate();
  if (n_trials < 1) throw ConfigError("eval.trials must be >= 1");
  auto scene_cfg = cfg.run.scene;
  scene_cfg.camera = cfg.run.scene.camera.rescaled(cfg.run.res);
  ArmEvalResult out;
  for (int i = 0; i < n_trials; ++i) {
    const std::uint64_t tseed = rec::derive_seed(seed, 200, static_cast<std::uint64_t>(i));
    auto scene = sim::make_arm_scene(scene_cfg, scenario, rec::derive_seed(tseed, 1));
    auto emu = cfg.run.emulator;
    emu.seed = rec::derive_seed(tseed, 2);
    rec::EventSensor sensor(emu, cfg.run.res);
    sensor.observe(sim::render_arm(scene, cfg.run.res).frame, 0);
    scene = sim::step_arm_scene(scene, cfg.run.dt());
    const auto af = sim::render_arm(scene, cfg.run.res);
    const auto ef = sensor.observe(af.frame, cfg.run.dt_us());

    ArmTrialLog log;
    log.trial = i;
    const auto t0 = std::chrono::steady_clock::now();
    log.predicted = pred.predict(af.frame, ef, scene);
    log.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.expected = expert::pregrasp_oracle(scene, cfg.run.oracle);
    log.pos_err_mm = (log.predicted.position() - log.expected.position()).norm() * 1000.0;
    log.orient_err_deg = sim::orientation_error(log.predicted, log.expected) * 180.0 / kPi;
    log.accurate = log.pos_err_mm < cfg.accuracy_mm;
    log.success = log.pos_err_mm < cfg.success_mm && log.orient_err_deg < cfg.success_deg;
    out.trials.push_back(log);
  }
  out.metrics = arm_metrics(out.trials);
  return out;
}

inline std::string arm_trials_csv(const std::vector<ArmTrialLog>& trials) {
  std::ostringstream os;
  os.precision(9);
  os << "trial,pred_x,pred_y,pred_z,pred_roll,pred_pitch,pred_yaw,exp_x,exp_y,exp_z,exp_roll,exp_pitch,exp_yaw,"
        "pos_err_mm,orient_err_deg,accurate,success,latency_ms\n";
  for (const auto& t : trials) {
    os << t.trial;
    for (double v : t.predicted.to_array()) os << "," << v;
    for (double v : t.expected.to_array()) os << "," << v;
    os << "," << t.pos_err_mm << "," << t.orient_err_deg << "," << t.accurate << "," << t.success << ","
       << t.latency_ms << "\n";
  }
  return os.str();
}

inline std::string arm_metrics_csv(const ArmMetrics& m) {
  std::ostringstream os;
  os.precision(9);
  os << "trials,pos_err_mean,pos_err_std,accuracy,success_rate,latency_mean_ms,latency_std_ms\n"
     << m.trials << "," << m.pos_err_mean << "," << m.pos_err_std << "," << m.accuracy << "," << m.success_rate << ","
     << m.latency_mean << "," << m.latency_std << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Modality comparison

struct NavCompareRow {
  vit::Modality modality = vit::Modality::Fused;
  std::vector<NavMetrics> per_seed;
};

struct ArmCompareRow {
  vit::Modality modality = vit::Modality::Fused;
  std::vector<ArmMetrics> per_seed;
};

inline constexpr vit::Modality kAllModalities[] = {vit::Modality::Rgb, vit::Modality::Event, vit::Modality::Fused};

struct CompareBudget {
  vit::PolicyConfig policy;  // modality, head and seed are overridden per run
  train::TrainConfig train;  // seed overridden per run
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int eval_episodes = 5;
  int arm_stride = 1;
};

inline std::vector<NavCompareRow> compare_nav(const data::SampleStore& store, const NavEvalConfig& ecfg,
                                              const data::ActionNormalizer& norm, const CompareBudget& b) {
  std::vector<NavCompareRow> rows;
  for (auto mod : kAllModalities) {
    NavCompareRow row;
    row.modality = mod;
    for (auto s : b.seeds) {
      auto pc = b.policy;
      pc.modality = mod;
      pc.head = vit::Head::Nav;
      pc.seed = s;
      auto tc = b.train;
      tc.seed = s;
      train::StoreSamples src(store, mod, norm, ecfg.clip);
      const auto trained = train::train<float>(pc, tc, src);
      PolicyNavController ctl(trained.params, norm, ecfg.clip);
      row.per_seed.push_back(rollout_nav(ctl, ecfg, b.eval_episodes, s).metrics);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<ArmCompareRow> compare_arm(const data::SampleStore& store, const ArmEvalConfig& ecfg,
                                              const data::ActionNormalizer& norm, const CompareBudget& b,
                                              sim::ArmScenario scenario) {
  std::vector<ArmCompareRow> rows;
  for (auto mod : kAllModalities) {
    ArmCompareRow row;
    row.modality = mod;
    for (auto s : b.seeds) {
      auto pc = b.policy;
      pc.modality = mod;
      pc.head = vit::Head::Arm;
      pc.seed = s;
      auto tc = b.train;
      tc.seed = s;
      train::StoreSamples src(store, mod, norm, ecfg.clip, b.arm_stride);
      const auto trained = train::train<float>(pc, tc, src);
      PolicyArmPredictor pred(trained.params, norm, ecfg.clip);
      row.per_seed.push_back(eval_arm(pred, ecfg, scenario, b.eval_episodes, s).metrics);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename M, typename F>
MeanStd over_seeds(const std::vector<M>& per_seed, F field) {
  std::vector<double> v;
  for (const auto& m : per_seed) v.push_back(field(m));
  return mean_std(v);
}

/// Seed-averaged metrics, one row per modality; the *_sd columns are the
/// spread across seeds.
inline std::string compare_nav_csv(const std::vector<NavCompareRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "task,model,seeds,centroid_err_mean,centroid_err_std,mean_bbox_width,success_rate,success_rate_sd,"
        "mean_trial_duration\n";
  for (const auto& r : rows) {
    const auto& p = r.per_seed;
    os << "nav," << vit::modality_name(r.modality) << "," << p.size() << ","
       << over_seeds(p, [](const NavMetrics& m) { return m.centroid_err_mean; }).mean << ","
       << over_seeds(p, [](const NavMetrics& m) { return m.centroid_err_std; }).mean << ","
       << over_seeds(p, [](const NavMetrics& m) { return m.mean_bbox_width; }).mean << ","
       << over_seeds(p, [](const NavMetrics& m) { return m.success_rate; }).mean << ","
       << over_seeds(p, [](const NavMetrics& m) { return m.success_rate; }).std << ","
       << over_seeds(p, [](const NavMetrics& m) { return m.mean_trial_duration; }).mean << "\n";
  }
  return os.str();
}

inline std::string compare_arm_csv(const std::vector<ArmCompareRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "task,model,seeds,pos_err_mean,pos_err_std,accuracy,success_rate,latency_mean_ms,latency_std_ms\n";
  for (const auto& r : rows) {
    const auto& p = r.per_seed;
    os << "arm," << vit::modality_name(r.modality) << "," << p.size() << ","
       << over_seeds(p, [](const ArmMetrics& m) { return m.pos_err_mean; }).mean << ","
       << over_seeds(p, [](const ArmMetrics& m) { return m.pos_err_std; }).mean << ","
       << over_seeds(p, [](const ArmMetrics& m) { return m.accuracy; }).mean << ","
       << over_seeds(p, [](const ArmMetrics& m) { return m.success_rate; }).mean << ","
       << over_seeds(p, [](const ArmMetrics& m) { return m.latency_mean; }).mean << ","
       << over_seeds(p, [](const ArmMetrics& m) { return m.latency_std; }).mean << "\n";
  }
  return os.str();
}

}  // namespace sebvs::eval
