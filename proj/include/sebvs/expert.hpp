#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "sebvs/worldsim.hpp"

namespace sebvs::expert {

struct PidAxis {
  double kp = 0.8;
  double ki = 0.05;
  double kd = 0.1;
  double i_clamp = 1.0;
  double integral = 0.0;
  double prev_error = 0.0;

  void reset() {
    integral = 0.0;
    prev_error = 0.0;
  }
};

inline double pid_step(PidAxis& axis, double error, double dt) {
  if (!(dt > 0)) throw InputError("pid_step requires dt > 0");
  axis.integral = std::clamp(axis.integral + error * dt, -axis.i_clamp, axis.i_clamp);
  const double derivative = (error - axis.prev_error) / dt;
  axis.prev_error = error;
  return axis.kp * error + axis.ki * axis.integral + axis.kd * derivative;
}

// Two-axis tracker: yaw from the horizontal centroid offset, forward speed
// from the apparent size of the target relative to the desired size.
struct ExpertNav {
  PidAxis yaw_axis;
  PidAxis range_axis;
  double v_max = 1.0;
  double omega_max = 2.0;
  double desired_bbox_px = 16.0;
  double omega_search = 1.0;
  double pixel_noise = 0.0;  // std-dev of centroid jitter, px
  std::mt19937_64 rng{0};
};

/// Positive yaw error means the target sits right of center, which turns the
/// robot clockwise (negative omega).
inline sim::TwistCmd expert_nav_cmd(ExpertNav& exp, const sim::NavGroundTruth& gt, double dt) {
  if (!(dt > 0)) throw InputError("expert_nav_cmd requires dt > 0");
  if (!gt.visible) return sim::TwistCmd{0.0, exp.omega_search}.clamped(exp.v_max, exp.omega_max);
  double cx = gt.centroid_x;
  double width = gt.bbox_width;
  if (exp.pixel_noise > 0) {
    std::normal_distribution<double> n(0.0, exp.pixel_noise);
    cx += n(exp.rng);
    width = std::max(0.0, width + n(exp.rng));
  }
  const double half = gt.image_width / 2.0;
  const double yaw_err = (cx - half) / half;
  const double range_err = (exp.desired_bbox_px - width) / exp.desired_bbox_px;
  sim::TwistCmd u;
  u.omega = -exp.omega_max * pid_step(exp.yaw_axis, yaw_err, dt);
  u.v = exp.v_max * pid_step(exp.range_axis, range_err, dt);
  return u.clamped(exp.v_max, exp.omega_max);
}

struct PregraspConfig {
  double workspace_y_limit = 0.449;
  double hover_height = 0.15;
  sim::Pose6D home_pose{0.35, 0.2, 0.45, kPi, 0.0, 0.0};
};

/// Index of the leftmost cube (minimum world x, ties by minimum y).
inline std::optional<std::size_t> leftmost(const std::vector<sim::Pose6D>& cubes) {
  if (cubes.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < cubes.size(); ++i) {
    const auto& c = cubes[i];
    const auto& b = cubes[best];
    if (c.x < b.x || (c.x == b.x && c.y < b.y)) best = i;
  }
  return best;
}

/// Top-down hover pose above the leftmost cube, or the home pose when there is
/// no cube or the leftmost one has left the workspace (y above the limit).
inline sim::Pose6D pregrasp_oracle(const std::vector<sim::Pose6D>& cubes,
                                   const PregraspConfig& cfg = {}) {
  const auto idx = leftmost(cubes);
  if (!idx) return cfg.home_pose;
  const auto& c = cubes[*idx];
  if (c.y > cfg.workspace_y_limit) return cfg.home_pose;
  return sim::Pose6D{c.x, c.y, c.z + cfg.hover_height, kPi, 0.0, c.yaw}.wrapped();
}

inline sim::Pose6D pregrasp_oracle(const sim::ArmScene& scene, const PregraspConfig& cfg = {}) {
  std::vector<sim::Pose6D> poses;
  poses.reserve(scene.cubes.size());
  for (const auto& c : scene.cubes) poses.push_back(c.pose);
  return pregrasp_oracle(poses, cfg);
}

}  // namespace sebvs::expert
