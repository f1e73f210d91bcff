#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sebvs/common.hpp"
#include "sebvs/image.hpp"

namespace sebvs::sim {

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct TwistCmd {
  double v = 0.0;
  double omega = 0.0;

  TwistCmd clamped(double v_max, double omega_max) const {
    return {std::clamp(v, -v_max, v_max), std::clamp(omega, -omega_max, omega_max)};
  }
};

struct Pose6D {
  double x = 0.0, y = 0.0, z = 0.0;
  double roll = 0.0, pitch = 0.0, yaw = 0.0;

  std::array<double, 6> to_array() const { return {x, y, z, roll, pitch, yaw}; }
  static Pose6D from_array(const std::array<double, 6>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  Pose6D wrapped() const {
    return {x, y, z, wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)};
  }
  Eigen::Vector3d position() const { return {x, y, z}; }
};

/// World-from-body rotation, R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline Eigen::Matrix3d rotation(const Pose6D& p) {
  return (Eigen::AngleAxisd(p.yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(p.pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(p.roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

/// Angle of the relative rotation between two orientations, radians in [0, pi].
inline double orientation_error(const Pose6D& a, const Pose6D& b) {
  const Eigen::Matrix3d rel = rotation(a).transpose() * rotation(b);
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

/// Exact-arc integration of the unicycle model over dt seconds.
inline Pose2D step_unicycle(const Pose2D& p, const TwistCmd& u, double dt) {
  Pose2D out = p;
  if (std::abs(u.omega) < 1e-9) {
    out.x += u.v * std::cos(p.theta) * dt;
    out.y += u.v * std::sin(p.theta) * dt;
  } else {
    const double th1 = p.theta + u.omega * dt;
    out.x += (u.v / u.omega) * (std::sin(th1) - std::sin(p.theta));
    out.y += (u.v / u.omega) * (std::cos(p.theta) - std::cos(th1));
  }
  out.theta = wrap_angle(p.theta + u.omega * dt);
  return out;
}

// ---------------------------------------------------------------------------
// Navigation world: a planar robot with a forward camera and a cube target
// that patrols a closed waypoint loop over a checkered floor.

struct Waypoint {
  double x = 0.0;
  double y = 0.0;
  double dwell = 0.0;  // seconds spent at the waypoint after arriving
};

struct NavSceneConfig {
  double target_size = 0.3;        // cube side, m
  double standoff = 1.2;           // initial and desired following distance, m
  double target_speed = 0.3;       // m/s
  int waypoints = 6;
  double segment_min = 1.0;        // m
  double segment_max = 2.5;        // m
  double turn_max_deg = 75.0;      // max heading change between segments
  double dwell_max = 1.0;          // s
  double world_half_extent = 6.0;  // m
  double checker_size = 0.5;       // m
  double hfov_deg = 90.0;
  double fog_distance = 8.0;       // m
};

struct NavScene {
  Pose2D robot;
  std::vector<Waypoint> waypoints;
  double target_x = 0.0;
  double target_y = 0.0;
  std::size_t next_waypoint = 1;
  double dwell_left = 0.0;
  double target_speed = 0.3;
  double target_size = 0.3;
  double camera_height = 0.15;
  double hfov_deg = 90.0;
  double world_half_extent = 6.0;
  double checker_size = 0.5;
  double fog_distance = 8.0;
  double time = 0.0;
  std::uint64_t seed = 0;
};

inline NavScene make_nav_scene(const NavSceneConfig& cfg, std::uint64_t seed) {
  if (cfg.waypoints < 2) throw ConfigError("nav.waypoints must be >= 2");
  if (!(cfg.target_size > 0)) throw ConfigError("nav.target_size must be > 0");
  if (!(cfg.segment_min > 0 && cfg.segment_max >= cfg.segment_min))
    throw ConfigError("nav.segment_min/segment_max must satisfy 0 < min <= max");
  if (!(cfg.world_half_extent > cfg.standoff))
    throw ConfigError("nav.world_half_extent must exceed nav.standoff");

  NavScene s;
  s.seed = seed;
  s.target_speed = cfg.target_speed;
  s.target_size = cfg.target_size;
  s.camera_height = cfg.target_size / 2.0;
  s.hfov_deg = cfg.hfov_deg;
  s.world_half_extent = cfg.world_half_extent;
  s.checker_size = cfg.checker_size;
  s.fog_distance = cfg.fog_distance;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> seg(cfg.segment_min, cfg.segment_max);
  std::uniform_real_distribution<double> turn(-cfg.turn_max_deg * kPi / 180.0,
                                              cfg.turn_max_deg * kPi / 180.0);
  std::uniform_real_distribution<double> dwell(0.0, cfg.dwell_max);
  std::bernoulli_distribution side(0.5);

  const double margin = cfg.target_size;
  const double lim = cfg.world_half_extent - margin;
  s.waypoints.push_back({cfg.standoff, 0.0, dwell(rng)});
  double heading = side(rng) ? kPi / 2 : -kPi / 2;
  while (static_cast<int>(s.waypoints.size()) < cfg.waypoints) {
    const Waypoint& prev = s.waypoints.back();
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const double h = heading + turn(rng);
      const double len = seg(rng);
      const double x = prev.x + len * std::cos(h);
      const double y = prev.y + len * std::sin(h);
      if (std::abs(x) <= lim && std::abs(y) <= lim) {
        s.waypoints.push_back({x, y, dwell(rng)});
        heading = h;
        placed = true;
      }
    }
    if (!placed) heading += kPi / 2;
  }
  s.target_x = s.waypoints[0].x;
  s.target_y = s.waypoints[0].y;
  s.dwell_left = s.waypoints[0].dwell;
  s.next_waypoint = 1;
  return s;
}

/// Advances the target along its waypoint loop; the robot is not touched.
inline NavScene step_nav_scene(NavScene s, double dt) {
  if (!(dt > 0)) throw InputError("step_nav_scene requires dt > 0");
  s.time += dt;
  if (s.target_speed <= 0 || s.waypoints.size() < 2) return s;
  double remaining = dt;
  // Bounded so a degenerate loop of coincident waypoints cannot spin forever.
  for (int guard = 0; remaining > 0 && guard < 1000; ++guard) {
    if (s.dwell_left > 0) {
      const double d = std::min(s.dwell_left, remaining);
      s.dwell_left -= d;
      remaining -= d;
      continue;
    }
    const Waypoint& wp = s.waypoints[s.next_waypoint];
    const double dx = wp.x - s.target_x, dy = wp.y - s.target_y;
    const double dist = std::hypot(dx, dy);
    const double reach = s.target_speed * remaining;
    if (reach >= dist) {
      s.target_x = wp.x;
      s.target_y = wp.y;
      remaining -= dist / s.target_speed;
      s.dwell_left = wp.dwell;
      s.next_waypoint = (s.next_waypoint + 1) % s.waypoints.size();
    } else {
      s.target_x += dx / dist * reach;
      s.target_y += dy / dist * reach;
      remaining = 0;
    }
  }
  return s;
}

struct NavGroundTruth {
  double centroid_x = 0.0;  // px, may lie outside the image
  double centroid_y = 0.0;
  double bbox_width = 0.0;  // px, unclipped
  bool visible = false;
  double distance = 0.0;    // forward depth of the target, m
  int image_width = 0;
  int image_height = 0;
};

struct NavFrame {
  RgbImage frame;
  NavGroundTruth truth;
};

inline double focal_from_hfov(int res, double hfov_deg) {
  return (res / 2.0) / std::tan(hfov_deg * kPi / 360.0);
}

namespace detail {

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Fraction of [a0,a1] covered by [b0,b1].
inline double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace detail

inline NavGroundTruth project_nav_target(const NavScene& s, int res) {
  NavGroundTruth gt;
  gt.image_width = res;
  gt.image_height = res;
  const double f = focal_from_hfov(res, s.hfov_deg);
  const double c = res / 2.0;
  const double fx = std::cos(s.robot.theta), fy = std::sin(s.robot.theta);
  const double rx = std::sin(s.robot.theta), ry = -std::cos(s.robot.theta);
  const double dx = s.target_x - s.robot.x, dy = s.target_y - s.robot.y;
  const double depth = dx * fx + dy * fy;
  const double lateral = dx * rx + dy * ry;
  gt.distance = depth;
  constexpr double kNear = 0.05;
  if (depth <= kNear) return gt;
  const double down = s.camera_height - s.target_size / 2.0;
  gt.centroid_x = c + f * lateral / depth;
  gt.centroid_y = c + f * down / depth;
  gt.bbox_width = f * s.target_size / depth;
  const double h = gt.bbox_width / 2.0;
  gt.visible = gt.centroid_x + h > 0 && gt.centroid_x - h < res && gt.centroid_y + h > 0 &&
               gt.centroid_y - h < res;
  return gt;
}

/// Renders the robot's forward camera view: textured floor, azimuth-striped
/// backdrop and the target drawn as a filled, coverage-antialiased square.
inline NavFrame render_nav(const NavScene& s, int res) {
  if (res <= 0 || res % 16 != 0) throw InputError("render resolution must be a positive multiple of 16");
  NavFrame out;
  out.frame = RgbImage(res, res);
  out.truth = project_nav_target(s, res);

  const double f = focal_from_hfov(res, s.hfov_deg);
  const double c = res / 2.0;
  const double cth = std::cos(s.robot.theta), sth = std::sin(s.robot.theta);
  // right vector in world is (sin, -cos)
  constexpr int kSS = 2;
  const std::array<double, 3> light{160, 158, 150}, dark{70, 72, 82}, fog{128, 128, 132};
  for (int v = 0; v < res; ++v) {
    for (int u = 0; u < res; ++u) {
      std::array<double, 3> acc{0, 0, 0};
      for (int sy = 0; sy < kSS; ++sy)
        for (int sx = 0; sx < kSS; ++sx) {
          const double xc = (u + (sx + 0.5) / kSS - c) / f;
          const double yc = (v + (sy + 0.5) / kSS - c) / f;
          const double wx = cth + sth * xc;
          const double wy = sth - cth * xc;
          std::array<double, 3> col;
          if (yc > 1e-6) {
            const double t = s.camera_height / yc;
            const double gx = s.robot.x + t * wx, gy = s.robot.y + t * wy;
            const long parity = static_cast<long>(std::floor(gx / s.checker_size)) +
                                static_cast<long>(std::floor(gy / s.checker_size));
            const auto& base = (parity & 1) ? dark : light;
            const double dist = t * std::hypot(wx, wy);
            const double k = std::exp(-dist / s.fog_distance);
            for (int i = 0; i < 3; ++i) col[i] = k * base[i] + (1 - k) * fog[i];
          } else {
            const double az = std::atan2(wy, wx);
            const double stripe = 0.5 + 0.5 * std::sin(12.0 * az);
            const double elev = std::clamp(-yc, 0.0, 1.0);
            col = {90 + 60 * stripe - 30 * elev, 120 + 50 * stripe - 20 * elev, 170 + 40 * stripe};
          }
          for (int i = 0; i < 3; ++i) acc[i] += col[i];
        }
      auto* px = out.frame.pixel(u, v);
      for (int i = 0; i < 3; ++i) px[i] = detail::to_byte(acc[i] / (kSS * kSS));
    }
  }

  const auto& gt = out.truth;
  if (gt.visible) {
    const std::array<double, 3> cube{210, 35, 35};
    const double h = gt.bbox_width / 2.0;
    const double l = gt.centroid_x - h, r = gt.centroid_x + h;
    const double t = gt.centroid_y - h, b = gt.centroid_y + h;
    const int u0 = std::max(0, static_cast<int>(std::floor(l)));
    const int u1 = std::min(res - 1, static_cast<int>(std::ceil(r)));
    const int v0 = std::max(0, static_cast<int>(std::floor(t)));
    const int v1 = std::min(res - 1, static_cast<int>(std::ceil(b)));
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) {
        const double cov = detail::overlap(u, u + 1, l, r) * detail::overlap(v, v + 1, t, b);
        if (cov <= 0) continue;
        auto* px = out.frame.pixel(u, v);
        for (int i = 0; i < 3; ++i) px[i] = detail::to_byte((1 - cov) * px[i] + cov * cube[i]);
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manipulation world: cubes on a table with a conveyor belt running along +y,
// viewed by a downward-looking pinhole camera.

struct CameraModel {
  double fx = 102.4;
  double fy = 102.4;
  double cx = 64.0;
  double cy = 64.0;
  Pose6D pose{0.35, 0.2, 0.75, kPi, 0.0, 0.0};  // camera-to-world; optical axis is +z
  int width = 128;
  int height = 128;

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw ConfigError("camera focal lengths must be > 0");
    if (!(cx >= 0 && cx <= width && cy >= 0 && cy <= height))
      throw ConfigError("camera principal point must lie inside the image");
  }

  /// Same camera at another square resolution.
  CameraModel rescaled(int res) const {
    CameraModel c = *this;
    const double k = double(res) / width;
    c.fx *= k;
    c.fy *= k;
    c.cx *= k;
    c.cy *= k;
    c.width = res;
    c.height = static_cast<int>(std::lround(height * k));
    return c;
  }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation(pose).transpose() * (world - pose.position());
  }
  Eigen::Vector2d project(const Eigen::Vector3d& cam) const {
    return {cx + fx * cam.x() / cam.z(), cy + fy * cam.y() / cam.z()};
  }
  /// World-space unit ray through pixel coordinate (u, v).
  Eigen::Vector3d ray(double u, double v) const {
    return (rotation(pose) * Eigen::Vector3d((u - cx) / fx, (v - cy) / fy, 1.0)).normalized();
  }
};

enum class BeltMode { Static, Moving };

struct ArmCube {
  Pose6D pose;  // center; z equals the scene's table height
  double side = 0.06;
  std::array<std::uint8_t, 3> color{200, 40, 40};
};

struct ArmScene {
  std::vector<ArmCube> cubes;
  double belt_speed = 0.05;  // m/s along +y
  BeltMode belt_mode = BeltMode::Static;
  CameraModel camera;
  double table_height = 0.05;  // height of cube centers
  double belt_x_min = 0.2;
  double belt_x_max = 0.5;
  double belt_offset = 0.0;    // texture phase, advances with the belt
  double time = 0.0;
};

struct ArmSceneConfig {
  double x_min = 0.15, x_max = 0.55;
  double y_min = -0.15, y_max = 0.55;
  double yaw_max_deg = 45.0;
  double cube_side = 0.06;
  double min_separation = 0.1;
  double belt_speed = 0.05;
  double moving_probability = 0.5;
  int multi_min = 2;
  int multi_max = 3;
  double table_height = 0.05;
  CameraModel camera;
};

enum class ArmScenario { Single, Multi };

inline ArmScene make_arm_scene(const ArmSceneConfig& cfg, ArmScenario scenario, std::uint64_t seed) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 4> kColors{
      {{200, 40, 40}, {40, 170, 60}, {50, 70, 200}, {210, 190, 40}}};
  if (cfg.multi_min < 1 || cfg.multi_max < cfg.multi_min)
    throw ConfigError("arm.multi_min/multi_max must satisfy 1 <= min <= max");
  cfg.camera.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(cfg.x_min, cfg.x_max), uy(cfg.y_min, cfg.y_max);
  std::uniform_real_distribution<double> uyaw(-cfg.yaw_max_deg * kPi / 180, cfg.yaw_max_deg * kPi / 180);
  std::bernoulli_distribution moving(cfg.moving_probability);
  std::uniform_int_distribution<int> count(cfg.multi_min, cfg.multi_max);

  ArmScene s;
  s.camera = cfg.camera;
  s.belt_speed = cfg.belt_speed;
  s.table_height = cfg.table_height;
  s.belt_mode = moving(rng) ? BeltMode::Moving : BeltMode::Static;
  const int n = scenario == ArmScenario::Single ? 1 : count(rng);
  for (int i = 0; i < n; ++i) {
    ArmCube cube;
    cube.side = cfg.cube_side;
    cube.color = kColors[static_cast<std::size_t>(i) % kColors.size()];
    for (int attempt = 0; attempt < 200; ++attempt) {
      cube.pose = {ux(rng), uy(rng), cfg.table_height, 0.0, 0.0, uyaw(rng)};
      bool ok = true;
      for (const auto& other : s.cubes)
        if (std::hypot(other.pose.x - cube.pose.x, other.pose.y - cube.pose.y) < cfg.min_separation)
          ok = false;
      if (ok) break;
    }
    s.cubes.push_back(cube);
  }
  return s;
}

inline ArmScene step_arm_scene(ArmScene s, double dt) {
  if (!(dt > 0)) throw InputError("step_arm_scene requires dt > 0");
  s.time += dt;
  if (s.belt_mode == BeltMode::Moving) {
    const double d = s.belt_speed * dt;
    for (auto& c : s.cubes) c.pose.y += d;
    s.belt_offset += d;
  }
  return s;
}

struct CubeTruth {
  Pose6D world_pose;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  bool in_front = false;  // false when any part of the cube is behind the camera plane
};

struct ArmFrame {
  RgbImage frame;
  std::vector<CubeTruth> cubes;
};

namespace detail {

inline std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 1 ? k - 1 : k);
  return hull;
}

// Point-in-convex-polygon for a counter-clockwise hull.
inline bool inside_convex(const std::vector<Eigen::Vector2d>& poly, double x, double y) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    if ((b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x()) < 0) return false;
  }
  return true;
}

inline void fill_convex(RgbImage& img, const std::vector<Eigen::Vector2d>& poly,
                        const std::array<double, 3>& color) {
  if (poly.size() < 3) return;
  double xmin = poly[0].x(), xmax = xmin, ymin = poly[0].y(), ymax = ymin;
  for (const auto& p : poly) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const int u0 = std::max(0, static_cast<int>(std::floor(xmin)));
  const int u1 = std::min(img.width - 1, static_cast<int>(std::ceil(xmax)));
  const int v0 = std::max(0, static_cast<int>(std::floor(ymin)));
  const int v1 = std::min(img.height - 1, static_cast<int>(std::ceil(ymax)));
  constexpr int kSS = 4;
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) {
      int hits = 0;
      for (int sy = 0; sy < kSS; ++sy)
        for (int sx = 0; sx < kSS; ++sx)
          hits += inside_convex(poly, u + (sx + 0.5) / kSS, v + (sy + 0.5) / kSS);
      if (!hits) continue;
      const double cov = double(hits) / (kSS * kSS);
      auto* px = img.pixel(u, v);
      for (int i = 0; i < 3; ++i) px[i] = to_byte((1 - cov) * px[i] + cov * color[i]);
    }
}

}  // namespace detail

/// Renders the wrist camera view. Cubes are painted far-to-near; a cube with
/// any corner behind the camera plane is skipped and flagged in its truth.
inline ArmFrame render_arm(const ArmScene& s, int res) {
  if (res <= 0 || res % 16 != 0) throw InputError("render resolution must be a positive multiple of 16");
  const CameraModel cam = s.camera.rescaled(res);
  ArmFrame out;
  out.frame = RgbImage(cam.width, cam.height);

  double side = 0.06;
  if (!s.cubes.empty()) side = s.cubes.front().side;
  const double surface = s.table_height - side / 2.0;
  const Eigen::Matrix3d R = rotation(cam.pose);
  const Eigen::Vector3d origin = cam.pose.position();
  constexpr int kSS = 2;
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      std::array<double, 3> acc{0, 0, 0};
      for (int sy = 0; sy < kSS; ++sy)
        for (int sx = 0; sx < kSS; ++sx) {
          const Eigen::Vector3d d =
              R * Eigen::Vector3d((u + (sx + 0.5) / kSS - cam.cx) / cam.fx,
                                  (v + (sy + 0.5) / kSS - cam.cy) / cam.fy, 1.0);
          std::array<double, 3> col{40, 40, 45};
          if (d.z() < -1e-9) {
            const double t = (surface - origin.z()) / d.z();
            const double gx = origin.x() + t * d.x(), gy = origin.y() + t * d.y();
            if (gx >= s.belt_x_min && gx <= s.belt_x_max) {
              const double phase = std::sin(2 * kPi * (gy - s.belt_offset) / 0.08);
              const double g = 55 + 18 * phase;
              col = {g, g, g + 6};
            } else {
              const double grain = std::sin(2 * kPi * gx / 0.05 + 0.7 * std::sin(2 * kPi * gy / 0.3));
              col = {150 + 15 * grain, 115 + 12 * grain, 80 + 8 * grain};
            }
          }
          for (int i = 0; i < 3; ++i) acc[i] += col[i];
        }
      auto* px = out.frame.pixel(u, v);
      for (int i = 0; i < 3; ++i) px[i] = detail::to_byte(acc[i] / (kSS * kSS));
    }

  struct Item {
    std::size_t index;
    double depth;
  };
  std::vector<Item> order;
  out.cubes.resize(s.cubes.size());
  constexpr double kNear = 1e-3;
  for (std::size_t i = 0; i < s.cubes.size(); ++i) {
    const auto& cube = s.cubes[i];
    auto& truth = out.cubes[i];
    truth.world_pose = cube.pose;
    const Eigen::Vector3d center = cam.to_camera(cube.pose.position());
    bool in_front = center.z() > kNear;
    const Eigen::Matrix3d Rc = rotation(cube.pose);
    for (int corner = 0; corner < 8 && in_front; ++corner) {
      const Eigen::Vector3d local((corner & 1 ? 0.5 : -0.5) * cube.side,
                                  (corner & 2 ? 0.5 : -0.5) * cube.side,
                                  (corner & 4 ? 0.5 : -0.5) * cube.side);
      if (cam.to_camera(cube.pose.position() + Rc * local).z() <= kNear) in_front = false;
    }
    truth.in_front = in_front;
    if (!in_front) continue;
    const Eigen::Vector2d c = cam.project(center);
    truth.centroid_x = c.x();
    truth.centroid_y = c.y();
    order.push_back({i, center.z()});
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Item& a, const Item& b) { return a.depth > b.depth; });

  for (const auto& item : order) {
    const auto& cube = s.cubes[item.index];
    const Eigen::Matrix3d Rc = rotation(cube.pose);
    std::vector<Eigen::Vector2d> all, top;
    for (int corner = 0; corner < 8; ++corner) {
      const Eigen::Vector3d local((corner & 1 ? 0.5 : -0.5) * cube.side,
                                  (corner & 2 ? 0.5 : -0.5) * cube.side,
                                  (corner & 4 ? 0.5 : -0.5) * cube.side);
      const Eigen::Vector2d p = cam.project(cam.to_camera(cube.pose.position() + Rc * local));
      all.push_back(p);
      if (corner & 4) top.push_back(p);
    }
    const std::array<double, 3> base{double(cube.color[0]), double(cube.color[1]), double(cube.color[2])};
    detail::fill_convex(out.frame, detail::convex_hull(all),
                        {0.55 * base[0], 0.55 * base[1], 0.55 * base[2]});
    detail::fill_convex(out.frame, detail::convex_hull(top), base);
  }
  return out;
}

}  // namespace sebvs::sim
