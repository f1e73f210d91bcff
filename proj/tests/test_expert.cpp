#include <gtest/gtest.h>

#include "sebvs/expert.hpp"
#include "sebvs/recorder.hpp"

using namespace sebvs;
using namespace sebvs::expert;

TEST(Pid, HandComputedSequence) {
  PidAxis a;  // kp .8, ki .05, kd .1
  // step 1: I = 0.025, D = 10  -> 0.4 + 0.00125 + 1.0
  EXPECT_NEAR(pid_step(a, 0.5, 0.05), 1.40125, 1e-12);
  // step 2: I = 0.05, D = 0     -> 0.4 + 0.0025
  EXPECT_NEAR(pid_step(a, 0.5, 0.05), 0.4025, 1e-12);
  // step 3: I = 0.025, D = -20  -> -0.4 + 0.00125 - 2
  EXPECT_NEAR(pid_step(a, -0.5, 0.05), -2.39875, 1e-12);
  EXPECT_THROW(pid_step(a, 0, 0), InputError);
}

TEST(Pid, IntegralClamp) {
  PidAxis a;
  a.i_clamp = 0.2;
  for (int i = 0; i < 100; ++i) pid_step(a, 1.0, 0.05);
  EXPECT_DOUBLE_EQ(a.integral, 0.2);
  a.reset();
  EXPECT_EQ(a.integral, 0.0);
  EXPECT_EQ(a.prev_error, 0.0);
}

TEST(ExpertNav, SignConventionsAndLimits) {
  sim::NavGroundTruth gt;
  gt.visible = true;
  gt.image_width = gt.image_height = 128;
  gt.centroid_x = 100;  // right of center
  gt.bbox_width = 8;    // smaller than desired, approach
  ExpertNav e;
  const auto u = expert_nav_cmd(e, gt, 0.05);
  EXPECT_LT(u.omega, 0);
  EXPECT_GT(u.v, 0);
  EXPECT_LE(std::abs(u.omega), e.omega_max);
  EXPECT_LE(std::abs(u.v), e.v_max);

  ExpertNav centered;
  gt.centroid_x = 64;
  gt.bbox_width = 16;
  const auto z = expert_nav_cmd(centered, gt, 0.05);
  EXPECT_NEAR(z.omega, 0.0, 1e-12);
  EXPECT_NEAR(z.v, 0.0, 1e-12);

  gt.visible = false;
  const auto s = expert_nav_cmd(centered, gt, 0.05);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_EQ(s.omega, 1.0);
}

TEST(ExpertNav, ClosedLoopKeepsTargetNearCenter) {
  // Tracking ceiling: after a short transient the expert holds the target
  // close to the image center.
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto scene = sim::make_nav_scene(sim::NavSceneConfig{}, seed);
    ExpertNav e;
    double worst = 0;
    for (int k = 0; k < 300; ++k) {
      const auto gt = sim::project_nav_target(scene, 128);
      ASSERT_TRUE(gt.visible) << "seed " << seed << " step " << k;
      if (k >= 40) worst = std::max(worst, std::abs(gt.centroid_x - 64));
      scene.robot = sim::step_unicycle(scene.robot, expert_nav_cmd(e, gt, 0.05), 0.05);
      scene = sim::step_nav_scene(scene, 0.05);
    }
    EXPECT_LT(worst, 40.0) << seed;
  }
}

TEST(Pregrasp, LeftmostWithTies) {
  EXPECT_FALSE(leftmost({}).has_value());
  std::vector<sim::Pose6D> c{{0.3, 0.2, 0}, {0.2, 0.4, 0}, {0.2, 0.1, 0}};
  EXPECT_EQ(*leftmost(c), 2u);
}

TEST(Pregrasp, HoverAndHomeRule) {
  PregraspConfig cfg;
  std::vector<sim::Pose6D> c{{0.3, 0.2, 0.05, 0, 0, 0.4}, {0.4, 0.0, 0.05, 0, 0, 0}};
  const auto p = pregrasp_oracle(c, cfg);
  EXPECT_DOUBLE_EQ(p.x, 0.3);
  EXPECT_DOUBLE_EQ(p.y, 0.2);
  EXPECT_NEAR(p.z, 0.2, 1e-12);
  EXPECT_NEAR(std::abs(p.roll), kPi, 1e-12);
  EXPECT_DOUBLE_EQ(p.yaw, 0.4);

  c[0].y = 0.449;  // boundary stays in the workspace
  EXPECT_DOUBLE_EQ(pregrasp_oracle(c, cfg).y, 0.449);
  c[0].y = 0.4491;
  const auto h = pregrasp_oracle(c, cfg);
  EXPECT_DOUBLE_EQ(h.z, cfg.home_pose.z);
  EXPECT_DOUBLE_EQ(h.x, cfg.home_pose.x);
  EXPECT_DOUBLE_EQ(pregrasp_oracle(std::vector<sim::Pose6D>{}, cfg).z, cfg.home_pose.z);
}

TEST(Pregrasp, SelectedPoseMatchesOracleTarget) {
  PregraspConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = sim::make_arm_scene(sim::ArmSceneConfig{}, sim::ArmScenario::Multi, seed);
    const auto target = pregrasp_oracle(s, cfg);
    const auto sel = rec::selected_pose(s, cfg);
    if (target.z == cfg.home_pose.z && target.x == cfg.home_pose.x) continue;
    EXPECT_DOUBLE_EQ(sel.x, target.x);
    EXPECT_DOUBLE_EQ(sel.y, target.y);
  }
}
