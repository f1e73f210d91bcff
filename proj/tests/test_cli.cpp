#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "sebvs/cli.hpp"

using namespace sebvs;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sebvs");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sebvs_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file_bytes(p.string());
  return std::string(b.begin(), b.end());
}

}  // namespace

TEST(Config, DefaultsAndTypedAccess) {
  cfg::RunConfig c;
  EXPECT_EQ(c.get_int("sensor.res"), 128);
  EXPECT_EQ(c.get_double("emulator.pos_thres"), 0.3);
  EXPECT_TRUE(c.get_bool("emulator.blur"));
  EXPECT_EQ(c.get("train.nav_loss"), "mse");
  EXPECT_EQ(c.get("train.arm_loss"), "smooth_l1");
  EXPECT_THROW(c.set("train.nope", "1"), ConfigError);
  EXPECT_THROW(c.apply_override("train.epochs"), ConfigError);
  c.set("sensor.res", "abc");
  EXPECT_THROW(c.get_int("sensor.res"), ConfigError);
}

TEST(Config, FileSectionsAndComments) {
  cfg::RunConfig c;
  c.load_text("# comment\n[train]\nepochs = 3 ; trailing\n\n[emulator]\nblur=false\n");
  EXPECT_EQ(c.get_int("train.epochs"), 3);
  EXPECT_FALSE(c.get_bool("emulator.blur"));
  EXPECT_THROW(c.load_text("[train]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(c.load_text("epochs = 1\n"), ConfigError);
}

TEST(Config, SnapshotAndDigest) {
  cfg::RunConfig a, b;
  EXPECT_EQ(a.snapshot(), b.snapshot());
  EXPECT_EQ(a.digest(), b.digest());
  b.apply_override("train.epochs=4");
  EXPECT_NE(a.digest(), b.digest());
  cfg::RunConfig c;
  c.load_text(b.snapshot());
  EXPECT_EQ(c.digest(), b.digest());
  EXPECT_NE(a.snapshot().find("[emulator]"), std::string::npos);
}

TEST(Config, TypedBuilders) {
  cfg::RunConfig c;
  const auto e = cfg::emulator(c);
  EXPECT_EQ(e.sigma_thres, 0.09);
  const auto pc = cfg::policy(c, data::Task::Arm, vit::Modality::Event, 4);
  EXPECT_EQ(pc.head, vit::Head::Arm);
  EXPECT_EQ(pc.channels(), 2);
  EXPECT_EQ(pc.seed, 4u);
  const auto tc = cfg::training(c, data::Task::Arm, 1);
  EXPECT_EQ(tc.loss, train::LossKind::SmoothL1);
  EXPECT_TRUE(tc.plateau);
  const auto ne = cfg::nav_eval(c);
  EXPECT_EQ(ne.success_radius_px, 40.0);
  EXPECT_EQ(ne.lost_timeout_s, 3.0);
  EXPECT_EQ(ne.run.horizon_s, 15.0);
  EXPECT_EQ(ne.run.exec_noise_v, 0.0);
  auto arm = cfg::normalizer(c, data::Task::Arm);
  const auto home = cfg::pregrasp(c).home_pose;
  const auto n = arm.normalize({home.x, home.y, home.z, home.roll, home.pitch, home.yaw});
  for (double v : n) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"train", "--help"}).code, 0);
  auto r = run_cli({});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: usage:", 0), 0u);
  r = run_cli({"gen-data", "--task", "nav", "--out", "x", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_EQ(run_cli({"gen-data", "--task", "car", "--out", "x"}).code, 2);
  EXPECT_EQ(run_cli({"eval", "--task", "nav", "--ckpt", "a", "--baseline", "zero"}).code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  auto r = run_cli({"inspect", "/nonexistent/file.ebvs"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  const auto dir = fresh_dir("badkey");
  r = run_cli({"gen-data", "--task", "nav", "--episodes", "1", "--out", dir.string(), "--set", "nav.nope=1"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nav.nope"), std::string::npos);
  r = run_cli({"eval", "--task", "arm", "--baseline", "zero"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, GenDataIsByteDeterministicAndInspectable) {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  const std::vector<std::string> common{"--task", "arm", "--episodes", "2", "--seed", "5", "--set",
                                        "sensor.res=32"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.begin(), "gen-data");
  args_a.insert(args_a.end(), {"--out", a.string()});
  args_b.insert(args_b.begin(), "gen-data");
  args_b.insert(args_b.end(), {"--out", b.string()});
  ASSERT_EQ(run_cli(args_a).code, 0);
  ASSERT_EQ(run_cli(args_b).code, 0);
  for (const char* f : {"episode_0000.ebvs", "episode_0001.ebvs"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto snap = slurp(a / "config.ini");
  EXPECT_EQ(snap.rfind("# sebvs gen-data", 0), 0u);
  EXPECT_NE(snap.find("res = 32"), std::string::npos);

  const auto r = run_cli({"inspect", (a / "episode_0000.ebvs").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("task: arm"), std::string::npos);
  EXPECT_NE(r.out.find("steps: 10"), std::string::npos);

  const auto csv = a / "ep0.csv";
  EXPECT_EQ(run_cli({"export", "--csv", "--in", (a / "episode_0000.ebvs").string(), "--out", csv.string()}).code, 0);
  EXPECT_EQ(slurp(csv).rfind("step,t_us,action0", 0), 0u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, OracleEvalThroughBinary) {
  const auto dir = fresh_dir("bin");
  fs::create_directories(dir);
  const auto metrics = dir / "m.csv";
  const std::string cmd = std::string(SEBVS_CLI_PATH) + " eval --task arm --baseline oracle --episodes 3 --csv " +
                          metrics.string() + " > /dev/null";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  const auto text = slurp(metrics);
  EXPECT_NE(text.find("\n3,0,0,1,1,"), std::string::npos) << text;
  EXPECT_TRUE(fs::exists(dir / "m.csv.config.ini"));
  const int rc = std::system((std::string(SEBVS_CLI_PATH) + " --bogus 2> /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(rc), 2);
  fs::remove_all(dir);
}

TEST(Cli, RolloutFramesFeedEmulator) {
  const auto dir = fresh_dir("rollout");
  ASSERT_EQ(run_cli({"rollout", "--render", "--out", dir.string(), "--seconds", "0.5", "--seed", "1", "--set",
                     "sensor.res=32"})
                .code,
            0);
  EXPECT_TRUE(fs::exists(dir / "frame_00009.ppm"));
  const auto evt = dir / "ev.evt1";
  ASSERT_EQ(run_cli({"emulate", "--in", dir.string(), "--out", evt.string()}).code, 0);
  const auto r = run_cli({"inspect", evt.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("size: 16x16"), std::string::npos) << r.out;
  EXPECT_EQ(run_cli({"emulate", "--in", (dir / "missing").string(), "--out", evt.string()}).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, StatsWritesHistograms) {
  const auto data = fresh_dir("stats_data"), out = fresh_dir("stats_out");
  ASSERT_EQ(run_cli({"gen-data", "--task", "nav", "--episodes", "2", "--out", data.string(), "--set",
                     "sensor.res=32", "--set", "data.nav_horizon_s=1"})
                .code,
            0);
  ASSERT_EQ(run_cli({"stats", "--data", data.string(), "--out", out.string(), "--bins", "4"}).code, 0);
  const auto eps = slurp(out / "episodes.csv");
  EXPECT_EQ(eps.rfind("episode,steps,", 0), 0u);
  EXPECT_EQ(std::count(eps.begin(), eps.end(), '\n'), 3);
  const auto hist = slurp(out / "histograms.csv");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 1 + 2 * 4);
  fs::remove_all(data);
  fs::remove_all(out);
}
