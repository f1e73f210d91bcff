#include <gtest/gtest.h>

#include <filesystem>

#include "sebvs/dataset.hpp"
#include "sebvs/recorder.hpp"

using namespace sebvs;
using namespace sebvs::data;
namespace fs = std::filesystem;

namespace {

Episode small_nav(std::uint64_t seed, double horizon = 1.0) {
  rec::NavRecordConfig c;
  c.res = 32;
  c.horizon_s = horizon;
  return rec::record_nav_episode(c, seed, 0xabcdef);
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sebvs_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Episode, RoundTripIsLossless) {
  const auto ep = small_nav(1);
  ASSERT_EQ(ep.records.size(), 20u);
  const auto bytes = encode_episode(ep.header, ep.records);
  EXPECT_EQ(bytes.size(), kHeaderBytes + 20 * record_bytes(ep.header));
  EXPECT_EQ(record_bytes(ep.header), 8 + 7 * 32 * 32 + 8 + 12u);
  const auto back = decode_episode(bytes, "mem");
  EXPECT_EQ(back.header, ep.header);
  EXPECT_EQ(back.header.config_digest, 0xabcdefu);
  EXPECT_EQ(back.header.scale_offset, ScaleOffset::from_downsample(0.5));
  for (std::size_t i = 0; i < ep.records.size(); ++i) EXPECT_TRUE(back.records[i] == ep.records[i]);
}

TEST(Episode, CorruptionDetected) {
  const auto ep = small_nav(2);
  auto bytes = encode_episode(ep.header, ep.records);
  auto trunc = bytes;
  trunc.resize(trunc.size() - 1);
  EXPECT_THROW(decode_episode(trunc, "t"), FormatError);
  auto magic = bytes;
  magic[1] = 'Z';
  EXPECT_THROW(decode_episode(magic, "m"), FormatError);
  auto version = bytes;
  version[4] = 99;
  EXPECT_THROW(decode_episode(version, "v"), FormatError);
}

TEST(Episode, EncodeValidatesRecords) {
  auto ep = small_nav(3);
  auto recs = ep.records;
  recs[1].action.push_back(0.0f);
  EXPECT_THROW(encode_episode(ep.header, recs), InputError);
  recs = ep.records;
  std::swap(recs[0], recs[5]);
  EXPECT_THROW(encode_episode(ep.header, recs), InputError);
}

TEST(Episode, RecordingIsDeterministic) {
  EXPECT_EQ(encode_episode(small_nav(4).header, small_nav(4).records),
            encode_episode(small_nav(4).header, small_nav(4).records));
  EXPECT_NE(encode_episode(small_nav(4).header, small_nav(4).records),
            encode_episode(small_nav(5).header, small_nav(5).records));
}

TEST(Episode, FirstFrameHasNoEventsAndTimesAdvance) {
  const auto ep = small_nav(6);
  for (auto c : ep.records[0].ev_on) EXPECT_EQ(c, 0);
  for (std::size_t i = 0; i < ep.records.size(); ++i) EXPECT_EQ(ep.records[i].t, std::int64_t(i) * 50000);
}

TEST(SampleStore, ConcatIndexing) {
  const auto dir = temp_dir("store");
  const auto a = small_nav(7, 0.5), b = small_nav(8, 1.0);
  write_episode((dir / "episode_0001.ebvs").string(), b.header, b.records);
  write_episode((dir / "episode_0000.ebvs").string(), a.header, a.records);
  const auto files = list_episode_files(dir.string());
  ASSERT_EQ(files.size(), 2u);
  const auto store = SampleStore::load_concat(files);
  EXPECT_EQ(store.size(), 30u);
  EXPECT_EQ(store.boundaries(), (std::vector<std::size_t>{0, 10}));
  EXPECT_TRUE(store[9] == a.records[9]);
  EXPECT_TRUE(store[10] == b.records[0]);
  EXPECT_EQ(store.locate(29).episode, 1u);
  EXPECT_EQ(store.locate(29).step, 19u);
  EXPECT_THROW(store[30], InputError);
  fs::remove_all(dir);
}

TEST(SampleStore, IncompatibleAndEmpty) {
  SampleStore s;
  EXPECT_THROW(s.header(), EmptyDatasetError);
  s.add(small_nav(9, 0.25), "a");
  rec::ArmRecordConfig ac;
  ac.res = 32;
  ac.episode_steps = 2;
  EXPECT_THROW(s.add(rec::record_arm_episode(ac, 1, 0), "b"), IncompatibleError);
  EXPECT_THROW(list_episode_files("/nonexistent/sebvs"), IoError);
}

TEST(Normalizer, RoundTripAndClamp) {
  auto n = ActionNormalizer::nav(1.0, 2.0);
  const auto z = n.normalize({0.5, -2.0});
  EXPECT_DOUBLE_EQ(z[0], 0.5);
  EXPECT_DOUBLE_EQ(z[1], -1.0);
  EXPECT_EQ(n.clamp_count(), 0u);
  const auto c = n.normalize({3.0, 0.0});
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_EQ(n.clamp_count(), 1u);
  auto arm = ActionNormalizer::arm({0.1, -0.2, 0.1}, {0.6, 0.6, 0.5});
  const std::vector<double> raw{0.3, 0.1, 0.2, 3.0, -0.1, 0.7};
  const auto back = arm.denormalize(arm.normalize(raw));
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(back[i], raw[i], 1e-12);
  EXPECT_THROW(n.normalize({1.0}), InputError);
  EXPECT_THROW(ActionNormalizer({0.0}, {0.0}), ConfigError);
}

TEST(Stats, HistogramCountsAllSamples) {
  SampleStore s;
  s.add(small_nav(10), "a");
  s.add(small_nav(11), "b");
  const auto st = stats(s, ActionNormalizer::nav(1.0, 2.0), 10);
  std::istringstream in(st.histogram_csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dim,bin,lo,hi,count");
  std::size_t total = 0, rows = 0;
  while (std::getline(in, line)) {
    total += std::stoul(line.substr(line.rfind(',') + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 20u);
  EXPECT_EQ(total, 2 * s.size());
  EXPECT_NE(st.episodes_csv.find("\n1,20,"), std::string::npos);
}

TEST(ArmRecording, LabelsAreOracle) {
  rec::ArmRecordConfig ac;
  ac.res = 32;
  ac.episode_steps = 3;
  for (std::uint64_t e = 0; e < 4; ++e) {
    const auto ep = rec::record_arm_episode(ac, 100 + e, e);
    EXPECT_EQ(ep.header.task, Task::Arm);
    EXPECT_EQ(ep.header.action_dim, 6u);
    for (const auto& r : ep.records) {
      EXPECT_EQ(r.action.size(), 6u);
      EXPECT_EQ(r.aux.size(), 6u);
      const bool home = std::abs(r.action[2] - ac.oracle.home_pose.z) < 1e-6;
      if (!home) {
        EXPECT_FLOAT_EQ(r.action[0], r.aux[0]);
        EXPECT_FLOAT_EQ(r.action[1], r.aux[1]);
      }
    }
  }
  EXPECT_EQ(rec::scenario_for(rec::ArmMix::Mixed, 0), sim::ArmScenario::Single);
  EXPECT_EQ(rec::scenario_for(rec::ArmMix::Mixed, 1), sim::ArmScenario::Multi);
  EXPECT_EQ(rec::episode_filename(7), "episode_0007.ebvs");
}
