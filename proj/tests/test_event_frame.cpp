#include <gtest/gtest.h>

#include <random>

#include "sebvs/event_frame.hpp"
#include "sebvs/recorder.hpp"

using namespace sebvs;
using dvs::Event;

TEST(ScaleOffset, DownsampleInverse) {
  const auto m = ScaleOffset::from_downsample(0.5);
  EXPECT_EQ(m.sx, 2.0);
  EXPECT_EQ(m.sy, 2.0);
  const auto p = map_coords(10, 7, m, 128, 128);
  EXPECT_EQ(p.x, 20);
  EXPECT_EQ(p.y, 14);
  EXPECT_TRUE(p.in_bounds);
  EXPECT_FALSE(map_coords(64, 0, m, 128, 128).in_bounds);
}

TEST(Accumulate, CountsWindowAndBounds) {
  std::vector<Event> ev{
      {1, 1, 10, 1}, {1, 1, 20, 1}, {1, 1, 30, -1},  // kept
      {2, 2, 0, 1},                                  // t == t_start, excluded
      {2, 2, 31, 1},                                 // after window
      {9, 0, 15, 1},                                 // out of bounds
  };
  const auto ef = accumulate(ev, 0, 30, ScaleOffset::identity(), 8, 8);
  EXPECT_EQ(ef.on(1, 1), 2u);
  EXPECT_EQ(ef.off(1, 1), 1u);
  EXPECT_EQ(ef.kept, 3u);
  EXPECT_EQ(ef.dropped, 3u);
  EXPECT_THROW(accumulate(ev, 5, 5, ScaleOffset::identity(), 8, 8), InputError);
}

TEST(Accumulate, ConservesEventsProperty) {
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> ux(0, 70), ut(-5, 105), up(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Event> ev(500);
    for (auto& e : ev)
      e = {static_cast<std::uint16_t>(ux(rng)), static_cast<std::uint16_t>(ux(rng)), ut(rng),
           static_cast<std::int8_t>(up(rng) ? 1 : -1)};
    const auto ef = accumulate(ev, 0, 100, ScaleOffset::from_downsample(0.5), 128, 128);
    std::uint64_t sum = 0;
    for (auto v : ef.on_counts) sum += v;
    for (auto v : ef.off_counts) sum += v;
    EXPECT_EQ(sum, ef.kept);
    EXPECT_EQ(ef.kept + ef.dropped, ev.size());
    // Halved sensor lands on even pixels only.
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x)
        if (x % 2 || y % 2) {
          EXPECT_EQ(ef.on(x, y), 0u);
          EXPECT_EQ(ef.off(x, y), 0u);
        }
  }
}

TEST(Observation, ClipAndScale) {
  RgbImage rgb(4, 4);
  rgb.pixel(1, 2)[0] = 255;
  rgb.pixel(1, 2)[2] = 51;
  EventFrame ef(4, 4, 0, 1);
  ef.on_counts[2 * 4 + 1] = 3;
  ef.off_counts[2 * 4 + 1] = 40;
  const auto obs = to_observation(rgb, ef);
  EXPECT_EQ(obs.channels, 5);
  EXPECT_FLOAT_EQ(obs.at(0, 2, 1), 1.0f);
  EXPECT_FLOAT_EQ(obs.at(1, 2, 1), 0.0f);
  EXPECT_FLOAT_EQ(obs.at(2, 2, 1), 0.2f);
  EXPECT_FLOAT_EQ(obs.at(3, 2, 1), 3.0f / 8.0f);
  EXPECT_FLOAT_EQ(obs.at(4, 2, 1), 1.0f);
  EXPECT_FLOAT_EQ(to_observation(rgb, ef, 4).at(3, 2, 1), 0.75f);
  for (float v : obs.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(to_observation(rgb, ef, 0), ConfigError);
  EventFrame small(2, 2, 0, 1);
  EXPECT_THROW(to_observation(rgb, small), InputError);
}

TEST(EventSensor, FirstObservationEmptyThenAligned) {
  dvs::EmulatorConfig c;
  c.sigma_thres = 0;
  rec::EventSensor sensor(c, 32);
  RgbImage a(32, 32), b(32, 32);
  for (auto& v : a.data) v = 30;
  for (auto& v : b.data) v = 30;
  for (int y = 8; y < 16; ++y)
    for (int x = 8; x < 16; ++x)
      for (int ch = 0; ch < 3; ++ch) b.pixel(x, y)[ch] = 250;
  const auto f0 = sensor.observe(a, 0);
  for (auto v : f0.on_counts) EXPECT_EQ(v, 0u);
  const auto f1 = sensor.observe(b, 50000);
  EXPECT_GT(f1.kept, 0u);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (f1.on(x, y)) {
        EXPECT_EQ(x % 2, 0);
        EXPECT_GE(x, 4);
        EXPECT_LE(x, 18);
      }
  EXPECT_THROW(sensor.observe(RgbImage(16, 16), 60000), InputError);
}
