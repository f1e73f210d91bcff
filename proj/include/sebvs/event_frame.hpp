#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sebvs/dvs.hpp"
#include "sebvs/image.hpp"

namespace sebvs {

// Maps emulator pixel coordinates into RGB image coordinates.
struct ScaleOffset {
  double sx = 1.0;
  double sy = 1.0;
  double ox = 0.0;
  double oy = 0.0;

  static ScaleOffset identity() { return {}; }
  /// Inverse of the emulator downsampling, for a sensor aligned with the RGB camera.
  static ScaleOffset from_downsample(double downsample) {
    return {1.0 / downsample, 1.0 / downsample, 0.0, 0.0};
  }
  void validate() const {
    if (!(sx > 0 && sy > 0)) throw ConfigError("scale-offset scales must be > 0");
  }
  bool operator==(const ScaleOffset&) const = default;
};

struct MappedPixel {
  long x = 0;
  long y = 0;
  bool in_bounds = false;
};

inline MappedPixel map_coords(double x, double y, const ScaleOffset& m, int width, int height) {
  MappedPixel p;
  p.x = std::lround(x * m.sx + m.ox);
  p.y = std::lround(y * m.sy + m.oy);
  p.in_bounds = p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
  return p;
}

struct EventFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> on_counts;
  std::vector<std::uint32_t> off_counts;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;

  EventFrame() = default;
  EventFrame(int w, int h, std::int64_t t0, std::int64_t t1)
      : width(w), height(h), on_counts(std::size_t(w) * h, 0),
        off_counts(std::size_t(w) * h, 0), t_start(t0), t_end(t1) {}

  std::uint32_t on(int x, int y) const { return on_counts[std::size_t(y) * width + x]; }
  std::uint32_t off(int x, int y) const { return off_counts[std::size_t(y) * width + x]; }
};

/// Histograms the events with t in (t_start, t_end] into ON/OFF count
/// channels at RGB resolution. Events outside the window or mapped outside
/// the image are dropped and tallied in `dropped`.
inline EventFrame accumulate(const std::vector<dvs::Event>& events, std::int64_t t_start,
                             std::int64_t t_end, const ScaleOffset& m, int width, int height) {
  if (t_start >= t_end) throw InputError("accumulate window must satisfy t_start < t_end");
  m.validate();
  EventFrame ef(width, height, t_start, t_end);
  for (const auto& e : events) {
    if (e.t <= t_start || e.t > t_end) {
      ++ef.dropped;
      continue;
    }
    const MappedPixel px = map_coords(e.x, e.y, m, width, height);
    if (!px.in_bounds) {
      ++ef.dropped;
      continue;
    }
    const std::size_t i = std::size_t(px.y) * width + std::size_t(px.x);
    if (e.p > 0) ++ef.on_counts[i];
    else ++ef.off_counts[i];
    ++ef.kept;
  }
  return ef;
}

inline EventFrame accumulate(const dvs::EventBatch& batch, std::int64_t t_start,
                             std::int64_t t_end, const ScaleOffset& m, int width, int height) {
  return accumulate(batch.events, t_start, t_end, m, width, height);
}

inline constexpr int kDefaultCountClip = 8;

// Planar (channel-major) observation grid fed to the policy.
struct Observation {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Observation() = default;
  Observation(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w, 0.0f) {}

  float& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
};

/// Builds the five-channel early-fusion grid: RGB in [0,1] followed by the ON
/// and OFF counts clipped at `clip` and scaled to [0,1].
template <typename Count>
Observation to_observation(const RgbImage& rgb, const std::vector<Count>& on,
                                  const std::vector<Count>& off, int ev_width,
                                  int ev_height, int clip = kDefaultCountClip) {
  if (rgb.width != ev_width || rgb.height != ev_height)
    throw InputError("RGB image and event frame dimensions differ");
  if (clip <= 0) throw ConfigError("count clip must be positive");
  const int w = rgb.width, h = rgb.height;
  Observation obs(5, h, w);
  const float inv = 1.0f / static_cast<float>(clip);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto* px = rgb.pixel(x, y);
      for (int c = 0; c < 3; ++c) obs.at(c, y, x) = px[c] / 255.0f;
      const std::size_t i = std::size_t(y) * w + x;
      obs.at(3, y, x) = static_cast<float>(std::min<std::uint32_t>(on[i], std::uint32_t(clip))) * inv;
      obs.at(4, y, x) = static_cast<float>(std::min<std::uint32_t>(off[i], std::uint32_t(clip))) * inv;
    }
  return obs;
}

inline Observation to_observation(const RgbImage& rgb, const EventFrame& ef,
                                  int clip = kDefaultCountClip) {
  return to_observation(rgb, ef.on_counts, ef.off_counts, ef.width, ef.height, clip);
}

}  // namespace sebvs
