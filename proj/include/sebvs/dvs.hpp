#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "sebvs/common.hpp"
#include "sebvs/image.hpp"

namespace sebvs::dvs {

// Pixel-model parameters. Defaults are the emulator node's published defaults.
struct EmulatorConfig {
  double pos_thres = 0.3;
  double neg_thres = 0.3;
  double sigma_thres = 0.09;
  double cutoff_hz = 15.0;  // <= 0 disables the photoreceptor low-pass
  double leak_rate_hz = 0.0;
  double downsample = 0.5;
  bool blur = true;
  double log_eps = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(pos_thres > 0)) throw ConfigError("emulator.pos_thres must be > 0");
    if (!(neg_thres > 0)) throw ConfigError("emulator.neg_thres must be > 0");
    if (!(sigma_thres >= 0)) throw ConfigError("emulator.sigma_thres must be >= 0");
    if (!(leak_rate_hz >= 0)) throw ConfigError("emulator.leak_rate_hz must be >= 0");
    if (!(downsample > 0 && downsample <= 1))
      throw ConfigError("emulator.downsample must be in (0,1]");
    if (!(log_eps > 0)) throw ConfigError("emulator.log_eps must be > 0");
    if (!std::isfinite(cutoff_hz)) throw ConfigError("emulator.cutoff_hz must be finite");
  }
};

// Sampled thresholds are never allowed below this floor.
inline constexpr double kMinThreshold = 0.01;
// Slack on threshold crossings so that a log step of exactly k thresholds
// survives floating-point rounding of ln().
inline constexpr double kCrossingTolerance = 1e-6;

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int64_t t = 0;  // microseconds
  std::int8_t p = 1;   // +1 ON, -1 OFF

  bool operator==(const Event&) const = default;
};

// Canonical stream order: time, then row, column, polarity.
inline bool canonical_less(const Event& a, const Event& b) {
  return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
}

struct EventBatch {
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
};

struct EmulatorState {
  EmulatorConfig cfg;
  int in_width = 0;
  int in_height = 0;
  int width = 0;
  int height = 0;
  std::vector<double> mem;
  std::vector<double> lp;
  std::vector<double> theta_on;
  std::vector<double> theta_off;
  std::int64_t last_t = 0;
  std::mt19937_64 rng;
  bool initialized = false;
};

inline int scaled_dim(int in, double downsample) {
  return std::max(1, static_cast<int>(std::lround(in * downsample)));
}

inline EmulatorState init_emulator(const EmulatorConfig& cfg, int in_width, int in_height) {
  cfg.validate();
  if (in_width < 16 || in_height < 16)
    throw InputError("emulator input must be at least 16x16, got " +
                     std::to_string(in_width) + "x" + std::to_string(in_height));
  EmulatorState s;
  s.cfg = cfg;
  s.in_width = in_width;
  s.in_height = in_height;
  s.width = scaled_dim(in_width, cfg.downsample);
  s.height = scaled_dim(in_height, cfg.downsample);
  const std::size_t n = std::size_t(s.width) * s.height;
  s.mem.assign(n, 0.0);
  s.lp.assign(n, 0.0);
  s.rng.seed(cfg.seed);

  auto sample = [&](double mean, std::vector<double>& out) {
    out.resize(n);
    if (cfg.sigma_thres == 0.0) {
      std::fill(out.begin(), out.end(), std::max(mean, kMinThreshold));
      return;
    }
    std::normal_distribution<double> dist(mean, cfg.sigma_thres);
    for (auto& v : out) v = std::max(dist(s.rng), kMinThreshold);
  };
  sample(cfg.pos_thres, s.theta_on);
  sample(cfg.neg_thres, s.theta_off);
  return s;
}

/// Grayscale -> bilinear downsample -> optional 3x3 Gaussian -> log.
/// Output is row-major at the emulator resolution.
inline std::vector<double> preprocess(const FloatImage& frame, const EmulatorConfig& cfg,
                                      int out_width, int out_height) {
  if (frame.channels != 1 && frame.channels != 3)
    throw InputError("frame must have 1 or 3 channels");
  const int w = frame.width, h = frame.height;

  std::vector<double> gray(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v;
      if (frame.channels == 3)
        v = 0.299 * frame.at(x, y, 0) + 0.587 * frame.at(x, y, 1) + 0.114 * frame.at(x, y, 2);
      else
        v = frame.at(x, y, 0);
      gray[std::size_t(y) * w + x] = v;
    }

  std::vector<double> small(std::size_t(out_width) * out_height);
  if (out_width == w && out_height == h) {
    small = gray;
  } else {
    const double sx = double(w) / out_width, sy = double(h) / out_height;
    for (int y = 0; y < out_height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < out_width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double top = (1 - wx) * gray[std::size_t(y0) * w + x0] + wx * gray[std::size_t(y0) * w + x1];
        const double bot = (1 - wx) * gray[std::size_t(y1) * w + x0] + wx * gray[std::size_t(y1) * w + x1];
        small[std::size_t(y) * out_width + x] = (1 - wy) * top + wy * bot;
      }
    }
  }

  if (cfg.blur) {
    static constexpr double k[3] = {1.0, 2.0, 1.0};
    std::vector<double> blurred(small.size());
    for (int y = 0; y < out_height; ++y)
      for (int x = 0; x < out_width; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          const int yy = std::clamp(y + dy, 0, out_height - 1);
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, out_width - 1);
            acc += k[dy + 1] * k[dx + 1] * small[std::size_t(yy) * out_width + xx];
          }
        }
        blurred[std::size_t(y) * out_width + x] = acc / 16.0;
      }
    small.swap(blurred);
  }

  for (auto& v : small) v = std::log(std::max(v, cfg.log_eps));
  return small;
}

inline std::vector<double> preprocess(const FloatImage& frame, const EmulatorState& s) {
  if (frame.width != s.in_width || frame.height != s.in_height)
    throw InputError("frame is " + std::to_string(frame.width) + "x" +
                     std::to_string(frame.height) + ", emulator expects " +
                     std::to_string(s.in_width) + "x" + std::to_string(s.in_height));
  return preprocess(frame, s.cfg, s.width, s.height);
}

/// Advances the pixel model to time t (microseconds) and returns the events
/// fired in (last_t, t], sorted canonically.
inline EventBatch emit_events(EmulatorState& s, const FloatImage& frame, std::int64_t t) {
  std::vector<double> logi = preprocess(frame, s);
  EventBatch batch;
  if (!s.initialized) {
    s.mem = logi;
    s.lp = std::move(logi);
    s.last_t = t;
    s.initialized = true;
    return batch;
  }
  if (t <= s.last_t)
    throw TemporalOrderError("frame time " + std::to_string(t) +
                             " us does not follow previous frame at " +
                             std::to_string(s.last_t) + " us");

  const std::int64_t dt_us = t - s.last_t;
  const double dt = dt_us * 1e-6;
  const double alpha =
      s.cfg.cutoff_hz > 0 ? dt / (dt + 1.0 / (2.0 * kPi * s.cfg.cutoff_hz)) : 1.0;

  auto stamp = [&](int k, int n) {
    const double frac = double(k) / double(n + 1);
    std::int64_t ts = s.last_t + std::llround(frac * double(dt_us));
    return std::clamp(ts, s.last_t + 1, t);
  };

  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const std::size_t i = std::size_t(y) * s.width + x;
      double& lp = s.lp[i];
      double& mem = s.mem[i];
      lp += alpha * (logi[i] - lp);

      int n = 0;
      std::int8_t pol = 0;
      if (lp - mem >= s.theta_on[i] - kCrossingTolerance) {
        pol = 1;
        while (lp - mem >= s.theta_on[i] - kCrossingTolerance) {
          mem += s.theta_on[i];
          ++n;
        }
      } else if (mem - lp >= s.theta_off[i] - kCrossingTolerance) {
        pol = -1;
        while (mem - lp >= s.theta_off[i] - kCrossingTolerance) {
          mem -= s.theta_off[i];
          ++n;
        }
      }
      for (int k = 1; k <= n; ++k)
        batch.events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                stamp(k, n), pol});
    }
  }

  if (s.cfg.leak_rate_hz > 0) {
    std::poisson_distribution<int> leak(s.cfg.leak_rate_hz * dt);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        const std::size_t i = std::size_t(y) * s.width + x;
        const int n = leak(s.rng);
        for (int k = 1; k <= n; ++k) {
          batch.events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                  stamp(k, n), 1});
          s.mem[i] -= s.theta_on[i];
        }
      }
  }

  std::sort(batch.events.begin(), batch.events.end(), canonical_less);
  s.last_t = t;
  return batch;
}

// EVT1 container: "EVT1", u32 width, u32 height, u64 count, then count
// records of (u16 x, u16 y, u64 t_us, i8 p), all little-endian.
inline std::vector<std::uint8_t> encode_evt1(int width, int height,
                                             const std::vector<Event>& events) {
  std::vector<std::uint8_t> out;
  out.reserve(20 + events.size() * 13);
  le::put_bytes(out, "EVT1", 4);
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(width));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(height));
  le::put<std::uint64_t>(out, events.size());
  for (const auto& e : events) {
    le::put<std::uint16_t>(out, e.x);
    le::put<std::uint16_t>(out, e.y);
    le::put<std::uint64_t>(out, static_cast<std::uint64_t>(e.t));
    le::put<std::int8_t>(out, e.p);
  }
  return out;
}

struct EventFile {
  int width = 0;
  int height = 0;
  std::vector<Event> events;
};

inline EventFile decode_evt1(const std::vector<std::uint8_t>& bytes,
                             const std::string& context = "EVT1 stream") {
  le::Reader r(bytes.data(), bytes.size(), context);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string(magic, 4) != "EVT1") throw FormatError(context + ": bad magic");
  EventFile f;
  f.width = static_cast<int>(r.get<std::uint32_t>());
  f.height = static_cast<int>(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining() / 13) throw FormatError(context + ": record count exceeds file size");
  f.events.resize(count);
  for (auto& e : f.events) {
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.t = static_cast<std::int64_t>(r.get<std::uint64_t>());
    e.p = r.get<std::int8_t>();
    if (e.p != 1 && e.p != -1) throw FormatError(context + ": invalid polarity");
  }
  return f;
}

}  // namespace sebvs::dvs
