#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sebvs/common.hpp"
#include "sebvs/event_frame.hpp"
#include "sebvs/image.hpp"

namespace sebvs::data {

enum class Task : std::uint8_t { Nav = 0, Arm = 1 };

inline const char* task_name(Task t) { return t == Task::Nav ? "nav" : "arm"; }
inline Task parse_task(const std::string& s) {
  if (s == "nav") return Task::Nav;
  if (s == "arm") return Task::Arm;
  throw ConfigError("unknown task '" + s + "' (expected nav|arm)");
}
inline std::size_t aux_dim(Task t) { return t == Task::Nav ? 3 : 6; }
inline std::size_t default_action_dim(Task t) { return t == Task::Nav ? 2 : 6; }

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 76;

struct DatasetHeader {
  Task task = Task::Nav;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t action_dim = 2;
  std::uint64_t step_count = 0;
  std::uint64_t control_dt_us = 50000;
  ScaleOffset scale_offset;
  std::uint64_t config_digest = 0;

  bool operator==(const DatasetHeader&) const = default;
};

struct EpisodeRecord {
  std::int64_t t = 0;  // us
  RgbImage rgb;
  std::vector<std::uint16_t> ev_on;
  std::vector<std::uint16_t> ev_off;
  std::vector<float> action;
  std::vector<float> aux;

  bool operator==(const EpisodeRecord&) const = default;
};

struct Episode {
  DatasetHeader header;
  std::vector<EpisodeRecord> records;
};

inline std::size_t record_bytes(const DatasetHeader& h) {
  const std::size_t px = std::size_t(h.height) * h.width;
  return 8 + 3 * px + 2 * px + 2 * px + 4 * h.action_dim + 4 * aux_dim(h.task);
}

/// Copies counts into u16 storage; returns how many cells saturated.
inline std::size_t saturate_counts(const std::vector<std::uint32_t>& in, std::vector<std::uint16_t>& out) {
  out.resize(in.size());
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] > 0xFFFFu) ++saturated;
    out[i] = static_cast<std::uint16_t>(std::min<std::uint32_t>(in[i], 0xFFFFu));
  }
  return saturated;
}

inline void check_record(const DatasetHeader& h, const EpisodeRecord& r, std::size_t index) {
  const std::size_t px = std::size_t(h.height) * h.width;
  auto fail = [&](const std::string& what) {
    throw InputError("record " + std::to_string(index) + ": " + what);
  };
  if (r.rgb.width != int(h.width) || r.rgb.height != int(h.height) || r.rgb.data.size() != px * 3)
    fail("RGB dimensions differ from header");
  if (r.ev_on.size() != px || r.ev_off.size() != px) fail("event grid size differs from header");
  if (r.action.size() != h.action_dim) fail("action length differs from header action_dim");
  if (r.aux.size() != aux_dim(h.task)) fail("aux length differs from task");
}

inline std::vector<std::uint8_t> encode_episode(const DatasetHeader& header,
                                                const std::vector<EpisodeRecord>& records) {
  DatasetHeader h = header;
  h.step_count = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    check_record(h, records[i], i);
    if (i > 0 && records[i].t < records[i - 1].t)
      throw InputError("records must be in time order (record " + std::to_string(i) + ")");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + records.size() * record_bytes(h));
  le::put_bytes(out, "EBVS", 4);
  le::put<std::uint16_t>(out, kFormatVersion);
  le::put<std::uint8_t>(out, static_cast<std::uint8_t>(h.task));
  le::put<std::uint8_t>(out, 0);
  le::put<std::uint32_t>(out, h.height);
  le::put<std::uint32_t>(out, h.width);
  le::put<std::uint32_t>(out, h.action_dim);
  le::put<std::uint64_t>(out, h.step_count);
  le::put<std::uint64_t>(out, h.control_dt_us);
  le::put<double>(out, h.scale_offset.sx);
  le::put<double>(out, h.scale_offset.sy);
  le::put<double>(out, h.scale_offset.ox);
  le::put<double>(out, h.scale_offset.oy);
  le::put<std::uint64_t>(out, h.config_digest);
  for (const auto& r : records) {
    le::put<std::int64_t>(out, r.t);
    le::put_bytes(out, r.rgb.data.data(), r.rgb.data.size());
    for (auto c : r.ev_on) le::put<std::uint16_t>(out, c);
    for (auto c : r.ev_off) le::put<std::uint16_t>(out, c);
    for (auto a : r.action) le::put<float>(out, a);
    for (auto a : r.aux) le::put<float>(out, a);
  }
  return out;
}

inline DatasetHeader decode_header(le::Reader& r, const std::string& context) {
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::string(magic, 4) != "EBVS") throw FormatError(context + ": bad magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kFormatVersion)
    throw FormatError(context + ": unsupported version " + std::to_string(version));
  DatasetHeader h;
  const auto task = r.get<std::uint8_t>();
  if (task > 1) throw FormatError(context + ": unknown task tag");
  h.task = static_cast<Task>(task);
  r.get<std::uint8_t>();
  h.height = r.get<std::uint32_t>();
  h.width = r.get<std::uint32_t>();
  h.action_dim = r.get<std::uint32_t>();
  h.step_count = r.get<std::uint64_t>();
  h.control_dt_us = r.get<std::uint64_t>();
  h.scale_offset.sx = r.get<double>();
  h.scale_offset.sy = r.get<double>();
  h.scale_offset.ox = r.get<double>();
  h.scale_offset.oy = r.get<double>();
  h.config_digest = r.get<std::uint64_t>();
  return h;
}

inline Episode decode_episode(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  le::Reader r(bytes.data(), bytes.size(), context);
  Episode ep;
  ep.header = decode_header(r, context);
  const auto& h = ep.header;
  const std::size_t rec = record_bytes(h);
  if (r.remaining() != h.step_count * rec)
    throw FormatError(context + ": payload size does not match step_count " +
                      std::to_string(h.step_count));
  const std::size_t px = std::size_t(h.height) * h.width;
  ep.records.resize(h.step_count);
  for (auto& rr : ep.records) {
    rr.t = r.get<std::int64_t>();
    rr.rgb = RgbImage(int(h.width), int(h.height));
    r.get_bytes(rr.rgb.data.data(), px * 3);
    rr.ev_on.resize(px);
    rr.ev_off.resize(px);
    for (auto& c : rr.ev_on) c = r.get<std::uint16_t>();
    for (auto& c : rr.ev_off) c = r.get<std::uint16_t>();
    rr.action.resize(h.action_dim);
    for (auto& a : rr.action) a = r.get<float>();
    rr.aux.resize(aux_dim(h.task));
    for (auto& a : rr.aux) a = r.get<float>();
  }
  return ep;
}

inline void write_episode(const std::string& path, const DatasetHeader& header,
                          const std::vector<EpisodeRecord>& records) {
  write_file_bytes(path, encode_episode(header, records));
}

inline Episode read_episode(const std::string& path) {
  return decode_episode(read_file_bytes(path), path);
}

inline DatasetHeader read_header(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  le::Reader r(bytes.data(), bytes.size(), path);
  return decode_header(r, path);
}

// Concatenation of episodes with a global sample index. Immutable after load.
class SampleStore {
public:
  struct Ref {
    std::size_t episode;
    std::size_t step;
  };

  SampleStore() = default;

  static SampleStore load_concat(const std::vector<std::string>& paths) {
    SampleStore s;
    for (const auto& p : paths) s.add(read_episode(p), p);
    return s;
  }

  void add(Episode ep, const std::string& source) {
    if (!episodes_.empty()) {
      const auto& a = episodes_.front().header;
      const auto& b = ep.header;
      if (a.task != b.task || a.height != b.height || a.width != b.width ||
          a.action_dim != b.action_dim)
        throw IncompatibleError("dataset '" + source + "' is incompatible with '" +
                                sources_.front() + "' (task/H/W/action_dim differ)");
    }
    starts_.push_back(size_);
    size_ += ep.records.size();
    episodes_.push_back(std::move(ep));
    sources_.push_back(source);
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  std::size_t episode_count() const { return episodes_.size(); }
  const Episode& episode(std::size_t i) const { return episodes_.at(i); }
  const std::vector<Episode>& episodes() const { return episodes_; }
  /// Global index of each episode's first sample.
  const std::vector<std::size_t>& boundaries() const { return starts_; }
  const std::string& source(std::size_t i) const { return sources_.at(i); }

  Ref locate(std::size_t global) const {
    if (global >= size_) throw InputError("sample index out of range");
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), global);
    const std::size_t ep = static_cast<std::size_t>(it - starts_.begin()) - 1;
    return {ep, global - starts_[ep]};
  }
  const EpisodeRecord& operator[](std::size_t global) const {
    const Ref r = locate(global);
    return episodes_[r.episode].records[r.step];
  }
  const DatasetHeader& header() const {
    if (episodes_.empty()) throw EmptyDatasetError("sample store has no episodes");
    return episodes_.front().header;
  }

private:
  std::vector<Episode> episodes_;
  std::vector<std::string> sources_;
  std::vector<std::size_t> starts_;
  std::size_t size_ = 0;
};

/// Episode files (*.ebvs) in a directory, sorted by name.
inline std::vector<std::string> list_episode_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ebvs") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

// Affine per-dimension map between raw actions and [-1, 1].
class ActionNormalizer {
public:
  ActionNormalizer() = default;
  ActionNormalizer(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size() || lo_.empty()) throw ConfigError("action bounds must have equal, non-zero length");
    for (std::size_t i = 0; i < lo_.size(); ++i)
      if (!(hi_[i] > lo_[i])) throw ConfigError("action bound " + std::to_string(i) + " has hi <= lo");
  }

  static ActionNormalizer nav(double v_max, double omega_max) {
    return {{-v_max, -omega_max}, {v_max, omega_max}};
  }
  /// Position from the workspace box, angles by pi.
  static ActionNormalizer arm(const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
    return {{lo[0], lo[1], lo[2], -kPi, -kPi, -kPi}, {hi[0], hi[1], hi[2], kPi, kPi, kPi}};
  }

  std::size_t dim() const { return lo_.size(); }
  std::size_t clamp_count() const { return clamps_; }

  std::vector<double> normalize(const std::vector<double>& raw) {
    check(raw.size());
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      double v = raw[i];
      if (v < lo_[i] || v > hi_[i]) {
        ++clamps_;
        v = std::clamp(v, lo_[i], hi_[i]);
      }
      out[i] = 2.0 * (v - lo_[i]) / (hi_[i] - lo_[i]) - 1.0;
    }
    return out;
  }

  std::vector<double> denormalize(const std::vector<double>& norm) const {
    check(norm.size());
    std::vector<double> out(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i)
      out[i] = lo_[i] + (norm[i] + 1.0) * 0.5 * (hi_[i] - lo_[i]);
    return out;
  }

  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

private:
  void check(std::size_t n) const {
    if (n != lo_.size())
      throw InputError("action has " + std::to_string(n) + " dims, normalizer expects " +
                       std::to_string(lo_.size()));
  }

  std::vector<double> lo_;
  std::vector<double> hi_;
  std::size_t clamps_ = 0;
};

struct DatasetStats {
  std::string histogram_csv;  // dim,bin,lo,hi,count
  std::string episodes_csv;   // episode,steps,mean_abs_speed,on_events,off_events
};

/// Summary tables behind the dataset plots: per-dimension histograms of the
/// normalized actions, per-episode mean absolute speed and event totals.
inline DatasetStats stats(const SampleStore& store, ActionNormalizer norm, int bins = 20) {
  if (store.empty()) throw EmptyDatasetError("cannot compute statistics of an empty dataset");
  if (bins < 1) throw ConfigError("histogram bins must be >= 1");
  const auto& h = store.header();
  const std::size_t dims = h.action_dim;
  std::vector<std::vector<std::size_t>> hist(dims, std::vector<std::size_t>(bins, 0));
  std::ostringstream eps;
  eps << "episode,steps,mean_abs_speed,on_events,off_events\n";
  eps.precision(9);
  const double dt = h.control_dt_us * 1e-6;
  for (std::size_t e = 0; e < store.episode_count(); ++e) {
    const auto& ep = store.episode(e);
    double speed_sum = 0.0;
    std::size_t speed_n = 0;
    std::uint64_t on = 0, off = 0;
    for (std::size_t k = 0; k < ep.records.size(); ++k) {
      const auto& r = ep.records[k];
      std::vector<double> raw(r.action.begin(), r.action.end());
      const auto n = norm.normalize(raw);
      for (std::size_t d = 0; d < dims; ++d) {
        int b = static_cast<int>(std::floor((n[d] + 1.0) / 2.0 * bins));
        hist[d][static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
      }
      on += std::accumulate(r.ev_on.begin(), r.ev_on.end(), std::uint64_t{0});
      off += std::accumulate(r.ev_off.begin(), r.ev_off.end(), std::uint64_t{0});
      if (h.task == Task::Nav) {
        speed_sum += std::abs(r.action[0]);
        ++speed_n;
      } else if (k > 0 && dt > 0) {
        const auto& p = ep.records[k - 1].action;
        speed_sum += std::sqrt(std::pow(r.action[0] - p[0], 2) + std::pow(r.action[1] - p[1], 2) +
                               std::pow(r.action[2] - p[2], 2)) / dt;
        ++speed_n;
      }
    }
    eps << e << "," << ep.records.size() << "," << (speed_n ? speed_sum / speed_n : 0.0) << ","
        << on << "," << off << "\n";
  }
  std::ostringstream hs;
  hs << "dim,bin,lo,hi,count\n";
  hs.precision(9);
  for (std::size_t d = 0; d < dims; ++d)
    for (int b = 0; b < bins; ++b)
      hs << d << "," << b << "," << (-1.0 + 2.0 * b / bins) << "," << (-1.0 + 2.0 * (b + 1) / bins)
         << "," << hist[d][b] << "\n";
  return {hs.str(), eps.str()};
}

}  // namespace sebvs::data
