#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sebvs/common.hpp"

namespace sebvs {

// 8-bit interleaved RGB image as produced by the renderers and stored in
// dataset files.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(std::size_t(w) * h * 3, 0) {}

  std::uint8_t* pixel(int x, int y) { return &data[(std::size_t(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const {
    return &data[(std::size_t(y) * width + x) * 3];
  }
  bool operator==(const RgbImage&) const = default;
};

// Interleaved float image with 1 or 3 channels, values nominally in [0,1].
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

  float& at(int x, int y, int c = 0) {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
};

inline FloatImage to_float(const RgbImage& img) {
  FloatImage out(img.width, img.height, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = static_cast<float>(img.data[i]) / 255.0f;
  return out;
}

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\n' || c == '\r' || c == '\t') {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  int v = -1;
  in >> v;
  if (!in || v < 0) throw FormatError("malformed PNM header in '" + path + "'");
  return v;
}

}  // namespace detail

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255. Grayscale input
/// is returned as a 1-channel image.
inline FloatImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string magic;
  in >> magic;
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError("'" + path + "' is not a binary PGM/PPM file");
  const int w = detail::read_pnm_int(in, path);
  const int h = detail::read_pnm_int(in, path);
  const int maxval = detail::read_pnm_int(in, path);
  if (maxval != 255) throw FormatError("'" + path + "': only maxval 255 is supported");
  in.get();
  std::vector<unsigned char> raw(std::size_t(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw FormatError("'" + path + "': truncated pixel data");
  FloatImage img(w, h, channels);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
  return img;
}

inline void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace sebvs
