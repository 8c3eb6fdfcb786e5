#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/diffcore/tensor.hpp"

namespace vcgan::harness {

class EmitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw EmitError("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw EmitError("write to '" + path + "' failed");
}

/// [-1, 1] -> [0, 255], rounded, clamped.
inline std::uint8_t to_pixel(float v) {
  const double p = std::round((static_cast<double>(v) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

/// Tiles the first rows*cols samples of an (n, C, H, W) tensor row-major into
/// one image: binary PGM for C = 1, binary PPM for C = 3.
inline std::string sample_grid_bytes(const Tensor<float>& samples, std::size_t rows, std::size_t cols) {
  if (samples.rank() != 4) throw EmitError("sample grid needs (n, C, H, W) samples, got " + shape_string(samples.shape()));
  const std::size_t n = samples.dim(0), ch = samples.dim(1), h = samples.dim(2), w = samples.dim(3);
  if (ch != 1 && ch != 3) throw EmitError("sample grid supports 1 or 3 channels");
  if (rows == 0 || cols == 0 || rows * cols > n) {
    throw EmitError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " needs more than " +
                    std::to_string(n) + " samples");
  }
  const std::size_t gw = cols * w, gh = rows * h;
  std::string out = (ch == 1 ? "P5\n" : "P6\n") + std::to_string(gw) + " " + std::to_string(gh) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + gw * gh * ch);
  for (std::size_t s = 0; s < rows * cols; ++s) {
    const std::size_t r0 = (s / cols) * h, c0 = (s % cols) * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < ch; ++c) {
          const float v = samples[((s * ch + c) * h + y) * w + x];
          out[header + ((r0 + y) * gw + (c0 + x)) * ch + c] = static_cast<char>(to_pixel(v));
        }
      }
    }
  }
  return out;
}

inline void emit_sample_grid(const Tensor<float>& samples, std::size_t rows, std::size_t cols,
                             const std::string& path) {
  write_file(path, sample_grid_bytes(samples, rows, cols));
}

struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary PGM/PPM with maxval 255.
inline PnmImage read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw EmitError("cannot open '" + path + "'");
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255 || w == 0 || h == 0) {
    throw EmitError("'" + path + "' is not an 8-bit binary PGM/PPM");
  }
  f.get();
  PnmImage img{w, h, magic == "P5" ? 1u : 3u, {}};
  img.pixels.resize(w * h * img.channels);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw EmitError("'" + path + "' is truncated");
  return img;
}

inline std::string format_sig6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// CSV `x,y,class` with 6 significant digits.
inline std::string scatter_csv(const std::vector<float>& xy, const std::vector<std::size_t>& labels) {
  if (xy.size() != 2 * labels.size()) throw EmitError("scatter: need two coordinates per label");
  std::string out = "x,y,class\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += format_sig6(xy[2 * i]) + "," + format_sig6(xy[2 * i + 1]) + "," + std::to_string(labels[i]) + "\n";
  }
  return out;
}

inline void emit_scatter(const std::vector<float>& xy, const std::vector<std::size_t>& labels,
                         const std::string& path) {
  write_file(path, scatter_csv(xy, labels));
}

inline void emit_scatter(const Tensor<float>& points, const std::vector<std::size_t>& labels,
                         const std::string& path) {
  if (points.rank() != 2 || points.dim(1) != 2) throw EmitError("scatter: points must be (n x 2)");
  emit_scatter(std::vector<float>(points.data().begin(), points.data().end()), labels, path);
}

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::size_t label = 0;
};

inline std::vector<ScatterPoint> read_scatter(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw EmitError("cannot open '" + path + "'");
  std::string line;
  std::getline(f, line);
  if (line != "x,y,class") throw EmitError("'" + path + "' lacks the x,y,class header");
  std::vector<ScatterPoint> out;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    out.push_back({std::stod(a), std::stod(b), static_cast<std::size_t>(std::stoul(c))});
  }
  return out;
}

}  // namespace vcgan::harness
