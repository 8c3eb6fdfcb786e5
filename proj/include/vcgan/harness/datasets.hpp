#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/diffcore/tensor.hpp"
#include "vcgan/harness/config.hpp"
#include "vcgan/rng.hpp"
#include "vcgan/training.hpp"

namespace vcgan::harness {

/// Samples with labels; samples are (n x sample shape). n may be 0, in
/// which case `samples` is empty.
struct LabeledSet {
  Shape sample_shape;
  std::optional<Tensor<float>> samples;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  const Tensor<float>& tensor() const {
    if (!samples) throw std::logic_error("LabeledSet: empty set has no sample tensor");
    return *samples;
  }
};

// --------------------------------------------------------------- mixture2d

struct MixtureSpec {
  std::size_t num_classes = 8;
  double radius = 2.0;
  double sigma = 0.05;

  /// Component means evenly spaced on the circle, before scaling.
  std::vector<std::array<double, 2>> means() const {
    std::vector<std::array<double, 2>> m(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_classes);
      m[k] = {radius * std::cos(a), radius * std::sin(a)};
    }
    return m;
  }

  /// Coordinates are divided by this so that the mixture sits in [-1, 1]
  /// up to 4 standard deviations.
  double scale() const { return radius + 4.0 * sigma; }

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("mixture: need at least 2 classes");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("mixture: degenerate covariance");
    if (!(radius > 0.0)) throw std::invalid_argument("mixture: component means coincide (radius 0)");
  }
};

namespace detail {

inline LabeledSet make_set(Shape sample_shape, std::vector<float> values, std::vector<std::size_t> labels) {
  LabeledSet s;
  s.sample_shape = sample_shape;
  if (!labels.empty()) {
    Shape full{labels.size()};
    full.insert(full.end(), sample_shape.begin(), sample_shape.end());
    s.samples = Tensor<float>(std::move(full), std::move(values));
  }
  s.labels = std::move(labels);
  return s;
}

}  // namespace detail

/// Points for the given labels, drawn from the scaled class components.
inline LabeledSet draw_mixture(const MixtureSpec& spec, std::vector<std::size_t> labels, Rng& rng) {
  spec.validate();
  const auto means = spec.means();
  const double s = spec.scale();
  std::vector<float> v;
  v.reserve(2 * labels.size());
  for (auto k : labels) {
    if (k >= spec.num_classes) throw std::out_of_range("mixture: label out of range");
    const double x = means[k][0] + spec.sigma * rng.normal();
    const double y = means[k][1] + spec.sigma * rng.normal();
    v.push_back(static_cast<float>(x / s));
    v.push_back(static_cast<float>(y / s));
  }
  return detail::make_set(Shape{2}, std::move(v), std::move(labels));
}

/// n points per class, classes interleaved (0, 1, ..., K-1, 0, 1, ...).
inline LabeledSet make_mixture_dataset(const MixtureSpec& spec, std::size_t n_per_class, Rng& rng) {
  std::vector<std::size_t> labels;
  labels.reserve(n_per_class * spec.num_classes);
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (std::size_t k = 0; k < spec.num_classes; ++k) labels.push_back(k);
  return draw_mixture(spec, std::move(labels), rng);
}

// ------------------------------------------------------------------ shapes

inline constexpr std::size_t kGlyphSize = 6;
inline constexpr std::size_t kShapeSide = 8;

using Glyph = std::array<const char*, kGlyphSize>;

inline const std::array<Glyph, 10>& glyph_table() {
  static const std::array<Glyph, 10> table = {{
      {"######", "#....#", "#....#", "#....#", "#....#", "######"},  // square
      {".####.", "#....#", "#....#", "#....#", "#....#", ".####."},  // circle
      {"#....#", ".#..#.", "..##..", "..##..", ".#..#.", "#....#"},  // cross
      {"..##..", "..##..", "######", "######", "..##..", "..##.."},  // plus
      {"......", "..##..", ".#..#.", ".#..#.", "#....#", "######"},  // triangle
      {"......", "......", "######", "######", "......", "......"},  // bar
      {"..##..", "..##..", "..##..", "..##..", "..##..", "..##.."},  // pillar
      {"##....", "###...", ".###..", "..###.", "...###", "....##"},  // diagonal
      {"......", ".####.", ".####.", ".####.", ".####.", "......"},  // block
      {"#.....", "#.....", "#.....", "#.....", "#.....", "######"},  // corner
  }};
  return table;
}

struct ShapesSpec {
  std::size_t num_classes = 10;
  bool jitter = true;
  double brightness_min = 0.6;
  double brightness_max = 1.0;

  void validate() const {
    if (num_classes < 2 || num_classes > glyph_table().size()) {
      throw std::invalid_argument("shapes: class count must be in [2, " + std::to_string(glyph_table().size()) + "]");
    }
    if (!(brightness_min > 0.0 && brightness_min <= brightness_max && brightness_max <= 1.0)) {
      throw std::invalid_argument("shapes: bad brightness range");
    }
  }
};

/// 1x8x8 glyph images: the 6x6 glyph is placed at offset 1 plus a jitter of
/// -1, 0 or +1 pixels per axis; ink intensity is uniform in the brightness
/// range and background is 0, then [0,1] is mapped to [-1,1].
inline LabeledSet draw_shapes(const ShapesSpec& spec, std::vector<std::size_t> labels, Rng& rng) {
  spec.validate();
  const std::size_t px = kShapeSide * kShapeSide;
  std::vector<float> v(labels.size() * px, -1.0f);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto k = labels[i];
    if (k >= spec.num_classes) throw std::out_of_range("shapes: label out of range");
    std::ptrdiff_t dy = 0, dx = 0;
    if (spec.jitter) {
      dy = static_cast<std::ptrdiff_t>(rng.uniform_int(3)) - 1;
      dx = static_cast<std::ptrdiff_t>(rng.uniform_int(3)) - 1;
    }
    const double b = spec.brightness_min == spec.brightness_max
                         ? spec.brightness_min
                         : spec.brightness_min + (spec.brightness_max - spec.brightness_min) * rng.uniform();
    const Glyph& g = glyph_table()[k];
    for (std::size_t r = 0; r < kGlyphSize; ++r) {
      for (std::size_t c = 0; c < kGlyphSize; ++c) {
        if (g[r][c] != '#') continue;
        const auto y = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r + 1) + dy);
        const auto x = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(c + 1) + dx);
        v[i * px + y * kShapeSide + x] = static_cast<float>(2.0 * b - 1.0);
      }
    }
  }
  return detail::make_set(Shape{1, kShapeSide, kShapeSide}, std::move(v), std::move(labels));
}

inline LabeledSet make_shapes_dataset(const ShapesSpec& spec, std::size_t n_per_class, Rng& rng) {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n_per_class; ++i)
    for (std::size_t k = 0; k < spec.num_classes; ++k) labels.push_back(k);
  return draw_shapes(spec, std::move(labels), rng);
}

// --------------------------------------------------------------------- idx

enum class IdxErrorCode { kIo, kBadMagic, kDimMismatch, kTruncated, kCountMismatch };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorCode code, const std::string& what) : std::runtime_error("idx: " + what), code_(code) {}
  IdxErrorCode code() const noexcept { return code_; }

 private:
  IdxErrorCode code_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IdxError(IdxErrorCode::kIo, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::string& b, std::size_t off, const std::string& path) {
  if (b.size() < off + 4) throw IdxError(IdxErrorCode::kTruncated, "'" + path + "' ends inside the header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
  return v;
}

inline void put_be32(std::string& b, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Reads an IDX image/label pair; pixels map from [0,255] to [-1,1].
/// Samples have shape (1, rows, cols).
inline LabeledSet load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string img = detail::read_file(images_path);
  const std::string lab = detail::read_file(labels_path);
  if (detail::be32(img, 0, images_path) != kIdxImageMagic) {
    throw IdxError(IdxErrorCode::kBadMagic, "'" + images_path + "' is not an IDX image file");
  }
  if (detail::be32(lab, 0, labels_path) != kIdxLabelMagic) {
    throw IdxError(IdxErrorCode::kBadMagic, "'" + labels_path + "' is not an IDX label file");
  }
  const std::uint32_t n = detail::be32(img, 4, images_path);
  const std::uint32_t rows = detail::be32(img, 8, images_path);
  const std::uint32_t cols = detail::be32(img, 12, images_path);
  const std::uint32_t nl = detail::be32(lab, 4, labels_path);
  if (rows == 0 || cols == 0) throw IdxError(IdxErrorCode::kDimMismatch, "zero image dimension");
  if (n != nl) {
    throw IdxError(IdxErrorCode::kCountMismatch,
                   std::to_string(n) + " images but " + std::to_string(nl) + " labels");
  }
  const std::size_t px = static_cast<std::size_t>(rows) * cols;
  const std::size_t img_bytes = 16 + static_cast<std::size_t>(n) * px;
  if (img.size() < img_bytes) throw IdxError(IdxErrorCode::kTruncated, "'" + images_path + "' is truncated");
  if (img.size() > img_bytes) {
    throw IdxError(IdxErrorCode::kDimMismatch, "'" + images_path + "' is longer than its header declares");
  }
  if (lab.size() < 8 + static_cast<std::size_t>(n)) {
    throw IdxError(IdxErrorCode::kTruncated, "'" + labels_path + "' is truncated");
  }
  if (lab.size() > 8 + static_cast<std::size_t>(n)) {
    throw IdxError(IdxErrorCode::kCountMismatch, "'" + labels_path + "' holds more labels than declared");
  }
  std::vector<float> v(static_cast<std::size_t>(n) * px);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(static_cast<unsigned char>(img[16 + i]) / 127.5 - 1.0);
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<unsigned char>(lab[8 + i]);
  return detail::make_set(Shape{1, rows, cols}, std::move(v), std::move(labels));
}

/// Writes an IDX pair; used to build fixtures.
inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const std::vector<std::vector<std::uint8_t>>& images, std::uint32_t rows, std::uint32_t cols,
                      const std::vector<std::uint8_t>& labels) {
  std::string img, lab;
  detail::put_be32(img, kIdxImageMagic);
  detail::put_be32(img, static_cast<std::uint32_t>(images.size()));
  detail::put_be32(img, rows);
  detail::put_be32(img, cols);
  for (const auto& im : images) {
    if (im.size() != static_cast<std::size_t>(rows) * cols) throw std::invalid_argument("write_idx: image size");
    img.append(im.begin(), im.end());
  }
  detail::put_be32(lab, kIdxLabelMagic);
  detail::put_be32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.append(labels.begin(), labels.end());
  std::ofstream fi(images_path, std::ios::binary), fl(labels_path, std::ios::binary);
  if (!fi || !fl) throw IdxError(IdxErrorCode::kIo, "cannot write idx fixture");
  fi << img;
  fl << lab;
}

// ------------------------------------------------------------- data source

/// Labelled draws for training and evaluation, dispatched on the config.
class DataSource {
 public:
  explicit DataSource(const ExperimentConfig& cfg) : cfg_(cfg) {
    switch (cfg.dataset) {
      case DatasetKind::kMixture2d:
        mixture_ = MixtureSpec{cfg.num_classes, cfg.mixture_radius, cfg.mixture_sigma};
        mixture_.validate();
        sample_shape_ = {2};
        break;
      case DatasetKind::kShapes:
        shapes_ = ShapesSpec{cfg.num_classes, cfg.shapes_jitter, cfg.shapes_brightness_min,
                             cfg.shapes_brightness_max};
        shapes_.validate();
        sample_shape_ = {1, kShapeSide, kShapeSide};
        break;
      case DatasetKind::kIdx:
        idx_ = load_idx(cfg.idx_images, cfg.idx_labels);
        for (auto l : idx_.labels) {
          if (l >= cfg.num_classes) {
            throw ConfigError("idx label " + std::to_string(l) + " >= num_classes " + std::to_string(cfg.num_classes));
          }
        }
        if (idx_.size() < 2) throw ConfigError("idx dataset needs at least 2 samples");
        sample_shape_ = idx_.sample_shape;
        break;
    }
  }

  const Shape& sample_shape() const noexcept { return sample_shape_; }
  std::size_t num_classes() const noexcept { return cfg_.num_classes; }

  /// Samples for the given labels. For idx data, a random stored sample of each label.
  LabeledSet draw(std::vector<std::size_t> labels, Rng& rng) const {
    switch (cfg_.dataset) {
      case DatasetKind::kMixture2d: return draw_mixture(mixture_, std::move(labels), rng);
      case DatasetKind::kShapes: return draw_shapes(shapes_, std::move(labels), rng);
      case DatasetKind::kIdx: break;
    }
    if (by_class_.empty()) {
      by_class_.resize(cfg_.num_classes);
      for (std::size_t i = 0; i < idx_.size(); ++i) by_class_[idx_.labels[i]].push_back(i);
    }
    const std::size_t px = shape_size(sample_shape_);
    std::vector<float> v;
    v.reserve(labels.size() * px);
    for (auto k : labels) {
      if (k >= cfg_.num_classes || by_class_[k].empty()) {
        throw std::out_of_range("idx: no samples for class " + std::to_string(k));
      }
      const std::size_t i = by_class_[k][rng.uniform_int(by_class_[k].size())];
      const auto src = idx_.tensor().data().subspan(i * px, px);
      v.insert(v.end(), src.begin(), src.end());
    }
    return detail::make_set(sample_shape_, std::move(v), std::move(labels));
  }

  /// Training batch with uniformly drawn classes.
  Batch<float> batch(std::size_t size, Rng& rng) const {
    std::vector<std::size_t> labels(size);
    if (cfg_.dataset == DatasetKind::kIdx) {
      std::vector<float> v;
      const std::size_t px = shape_size(sample_shape_);
      for (auto& l : labels) {
        const std::size_t i = rng.uniform_int(idx_.size());
        l = idx_.labels[i];
        const auto src = idx_.tensor().data().subspan(i * px, px);
        v.insert(v.end(), src.begin(), src.end());
      }
      Shape full{size};
      full.insert(full.end(), sample_shape_.begin(), sample_shape_.end());
      return make_batch(Tensor<float>(full, std::move(v)), std::move(labels), cfg_.num_classes);
    }
    for (auto& l : labels) l = rng.uniform_int(cfg_.num_classes);
    LabeledSet s = draw(std::move(labels), rng);
    return make_batch(std::move(*s.samples), std::move(s.labels), cfg_.num_classes);
  }

  /// Class-balanced labelled set of n samples, labels interleaved.
  LabeledSet balanced(std::size_t n, Rng& rng) const {
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % cfg_.num_classes;
    return draw(std::move(labels), rng);
  }

 private:
  ExperimentConfig cfg_;
  Shape sample_shape_;
  MixtureSpec mixture_;
  ShapesSpec shapes_;
  LabeledSet idx_;
  mutable std::vector<std::vector<std::size_t>> by_class_;
};

}  // namespace vcgan::harness
