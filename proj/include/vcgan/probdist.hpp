#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vcgan/diffcore/ops.hpp"
#include "vcgan/rng.hpp"

namespace vcgan {

inline constexpr double kLogVarianceMin = -10.0;
inline constexpr double kLogVarianceMax = 10.0;

/// Diagonal Gaussian posterior, parameterized by mean and log-variance.
/// Log-variance is clamped to [-10, 10] on construction.
template <typename T>
class DiagonalGaussian {
 public:
  DiagonalGaussian(std::vector<T> mean, std::vector<T> log_variance)
      : mean_(std::move(mean)), log_variance_(std::move(log_variance)) {
    if (mean_.size() != log_variance_.size()) {
      throw std::invalid_argument("DiagonalGaussian: mean and log-variance lengths differ");
    }
    for (auto& lv : log_variance_) {
      lv = std::clamp(lv, static_cast<T>(kLogVarianceMin), static_cast<T>(kLogVarianceMax));
    }
  }

  static DiagonalGaussian standard(std::size_t dim) {
    return DiagonalGaussian(std::vector<T>(dim, T{0}), std::vector<T>(dim, T{0}));
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<T>& mean() const noexcept { return mean_; }
  const std::vector<T>& log_variance() const noexcept { return log_variance_; }
  T stddev(std::size_t j) const { return std::exp(log_variance_[j] / 2); }

 private:
  std::vector<T> mean_;
  std::vector<T> log_variance_;
};

/// z = mean + exp(log_variance / 2) * epsilon.
template <typename T>
std::vector<T> reparameterize(const DiagonalGaussian<T>& dist, std::span<const T> epsilon) {
  if (epsilon.size() != dist.dim()) {
    throw std::invalid_argument("reparameterize: epsilon has length " +
                                std::to_string(epsilon.size()) + ", latent dim is " +
                                std::to_string(dist.dim()));
  }
  std::vector<T> z(dist.dim());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = dist.mean()[j] + dist.stddev(j) * epsilon[j];
  return z;
}

/// Differentiable reparameterization on a tape; mean/log_var are (batch x J)
/// and epsilon a constant of the same shape.
template <typename T>
Var<T> reparameterize(const Var<T>& mean, const Var<T>& log_variance, const Tensor<T>& epsilon) {
  detail::require_same_shape("reparameterize", mean.shape(), log_variance.shape());
  detail::require_same_shape("reparameterize", mean.shape(), epsilon.shape());
  Var<T> sigma = exp(scale(log_variance, T(0.5)));
  return add(mean, mul(sigma, mean.tape().constant(epsilon)));
}

/// KL(N(mean, diag(exp(log_var))) || N(0, I)) = -1/2 sum_j (1 + log_var - mean^2 - exp(log_var)).
template <typename T>
double kl_to_standard_normal(const DiagonalGaussian<T>& dist) {
  double kl = 0.0;
  for (std::size_t j = 0; j < dist.dim(); ++j) {
    const double m = dist.mean()[j];
    const double lv = dist.log_variance()[j];
    kl += -0.5 * (1.0 + lv - m * m - std::exp(lv));
  }
  return kl;
}

/// Per-row KL on a tape; returns shape (batch).
template <typename T>
Var<T> kl_to_standard_normal(const Var<T>& mean, const Var<T>& log_variance) {
  detail::require_same_shape("kl_to_standard_normal", mean.shape(), log_variance.shape());
  // 1 + lv - mu^2 - exp(lv), summed per row, times -1/2
  Var<T> terms = sub(sub(add_scalar(log_variance, T{1}), square(mean)), exp(log_variance));
  return scale(sum_rows(terms), T(-0.5));
}

/// Symmetric truncation band: |z_j - mean_j| <= multiplier * sigma_j, or none.
class TruncationRange {
 public:
  TruncationRange() = default;

  static TruncationRange none() { return {}; }
  static TruncationRange sigma(double multiplier) {
    if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
      throw std::invalid_argument("TruncationRange: multiplier must be a positive finite number");
    }
    TruncationRange r;
    r.multiplier_ = multiplier;
    return r;
  }

  /// Accepts "none", "normal", or a positive number with an optional "sigma" suffix.
  static TruncationRange parse(std::string text) {
    if (text == "none" || text == "normal") return none();
    if (text.ends_with("sigma")) text.resize(text.size() - 5);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw std::invalid_argument("TruncationRange: cannot parse '" + text + "'");
    }
    return sigma(value);
  }

  /// The sweep used for test-time truncation ablations.
  static std::vector<TruncationRange> standard_sweep() {
    return {none(), sigma(2.0), sigma(1.5), sigma(1.0), sigma(0.5)};
  }

  bool truncated() const noexcept { return multiplier_.has_value(); }
  double multiplier() const { return multiplier_.value(); }

  std::string to_string() const {
    if (!multiplier_) return "none";
    std::ostringstream os;
    os << *multiplier_;
    return os.str();
  }

  bool operator==(const TruncationRange&) const = default;

 private:
  std::optional<double> multiplier_;
};

inline constexpr int kMaxTruncationRedraws = 10000;

/// Standard normal draw, redrawn while |x| > multiplier.
inline double truncated_standard_normal(const TruncationRange& range, Rng& rng) {
  double x = rng.normal();
  if (!range.truncated()) return x;
  const double m = range.multiplier();
  for (int tries = 0; std::abs(x) > m; ++tries) {
    if (tries >= kMaxTruncationRedraws) {
      throw std::runtime_error("sample_truncated: exceeded " + std::to_string(kMaxTruncationRedraws) +
                               " redraws for range " + range.to_string());
    }
    x = rng.normal();
  }
  return x;
}

/// Per-coordinate rejection sampling from the posterior restricted to
/// mean +/- multiplier * sigma. Equivalent to reparameterizing with a
/// truncated standard normal epsilon.
template <typename T>
std::vector<T> sample_truncated(const DiagonalGaussian<T>& dist, const TruncationRange& range,
                                Rng& rng) {
  std::vector<T> eps(dist.dim());
  for (auto& e : eps) e = static_cast<T>(truncated_standard_normal(range, rng));
  return reparameterize(dist, std::span<const T>(eps));
}

/// Sample mean and unbiased covariance of a feature set.
struct EmpiricalGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t sample_count = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// `samples` is (n x d) row-major.
inline EmpiricalGaussian fit_gaussian(std::span<const double> samples, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("fit_gaussian: zero feature dimension");
  if (samples.size() % dim != 0) {
    throw std::invalid_argument("fit_gaussian: sample buffer is not a multiple of the dimension");
  }
  const std::size_t n = samples.size() / dim;
  if (n < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples, got " + std::to_string(n));
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
      samples.data(), static_cast<Eigen::Index>(n), d);
  EmpiricalGaussian g;
  g.sample_count = n;
  g.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  // Store exactly symmetric.
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) g.covariance(j, i) = g.covariance(i, j);
  return g;
}

template <typename T>
EmpiricalGaussian fit_gaussian(const Tensor<T>& samples) {
  std::vector<double> buf(samples.data().begin(), samples.data().end());
  return fit_gaussian(buf, samples.cols());
}

}  // namespace vcgan
