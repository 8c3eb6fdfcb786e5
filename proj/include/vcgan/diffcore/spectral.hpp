#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "vcgan/diffcore/ops.hpp"
#include "vcgan/rng.hpp"

namespace vcgan {

/// Persistent left singular vector estimate for one weight.
template <typename T>
struct SpectralState {
  Tensor<T> u;
  std::size_t power_iterations = 1;

  static SpectralState random(std::size_t out_dim, Rng& rng, std::size_t iterations = 1) {
    Tensor<T> u(Shape{out_dim});
    double norm = 0.0;
    for (std::size_t i = 0; i < out_dim; ++i) {
      const double v = rng.normal();
      u[i] = static_cast<T>(v);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < out_dim; ++i) u[i] = static_cast<T>(u[i] / norm);
    return {std::move(u), iterations};
  }
};

template <typename T>
inline constexpr T kSpectralEpsilon = T(1e-12);

/// Result of estimating the top singular triple of W viewed as (rows x rest).
template <typename T>
struct SpectralEstimate {
  T sigma;
  std::vector<T> u;
  std::vector<T> v;
};

/// Runs `iterations` rounds of power iteration on W (rows = W.dim(0)), updating
/// `u` in place, then returns sigma = u^T W v with v = W^T u / |W^T u|.
/// Zero matrices leave u unchanged and give sigma = 0.
template <typename T>
SpectralEstimate<T> power_iterate(const Tensor<T>& weight, Tensor<T>& u, std::size_t iterations) {
  const std::size_t rows = weight.dim(0);
  const std::size_t cols = weight.size() / rows;
  if (u.size() != rows) {
    detail::shape_error("spectral_normalize", "u has length " + std::to_string(u.size()) +
                                                  ", weight has " + std::to_string(rows) + " rows");
  }
  auto W = detail::as_matrix(weight, rows, cols);
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Vec uv = Eigen::Map<const Vec>(u.data().data(), static_cast<Eigen::Index>(rows));
  Vec vv(static_cast<Eigen::Index>(cols));

  auto normalized = [](const Vec& x, Vec& dst) {
    const T n = x.norm();
    if (n <= kSpectralEpsilon<T>) return false;
    dst = x / n;
    return true;
  };

  for (std::size_t it = 0; it < iterations; ++it) {
    if (!normalized(W.transpose() * uv, vv)) break;
    Vec next(static_cast<Eigen::Index>(rows));
    if (!normalized(W * vv, next)) break;
    uv = next;
  }
  for (std::size_t i = 0; i < rows; ++i) u[i] = uv[static_cast<Eigen::Index>(i)];

  SpectralEstimate<T> est{T{0}, std::vector<T>(rows), std::vector<T>(cols, T{0})};
  Vec wtu = W.transpose() * uv;
  if (normalized(wtu, vv)) {
    est.sigma = uv.dot(W * vv);
    for (std::size_t j = 0; j < cols; ++j) est.v[j] = vv[static_cast<Eigen::Index>(j)];
  }
  for (std::size_t i = 0; i < rows; ++i) est.u[i] = uv[static_cast<Eigen::Index>(i)];
  return est;
}

/// Returns W / sigma, with sigma from `iterations` power-iteration rounds on
/// the persistent `u` (0 rounds reuses u as is). Gradients treat u and v as
/// constants: dW = G / sigma - <G, W> / sigma^2 * u v^T.
template <typename T>
Var<T> spectral_normalize(const Var<T>& weight, Tensor<T>& u, std::size_t iterations) {
  const Tensor<T>& wv = weight.value();
  auto est = power_iterate(wv, u, iterations);
  const T sigma = std::max(est.sigma, kSpectralEpsilon<T>);
  Tensor<T> out(wv.shape());
  for (std::size_t i = 0; i < wv.size(); ++i) out[i] = wv[i] / sigma;
  const std::size_t rows = wv.dim(0), cols = wv.size() / rows;
  return weight.tape().record(
      "spectral_normalize", std::move(out), {weight},
      [weight, sigma, est = std::move(est), rows, cols](Tape<T>& tape, const Tensor<T>& g) {
        T* gw = tape.grad_ptr(weight);
        const Tensor<T>& w = tape.value(weight);
        T inner{0};
        for (std::size_t i = 0; i < w.size(); ++i) inner += g[i] * w[i];
        const T coef = inner / (sigma * sigma);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t k = r * cols + c;
            gw[k] += g[k] / sigma - coef * est.u[r] * est.v[c];
          }
      });
}

/// Value-level convenience: normalizes a weight and advances the state.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, SpectralState<T>& state) {
  auto est = power_iterate(weight, state.u, state.power_iterations);
  const T sigma = std::max(est.sigma, kSpectralEpsilon<T>);
  Tensor<T> out(weight.shape());
  for (std::size_t i = 0; i < weight.size(); ++i) out[i] = weight[i] / sigma;
  return out;
}

}  // namespace vcgan
