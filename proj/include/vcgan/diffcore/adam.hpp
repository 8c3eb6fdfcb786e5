#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcgan/diffcore/tape.hpp"

namespace vcgan {

struct OptimizerConfig {
  double learning_rate = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("optimizer: learning_rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer: beta1 must be in (0,1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer: beta2 must be in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be > 0");
  }
};

/// Adam over a fixed subset of a ParameterStore, addressed by index.
template <typename T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  Adam() = default;

  Adam(const ParameterStore<T>& store, std::vector<std::size_t> params, OptimizerConfig config)
      : config_(config), params_(std::move(params)) {
    config_.validate();
    moments_.reserve(params_.size());
    for (auto i : params_) {
      moments_.push_back({Tensor<T>(store[i].value.shape()), Tensor<T>(store[i].value.shape())});
    }
  }

  /// One bias-corrected update from the gradients currently held in the store.
  void step(ParameterStore<T>& store) {
    ++step_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<T>& p = store[params_[k]];
      auto& mom = moments_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i];
        mom.m[i] = static_cast<T>(b1 * mom.m[i] + (1.0 - b1) * g);
        mom.v[i] = static_cast<T>(b2 * mom.v[i] + (1.0 - b2) * g * g);
        const double m_hat = mom.m[i] / c1;
        const double v_hat = mom.v[i] / c2;
        p.value[i] -= static_cast<T>(config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
    }
  }

  void zero_grad(ParameterStore<T>& store) const {
    for (auto i : params_) store[i].zero_grad();
  }

  const OptimizerConfig& config() const noexcept { return config_; }
  const std::vector<std::size_t>& params() const noexcept { return params_; }
  std::uint64_t step_count() const noexcept { return step_; }
  void set_step_count(std::uint64_t s) noexcept { step_ = s; }
  std::vector<Moments>& moments() noexcept { return moments_; }
  const std::vector<Moments>& moments() const noexcept { return moments_; }

 private:
  OptimizerConfig config_;
  std::vector<std::size_t> params_;
  std::vector<Moments> moments_;
  std::uint64_t step_ = 0;
};

}  // namespace vcgan
