#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vcgan/diffcore/ops.hpp"

namespace vcgan {

enum class NormMode {
  kTrain,        ///< batch statistics, running statistics updated
  kTrainFrozen,  ///< batch statistics, running statistics left untouched
  kInference,    ///< running statistics
};

template <typename T>
struct BatchNormConfig {
  T epsilon = T(1e-5);
  T momentum = T(0.9);  ///< running = momentum * running + (1 - momentum) * batch
};

/// Normalizes x viewed as (batch, channels, spatial...) per channel, without
/// the affine part. `running_mean` / `running_var` have one entry per channel.
template <typename T>
Var<T> normalize_batch(const Var<T>& x, NormMode mode, Tensor<T>& running_mean,
                       Tensor<T>& running_var, BatchNormConfig<T> cfg = {}) {
  const Shape& s = x.shape();
  if (s.size() < 2) detail::shape_error("batch_norm", "input needs a channel axis");
  const std::size_t batch = s[0], channels = s[1];
  const std::size_t inner = x.value().size() / (batch * channels);
  if (running_mean.size() != channels || running_var.size() != channels) {
    detail::shape_error("batch_norm", "running statistics sized for " +
                                          std::to_string(running_mean.size()) + " channels, input has " +
                                          std::to_string(channels));
  }
  const bool use_batch = mode != NormMode::kInference;
  if (use_batch && batch * inner < 2) {
    detail::shape_error("batch_norm", "batch statistics need at least 2 values per channel");
  }
  const Tensor<T>& xv = x.value();
  const T count = static_cast<T>(batch * inner);
  std::vector<T> inv_std(channels);
  Tensor<T> out(s);
  for (std::size_t c = 0; c < channels; ++c) {
    T mu, var;
    if (use_batch) {
      T acc{0};
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) acc += xv[(b * channels + c) * inner + i];
      mu = acc / count;
      T sq{0};
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const T d = xv[(b * channels + c) * inner + i] - mu;
          sq += d * d;
        }
      var = sq / count;
      if (mode == NormMode::kTrain) {
        running_mean[c] = cfg.momentum * running_mean[c] + (1 - cfg.momentum) * mu;
        running_var[c] = cfg.momentum * running_var[c] + (1 - cfg.momentum) * var;
      }
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = 1 / std::sqrt(var + cfg.epsilon);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (b * channels + c) * inner + i;
        out[k] = (xv[k] - mu) * inv_std[c];
      }
  }
  return x.tape().record(
      "batch_norm", out, {x},
      [x, out, inv_std = std::move(inv_std), batch, channels, inner, use_batch](
          Tape<T>& tape, const Tensor<T>& g) {
        T* gx = tape.grad_ptr(x);
        const T n = static_cast<T>(batch * inner);
        for (std::size_t c = 0; c < channels; ++c) {
          if (!use_batch) {
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t k = (b * channels + c) * inner + i;
                gx[k] += g[k] * inv_std[c];
              }
            continue;
          }
          T gsum{0}, gxhat{0};
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (b * channels + c) * inner + i;
              gsum += g[k];
              gxhat += g[k] * out[k];
            }
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (b * channels + c) * inner + i;
              gx[k] += inv_std[c] / n * (n * g[k] - gsum - out[k] * gxhat);
            }
        }
      });
}

/// y = x * gain[c] + bias[c] per channel.
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& gain, const Var<T>& bias) {
  const Shape& s = x.shape();
  if (s.size() < 2) detail::shape_error("channel_affine", "input needs a channel axis");
  const std::size_t batch = s[0], channels = s[1], inner = x.value().size() / (batch * channels);
  if (gain.value().size() != channels || bias.value().size() != channels) {
    detail::shape_error("channel_affine", "gain/bias length does not match " +
                                              std::to_string(channels) + " channels");
  }
  Tensor<T> out(s);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (b * channels + c) * inner + i;
        out[k] = xv[k] * gv[c] + bv[c];
      }
  return x.tape().record("channel_affine", std::move(out), {x, gain, bias},
                         [x, gain, bias, batch, channels, inner](Tape<T>& tape, const Tensor<T>& g) {
                           T* gx = tape.grad_ptr(x);
                           T* gg = tape.grad_ptr(gain);
                           T* gb = tape.grad_ptr(bias);
                           const Tensor<T>& xv = tape.value(x);
                           const Tensor<T>& gv = tape.value(gain);
                           for (std::size_t b = 0; b < batch; ++b)
                             for (std::size_t c = 0; c < channels; ++c)
                               for (std::size_t i = 0; i < inner; ++i) {
                                 const std::size_t k = (b * channels + c) * inner + i;
                                 if (gx) gx[k] += g[k] * gv[c];
                                 if (gg) gg[c] += g[k] * xv[k];
                                 if (gb) gb[c] += g[k];
                               }
                         });
}

/// Per-sample affine with rows selected by class: y = x * gain[cls, c] + bias[cls, c].
/// gain/bias tables are (num_classes, channels).
template <typename T>
Var<T> class_affine(const Var<T>& x, const Var<T>& gain_table, const Var<T>& bias_table,
                    std::span<const std::size_t> class_index) {
  const Shape& s = x.shape();
  if (s.size() < 2) detail::shape_error("class_affine", "input needs a channel axis");
  const std::size_t batch = s[0], channels = s[1], inner = x.value().size() / (batch * channels);
  detail::require_rank("class_affine", gain_table.shape(), 2);
  const std::size_t classes = gain_table.shape()[0];
  if (gain_table.shape()[1] != channels || bias_table.shape() != gain_table.shape()) {
    detail::shape_error("class_affine", "gain/bias tables must be (classes x " +
                                            std::to_string(channels) + ")");
  }
  if (class_index.size() != batch) {
    detail::shape_error("class_affine", "need one class index per sample");
  }
  std::vector<std::size_t> idx(class_index.begin(), class_index.end());
  for (auto k : idx) {
    if (k >= classes) {
      throw std::out_of_range("class_affine: unknown class index " + std::to_string(k) + " (" +
                              std::to_string(classes) + " classes)");
    }
  }
  Tensor<T> out(s);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gain_table.value();
  const Tensor<T>& bv = bias_table.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (b * channels + c) * inner + i;
        out[k] = xv[k] * gv[idx[b] * channels + c] + bv[idx[b] * channels + c];
      }
  return x.tape().record(
      "class_affine", std::move(out), {x, gain_table, bias_table},
      [x, gain_table, bias_table, idx = std::move(idx), batch, channels, inner](
          Tape<T>& tape, const Tensor<T>& g) {
        T* gx = tape.grad_ptr(x);
        T* gg = tape.grad_ptr(gain_table);
        T* gb = tape.grad_ptr(bias_table);
        const Tensor<T>& xv = tape.value(x);
        const Tensor<T>& gv = tape.value(gain_table);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t row = idx[b] * channels + c;
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (b * channels + c) * inner + i;
              if (gx) gx[k] += g[k] * gv[row];
              if (gg) gg[row] += g[k] * xv[k];
              if (gb) gb[row] += g[k];
            }
          }
      });
}

/// Conditional batch normalization: batch-normalize, then apply the gain/bias
/// rows of each sample's class.
template <typename T>
Var<T> conditional_batch_norm(const Var<T>& x, std::span<const std::size_t> class_index,
                              const Var<T>& gain_table, const Var<T>& bias_table, NormMode mode,
                              Tensor<T>& running_mean, Tensor<T>& running_var,
                              BatchNormConfig<T> cfg = {}) {
  const std::size_t classes = gain_table.shape().at(0);
  for (auto k : class_index) {
    if (k >= classes) {
      throw std::out_of_range("conditional_batch_norm: unknown class index " + std::to_string(k));
    }
  }
  return class_affine(normalize_batch(x, mode, running_mean, running_var, cfg), gain_table,
                      bias_table, class_index);
}

}  // namespace vcgan
