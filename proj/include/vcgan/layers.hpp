#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "vcgan/diffcore.hpp"
#include "vcgan/rng.hpp"

namespace vcgan {

template <typename T>
Tensor<T> gaussian_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

/// Fully connected layer y = x W^T + b, optionally spectrally normalized.
template <typename T>
struct LinearLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::optional<std::size_t> sn_u;

  static LinearLayer create(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                            std::size_t out, Rng& rng, double stddev, bool spectral) {
    LinearLayer l;
    l.weight = store.add(prefix + ".weight", gaussian_tensor<T>(Shape{out, in}, stddev, rng));
    l.bias = store.add(prefix + ".bias", Tensor<T>(Shape{out}));
    if (spectral) {
      l.sn_u = store.add(prefix + ".sn_u", SpectralState<T>::random(out, rng).u, false);
    }
    return l;
  }

  std::size_t in_features(const ParameterStore<T>& store) const { return store[weight].value.dim(1); }
  std::size_t out_features(const ParameterStore<T>& store) const { return store[weight].value.dim(0); }

  Var<T> operator()(Tape<T>& tape, ParameterStore<T>& store, const Var<T>& x,
                    std::size_t sn_iterations = 0) const {
    Var<T> w = tape.param(store[weight]);
    if (sn_u) w = spectral_normalize(w, store[*sn_u].value, sn_iterations);
    return linear(x, w, tape.param(store[bias]));
  }
};

/// Convolution (or transposed convolution) with per-channel bias.
template <typename T>
struct ConvLayer {
  std::size_t kernel = 0;
  std::size_t bias = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;
  std::optional<std::size_t> sn_u;

  static ConvLayer create(ParameterStore<T>& store, const std::string& prefix,
                          std::size_t in_channels, std::size_t out_channels, std::size_t k,
                          std::size_t stride, std::size_t padding, bool transposed, Rng& rng,
                          double stddev, bool spectral) {
    ConvLayer l;
    const Shape kshape = transposed ? Shape{in_channels, out_channels, k, k}
                                    : Shape{out_channels, in_channels, k, k};
    l.kernel = store.add(prefix + ".kernel", gaussian_tensor<T>(kshape, stddev, rng));
    l.bias = store.add(prefix + ".bias", Tensor<T>(Shape{out_channels}));
    l.stride = stride;
    l.padding = padding;
    l.transposed = transposed;
    if (spectral) {
      l.sn_u = store.add(prefix + ".sn_u", SpectralState<T>::random(kshape[0], rng).u, false);
    }
    return l;
  }

  Var<T> operator()(Tape<T>& tape, ParameterStore<T>& store, const Var<T>& x,
                    std::size_t sn_iterations = 0) const {
    Var<T> k = tape.param(store[kernel]);
    if (sn_u) k = spectral_normalize(k, store[*sn_u].value, sn_iterations);
    Var<T> y = transposed ? conv_transpose2d(x, k, stride, padding) : conv2d(x, k, stride, padding);
    return add_bias(y, tape.param(store[bias]));
  }
};

template <typename T>
struct BatchNormLayer {
  std::size_t gain = 0;
  std::size_t bias = 0;
  std::size_t running_mean = 0;
  std::size_t running_var = 0;

  static BatchNormLayer create(ParameterStore<T>& store, const std::string& prefix,
                               std::size_t channels) {
    BatchNormLayer l;
    l.gain = store.add(prefix + ".gain", Tensor<T>(Shape{channels}, T{1}));
    l.bias = store.add(prefix + ".bias", Tensor<T>(Shape{channels}));
    l.running_mean = store.add(prefix + ".running_mean", Tensor<T>(Shape{channels}), false);
    l.running_var = store.add(prefix + ".running_var", Tensor<T>(Shape{channels}, T{1}), false);
    return l;
  }

  Var<T> operator()(Tape<T>& tape, ParameterStore<T>& store, const Var<T>& x, NormMode mode) const {
    Var<T> n = normalize_batch(x, mode, store[running_mean].value, store[running_var].value);
    return channel_affine(n, tape.param(store[gain]), tape.param(store[bias]));
  }
};

/// Batch normalization whose gain/bias rows are selected by class.
template <typename T>
struct CondBatchNormLayer {
  std::size_t gain_table = 0;
  std::size_t bias_table = 0;
  std::size_t running_mean = 0;
  std::size_t running_var = 0;

  static CondBatchNormLayer create(ParameterStore<T>& store, const std::string& prefix,
                                   std::size_t classes, std::size_t channels) {
    CondBatchNormLayer l;
    l.gain_table = store.add(prefix + ".gain_table", Tensor<T>(Shape{classes, channels}, T{1}));
    l.bias_table = store.add(prefix + ".bias_table", Tensor<T>(Shape{classes, channels}));
    l.running_mean = store.add(prefix + ".running_mean", Tensor<T>(Shape{channels}), false);
    l.running_var = store.add(prefix + ".running_var", Tensor<T>(Shape{channels}, T{1}), false);
    return l;
  }

  Var<T> operator()(Tape<T>& tape, ParameterStore<T>& store, const Var<T>& x,
                    std::span<const std::size_t> class_index, NormMode mode) const {
    return conditional_batch_norm(x, class_index, tape.param(store[gain_table]),
                                  tape.param(store[bias_table]), mode, store[running_mean].value,
                                  store[running_var].value);
  }
};

}  // namespace vcgan
