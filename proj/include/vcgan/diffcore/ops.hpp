#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vcgan/diffcore/tape.hpp"

namespace vcgan {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

[[noreturn]] inline void shape_error(std::string_view op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

inline void require_same_shape(std::string_view op, const Shape& a, const Shape& b) {
  if (a != b) shape_error(op, "shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

inline void require_rank(std::string_view op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

template <typename T>
MatMap<T> as_matrix(T* p, std::size_t rows, std::size_t cols) {
  return MatMap<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// Elementwise op where the derivative is a function of input and output.
template <typename T, typename F, typename D>
Var<T> unary(std::string_view op, const Var<T>& x, F f, D df) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.tape().record(op, std::move(out), {x}, [x, df](Tape<T>& tape, const Tensor<T>& g) {
    T* gx = tape.grad_ptr(x);
    const Tensor<T>& xv = tape.value(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * df(xv[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("add", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (T* ga = tape.grad_ptr(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = tape.grad_ptr(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("sub", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (T* ga = tape.grad_ptr(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gb = tape.grad_ptr(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

/// Hadamard product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("mul", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    if (T* ga = tape.grad_ptr(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (T* gb = tape.grad_ptr(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  return detail::unary<T>("scale", x, [s](T v) { return s * v; }, [s](T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s) {
  return detail::unary<T>("add_scalar", x, [s](T v) { return v + s; }, [](T) { return T{1}; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return detail::unary<T>("square", x, [](T v) { return v * v; }, [](T v) { return 2 * v; });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return detail::unary<T>("exp", x, [](T v) { return std::exp(v); },
                          [](T v) { return std::exp(v); });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return detail::unary<T>("log", x, [](T v) { return std::log(v); }, [](T v) { return 1 / v; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>("relu", x, [](T v) { return v > 0 ? v : T{0}; },
                          [](T v) { return v > 0 ? T{1} : T{0}; });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2)) {
  return detail::unary<T>("leaky_relu", x, [slope](T v) { return v > 0 ? v : slope * v; },
                          [slope](T v) { return v > 0 ? T{1} : slope; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>("tanh", x, [](T v) { return std::tanh(v); }, [](T v) {
    const T t = std::tanh(v);
    return 1 - t * t;
  });
}

template <typename T>
T sigmoid_value(T v) {
  if (v >= 0) return 1 / (1 + std::exp(-v));
  const T e = std::exp(v);
  return e / (1 + e);
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary<T>("sigmoid", x, [](T v) { return sigmoid_value(v); }, [](T v) {
    const T s = sigmoid_value(v);
    return s * (1 - s);
  });
}

/// log(sigmoid(x)) without overflow: -softplus(-x).
template <typename T>
Var<T> log_sigmoid(const Var<T>& x) {
  return detail::unary<T>(
      "log_sigmoid", x,
      [](T v) { return std::min(v, T{0}) - std::log1p(std::exp(-std::abs(v))); },
      [](T v) { return 1 - sigmoid_value(v); });
}

/// Clamp with zero gradient outside [lo, hi].
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return detail::unary<T>("clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
                          [lo, hi](T v) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    T* gx = tape.grad_ptr(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s{0};
  for (T v : x.value().data()) s += v;
  return x.tape().record("sum", Tensor<T>::scalar(s), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    T* gx = tape.grad_ptr(x);
    const std::size_t n = tape.value(x).size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

/// Per-row sum of a (rows x cols) view; result has shape (rows).
template <typename T>
Var<T> sum_rows(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor<T> out(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    T s{0};
    for (std::size_t j = 0; j < c; ++j) s += xv[i * c + j];
    out[i] = s;
  }
  return x.tape().record("sum_rows", std::move(out), {x},
                         [x, r, c](Tape<T>& tape, const Tensor<T>& g) {
                           T* gx = tape.grad_ptr(x);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
                         });
}

/// a (n x k) times b (k x m).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_rank("matmul", a.shape(), 2);
  detail::require_rank("matmul", b.shape(), 2);
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    detail::shape_error("matmul", "inner dimensions differ " + shape_string(a.shape()) + " * " +
                                      shape_string(b.shape()));
  }
  Tensor<T> out(Shape{n, m});
  detail::as_matrix(out.data().data(), n, m).noalias() =
      detail::as_matrix(a.value(), n, k) * detail::as_matrix(b.value(), k, m);
  return a.tape().record("matmul", std::move(out), {a, b},
                         [a, b, n, k, m](Tape<T>& tape, const Tensor<T>& g) {
                           auto G = detail::as_matrix(g, n, m);
                           if (T* ga = tape.grad_ptr(a))
                             detail::as_matrix(ga, n, k).noalias() +=
                                 G * detail::as_matrix(tape.value(b), k, m).transpose();
                           if (T* gb = tape.grad_ptr(b))
                             detail::as_matrix(gb, k, m).noalias() +=
                                 detail::as_matrix(tape.value(a), n, k).transpose() * G;
                         });
}

/// Fully connected layer: x (batch x in), weight (out x in), bias (out).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  detail::require_rank("linear", x.shape(), 2);
  detail::require_rank("linear", weight.shape(), 2);
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[0];
  if (weight.shape()[1] != in) {
    detail::shape_error("linear", "input width " + std::to_string(in) + " does not match weight " +
                                      shape_string(weight.shape()));
  }
  if (bias.value().size() != out_dim) {
    detail::shape_error("linear", "bias length " + std::to_string(bias.value().size()) +
                                      " does not match " + std::to_string(out_dim) + " outputs");
  }
  Tensor<T> out(Shape{batch, out_dim});
  auto Y = detail::as_matrix(out.data().data(), batch, out_dim);
  Y.noalias() = detail::as_matrix(x.value(), batch, in) *
                detail::as_matrix(weight.value(), out_dim, in).transpose();
  Y.rowwise() += detail::as_matrix(bias.value(), 1, out_dim).row(0);
  return x.tape().record(
      "linear", std::move(out), {x, weight, bias},
      [x, weight, bias, batch, in, out_dim](Tape<T>& tape, const Tensor<T>& g) {
        auto G = detail::as_matrix(g, batch, out_dim);
        if (T* gx = tape.grad_ptr(x))
          detail::as_matrix(gx, batch, in).noalias() +=
              G * detail::as_matrix(tape.value(weight), out_dim, in);
        if (T* gw = tape.grad_ptr(weight))
          detail::as_matrix(gw, out_dim, in).noalias() +=
              G.transpose() * detail::as_matrix(tape.value(x), batch, in);
        if (T* gb = tape.grad_ptr(bias))
          detail::as_matrix(gb, 1, out_dim) += G.colwise().sum();
      });
}

/// Adds a per-channel bias to x viewed as (batch, channels, spatial...).
template <typename T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const Shape& s = x.shape();
  if (s.size() < 2) detail::shape_error("add_bias", "input needs a channel axis");
  const std::size_t batch = s[0], channels = s[1], inner = x.value().size() / (batch * channels);
  if (bias.value().size() != channels) {
    detail::shape_error("add_bias", "bias length " + std::to_string(bias.value().size()) +
                                        " does not match " + std::to_string(channels) + " channels");
  }
  Tensor<T> out = x.value();
  const Tensor<T>& bv = bias.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) out[(b * channels + c) * inner + i] += bv[c];
  return x.tape().record("add_bias", std::move(out), {x, bias},
                         [x, bias, batch, channels, inner](Tape<T>& tape, const Tensor<T>& g) {
                           if (T* gx = tape.grad_ptr(x))
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           if (T* gb = tape.grad_ptr(bias))
                             for (std::size_t b = 0; b < batch; ++b)
                               for (std::size_t c = 0; c < channels; ++c)
                                 for (std::size_t i = 0; i < inner; ++i)
                                   gb[c] += g[(b * channels + c) * inner + i];
                         });
}

namespace detail {

template <typename T>
void softmax_row(const T* in, T* out, std::size_t n) {
  T mx = in[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  T z{0};
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

}  // namespace detail

/// Row-wise softmax over the last axis of a (rows x cols) view.
template <typename T>
Var<T> softmax(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  const std::size_t r = x.shape().size() == 1 ? 1 : xv.rows();
  const std::size_t c = xv.size() / r;
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) detail::softmax_row(&xv[i * c], &out[i * c], c);
  return x.tape().record("softmax", out, {x}, [x, out, r, c](Tape<T>& tape, const Tensor<T>& g) {
    T* gx = tape.grad_ptr(x);
    for (std::size_t i = 0; i < r; ++i) {
      T dot{0};
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * out[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        gx[i * c + j] += out[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

/// Row-wise log-softmax via log-sum-exp.
template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  const std::size_t r = x.shape().size() == 1 ? 1 : xv.rows();
  const std::size_t c = xv.size() / r;
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const T* in = &xv[i * c];
    T mx = in[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
    T z{0};
    for (std::size_t j = 0; j < c; ++j) z += std::exp(in[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = in[j] - lse;
  }
  return x.tape().record("log_softmax", out, {x},
                         [x, out, r, c](Tape<T>& tape, const Tensor<T>& g) {
                           T* gx = tape.grad_ptr(x);
                           for (std::size_t i = 0; i < r; ++i) {
                             T gs{0};
                             for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
                             for (std::size_t j = 0; j < c; ++j)
                               gx[i * c + j] += g[i * c + j] - std::exp(out[i * c + j]) * gs;
                           }
                         });
}

/// Concatenates two (batch x n) matrices along columns.
template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  detail::require_rank("concat_cols", a.shape(), 2);
  detail::require_rank("concat_cols", b.shape(), 2);
  const std::size_t r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  if (b.shape()[0] != r) {
    detail::shape_error("concat_cols", "row counts differ " + shape_string(a.shape()) + " vs " +
                                           shape_string(b.shape()));
  }
  Tensor<T> out(Shape{r, ca + cb});
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(&av[i * ca], ca, &out[i * (ca + cb)]);
    std::copy_n(&bv[i * cb], cb, &out[i * (ca + cb) + ca]);
  }
  return a.tape().record("concat_cols", std::move(out), {a, b},
                         [a, b, r, ca, cb](Tape<T>& tape, const Tensor<T>& g) {
                           const std::size_t w = ca + cb;
                           if (T* ga = tape.grad_ptr(a))
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * w + j];
                           if (T* gb = tape.grad_ptr(b))
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < cb; ++j)
                                 gb[i * cb + j] += g[i * w + ca + j];
                         });
}

/// Columns [begin, end) of a (batch x n) matrix.
template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end) {
  detail::require_rank("slice_cols", x.shape(), 2);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (begin >= end || end > c) {
    detail::shape_error("slice_cols", "bad column range [" + std::to_string(begin) + "," +
                                          std::to_string(end) + ") of " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor<T> out(Shape{r, w});
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(&xv[i * c + begin], w, &out[i * w]);
  return x.tape().record("slice_cols", std::move(out), {x},
                         [x, r, c, begin, w](Tape<T>& tape, const Tensor<T>& g) {
                           T* gx = tape.grad_ptr(x);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
                         });
}

/// Rows [begin, end) along the leading axis, any rank.
template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (begin >= end || end > s[0]) {
    detail::shape_error("slice_rows", "bad row range [" + std::to_string(begin) + "," + std::to_string(end) +
                                          ") of " + shape_string(s));
  }
  const std::size_t inner = x.value().size() / s[0];
  Shape os = s;
  os[0] = end - begin;
  Tensor<T> out(os);
  std::copy_n(&x.value()[begin * inner], out.size(), out.data().begin());
  return x.tape().record("slice_rows", std::move(out), {x},
                         [x, offset = begin * inner](Tape<T>& tape, const Tensor<T>& g) {
                           T* gx = tape.grad_ptr(x) + offset;
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
}

/// out[i] = x[i, index[i]] for a (batch x n) matrix.
template <typename T>
Var<T> pick(const Var<T>& x, std::span<const std::size_t> index) {
  detail::require_rank("pick", x.shape(), 2);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (index.size() != r) {
    detail::shape_error("pick", "expected " + std::to_string(r) + " indices, got " +
                                    std::to_string(index.size()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor<T> out(Shape{r});
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] >= c) detail::shape_error("pick", "index " + std::to_string(idx[i]) + " out of range");
    out[i] = x.value()[i * c + idx[i]];
  }
  return x.tape().record("pick", std::move(out), {x},
                         [x, c, idx = std::move(idx)](Tape<T>& tape, const Tensor<T>& g) {
                           T* gx = tape.grad_ptr(x);
                           for (std::size_t i = 0; i < idx.size(); ++i) gx[i * c + idx[i]] += g[i];
                         });
}

}  // namespace vcgan
