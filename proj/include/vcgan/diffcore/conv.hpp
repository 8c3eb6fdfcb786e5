#pragma once

#include <cstddef>
#include <string>

#include "vcgan/diffcore/ops.hpp"

namespace vcgan {

struct Conv2dGeometry {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t out_h, out_w;
  std::size_t stride, padding;
};

namespace detail {

/// Cross-correlation core shared by conv2d (forward) and the transposed
/// convolution (as its adjoint). `small` is the (B, Co, Ho, Wo) side and
/// `large` the (B, Ci, H, W) side; the three kernels below are the forward
/// map and its two adjoints.
template <typename T, typename F>
void for_each_tap(const Conv2dGeometry& g, F&& f) {
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const std::size_t out_idx = ((b * g.out_channels + o) * g.out_h + oy) * g.out_w + ox;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const std::size_t in_idx =
                    ((b * g.in_channels + c) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                    static_cast<std::size_t>(ix);
                const std::size_t k_idx = ((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
                f(out_idx, in_idx, k_idx);
              }
            }
        }
}

inline std::size_t conv_out_dim(std::string_view op, std::size_t in, std::size_t k,
                                std::size_t stride, std::size_t padding) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * padding) -
                              static_cast<std::ptrdiff_t>(k);
  if (stride == 0 || span < 0) {
    shape_error(op, "non-positive output size (input " + std::to_string(in) + ", kernel " +
                        std::to_string(k) + ", stride " + std::to_string(stride) + ", padding " +
                        std::to_string(padding) + ")");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

}  // namespace detail

/// 2-D cross-correlation. input NCHW, kernel OIHW.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride, std::size_t padding) {
  detail::require_rank("conv2d", input.shape(), 4);
  detail::require_rank("conv2d", kernel.shape(), 4);
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (ks[1] != is[1]) {
    detail::shape_error("conv2d", "kernel expects " + std::to_string(ks[1]) +
                                      " input channels, input has " + std::to_string(is[1]));
  }
  Conv2dGeometry g{is[0], is[1], is[2], is[3], ks[0], ks[2], ks[3], 0, 0, stride, padding};
  g.out_h = detail::conv_out_dim("conv2d", g.in_h, g.kernel_h, stride, padding);
  g.out_w = detail::conv_out_dim("conv2d", g.in_w, g.kernel_w, stride, padding);

  Tensor<T> out(Shape{g.batch, g.out_channels, g.out_h, g.out_w});
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  detail::for_each_tap<T>(g, [&](std::size_t o, std::size_t i, std::size_t w) { out[o] += x[i] * k[w]; });

  return input.tape().record("conv2d", std::move(out), {input, kernel},
                             [input, kernel, g](Tape<T>& tape, const Tensor<T>& grad) {
                               T* gx = tape.grad_ptr(input);
                               T* gk = tape.grad_ptr(kernel);
                               const Tensor<T>& x = tape.value(input);
                               const Tensor<T>& k = tape.value(kernel);
                               detail::for_each_tap<T>(g, [&](std::size_t o, std::size_t i, std::size_t w) {
                                 if (gx) gx[i] += grad[o] * k[w];
                                 if (gk) gk[w] += grad[o] * x[i];
                               });
                             });
}

/// Transposed convolution (the adjoint of conv2d). input NCHW with C = in
/// channels, kernel (in, out, kH, kW); output spatial size
/// (H - 1) * stride - 2 * padding + kH.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride,
                        std::size_t padding) {
  detail::require_rank("conv_transpose2d", input.shape(), 4);
  detail::require_rank("conv_transpose2d", kernel.shape(), 4);
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (ks[0] != is[1]) {
    detail::shape_error("conv_transpose2d", "kernel expects " + std::to_string(ks[0]) +
                                                " input channels, input has " + std::to_string(is[1]));
  }
  const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>((is[2] - 1) * stride + ks[2]) -
                            2 * static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>((is[3] - 1) * stride + ks[3]) -
                            2 * static_cast<std::ptrdiff_t>(padding);
  if (stride == 0 || oh < 1 || ow < 1) {
    detail::shape_error("conv_transpose2d", "non-positive output size");
  }
  // Viewed as conv2d from the (large) output back to the (small) input, the
  // kernel's first axis indexes the small side.
  Conv2dGeometry g{is[0], ks[1], static_cast<std::size_t>(oh), static_cast<std::size_t>(ow),
                   is[1], ks[2], ks[3], is[2], is[3], stride, padding};

  Tensor<T> out(Shape{g.batch, g.in_channels, g.in_h, g.in_w});
  const Tensor<T>& x = input.value();
  const Tensor<T>& k = kernel.value();
  detail::for_each_tap<T>(g, [&](std::size_t s, std::size_t l, std::size_t w) { out[l] += x[s] * k[w]; });

  return input.tape().record("conv_transpose2d", std::move(out), {input, kernel},
                             [input, kernel, g](Tape<T>& tape, const Tensor<T>& grad) {
                               T* gx = tape.grad_ptr(input);
                               T* gk = tape.grad_ptr(kernel);
                               const Tensor<T>& x = tape.value(input);
                               const Tensor<T>& k = tape.value(kernel);
                               detail::for_each_tap<T>(g, [&](std::size_t s, std::size_t l, std::size_t w) {
                                 if (gx) gx[s] += grad[l] * k[w];
                                 if (gk) gk[w] += grad[l] * x[s];
                               });
                             });
}

}  // namespace vcgan
