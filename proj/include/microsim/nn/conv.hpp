#pragma once

#include <cmath>
#include <string>

#include "microsim/numeric/ops.hpp"

namespace microsim::nn {

/// He-constant runtime scale sqrt(2 / fan_in) used by equalized layers.
inline double equalized_scale(std::size_t fan_in) {
  if (fan_in == 0) throw DomainError("equalized_scale: fan_in must be >= 1");
  return std::sqrt(2.0 / double(fan_in));
}

/// Same-size 2d cross-correlation with zero padding (k-1)/2.
///
///   Y(c, y, x) = bias(c) + sum_l sum_i sum_j K(c, l, i, j) X(l, y + i - r, x + j - r)
///
/// input [c_in, h, w], kernel [c_out, c_in, k, k] with k odd, bias [c_out].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  detail::require_rank(input, 3, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  const std::size_t ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t co = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != ci) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels, input " +
                     shape_string(input.shape()) + " has " + std::to_string(ci));
  }
  if (kernel.dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " +
                     shape_string(kernel.shape()));
  }
  if (bias.size() != co) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(co) + " output channels");
  }
  const long r = long(k / 2);
  const auto X = input.values();
  const auto K = kernel.values();
  const auto B = bias.values();
  std::vector<double> out(co * h * w);
  for (std::size_t c = 0; c < co; ++c) {
    double* oc = out.data() + c * h * w;
    for (std::size_t p = 0; p < h * w; ++p) oc[p] = B[c];
    for (std::size_t l = 0; l < ci; ++l) {
      const double* xl = X.data() + l * h * w;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double kv = K[((c * ci + l) * k + i) * k + j];
          const long di = long(i) - r, dj = long(j) - r;
          const std::size_t y0 = std::size_t(std::max(0L, -di));
          const std::size_t y1 = std::size_t(std::min(long(h), long(h) - di));
          const std::size_t x0 = std::size_t(std::max(0L, -dj));
          const std::size_t x1 = std::size_t(std::min(long(w), long(w) - dj));
          for (std::size_t y = y0; y < y1; ++y) {
            const double* src = xl + (y + di) * w;
            double* dst = oc + y * w;
            for (std::size_t x = x0; x < x1; ++x) dst[x] += kv * src[long(x) + dj];
          }
        }
    }
  }
  return detail::make_result(
      "conv2d", Shape{co, h, w}, std::move(out), {input, kernel, bias},
      [ci, co, h, w, k, r](detail::Node& self) {
        const auto& X = self.parents[0]->values;
        const auto& K = self.parents[1]->values;
        const auto& G = self.grad;
        double* gx = detail::parent_grad(self, 0);
        double* gk = detail::parent_grad(self, 1);
        double* gb = detail::parent_grad(self, 2);
        for (std::size_t c = 0; c < co; ++c) {
          const double* gc = G.data() + c * h * w;
          if (gb) {
            double s = 0.0;
            for (std::size_t p = 0; p < h * w; ++p) s += gc[p];
            gb[c] += s;
          }
          for (std::size_t l = 0; l < ci; ++l)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const std::size_t kidx = ((c * ci + l) * k + i) * k + j;
                const long di = long(i) - r, dj = long(j) - r;
                const std::size_t y0 = std::size_t(std::max(0L, -di));
                const std::size_t y1 = std::size_t(std::min(long(h), long(h) - di));
                const std::size_t x0 = std::size_t(std::max(0L, -dj));
                const std::size_t x1 = std::size_t(std::min(long(w), long(w) - dj));
                double acc = 0.0;
                const double kv = K[kidx];
                for (std::size_t y = y0; y < y1; ++y) {
                  const std::size_t row = l * h * w + (y + di) * w;
                  const double* grow = gc + y * w;
                  for (std::size_t x = x0; x < x1; ++x) {
                    const std::size_t src = row + std::size_t(long(x) + dj);
                    if (gk) acc += grow[x] * X[src];
                    if (gx) gx[src] += grow[x] * kv;
                  }
                }
                if (gk) gk[kidx] += acc;
              }
        }
      });
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernel) {
  return conv2d(input, kernel, Tensor::zeros({kernel.dim(0)}));
}

/// Spreads each input pixel to (y * factor, x * factor) of a zero canvas.
inline Tensor zero_insert(const Tensor& input, std::size_t factor) {
  detail::require_rank(input, 3, "zero_insert");
  if (factor < 2) throw DomainError("zero_insert: factor must be >= 2");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t H = h * factor, W = w * factor;
  const auto X = input.values();
  std::vector<double> out(c * H * W, 0.0);
  for (std::size_t l = 0; l < c; ++l)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(l * H + y * factor) * W + x * factor] = X[(l * h + y) * w + x];
  return detail::make_result("zero_insert", Shape{c, H, W}, std::move(out), {input},
                             [c, h, w, H, W, factor](detail::Node& self) {
                               double* g = detail::parent_grad(self, 0);
                               if (!g) return;
                               for (std::size_t l = 0; l < c; ++l)
                                 for (std::size_t y = 0; y < h; ++y)
                                   for (std::size_t x = 0; x < w; ++x)
                                     g[(l * h + y) * w + x] +=
                                         self.grad[(l * H + y * factor) * W + x * factor];
                             });
}

/// Learnable upsampling: the stride-dilated input convolved with `kernel`.
/// Output is [c_out, h * factor, w * factor].
inline Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                                std::size_t factor) {
  return conv2d(zero_insert(input, factor), kernel, bias);
}

}  // namespace microsim::nn
