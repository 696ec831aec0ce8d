#pragma once

// Backward warping, per-pixel kernel transforms and the spatially-displaced
// convolution (SDC).
//
// Coordinates: x is the column index, y the row index. A motion field holds
// u (horizontal, along x) and v (vertical, along y) in pixels, so the sample
// for output pixel (x, y) is taken at (x + u(y, x), y + v(y, x)).
//
// Images are [h, w] or [c, h, w]; every channel plane shares the same motion
// field and kernels. Kernels are not normalized.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::warp {

struct MotionField {
  Tensor u;  // [h, w]
  Tensor v;  // [h, w]

  static MotionField zeros(std::size_t h, std::size_t w, bool requires_grad = false) {
    return {Tensor::zeros({h, w}, requires_grad), Tensor::zeros({h, w}, requires_grad)};
  }
  static MotionField uniform(std::size_t h, std::size_t w, double u, double v) {
    return {Tensor::full({h, w}, u), Tensor::full({h, w}, v)};
  }
};

/// Per-pixel 1d kernels; the 2d kernel at (y, x) is K(i, j) = k_v(i) * k_h(j).
struct SeparableKernelField {
  Tensor k_h;  // [h, w, N]
  Tensor k_v;  // [h, w, N]

  std::size_t size() const { return k_h.dim(2); }
};

enum class BorderPolicy { clamp, zero };

/// Vector of length N with a single 1 at (N - 1) / 2.
inline std::vector<double> middle_one_hot(std::size_t n) {
  if (n % 2 == 0) throw DomainError("middle_one_hot: N must be odd, got " + std::to_string(n));
  std::vector<double> v(n, 0.0);
  v[(n - 1) / 2] = 1.0;
  return v;
}

/// Separable field whose kernels are middle-one-hot at every pixel.
inline SeparableKernelField identity_kernels(std::size_t h, std::size_t w, std::size_t n,
                                             bool requires_grad = false) {
  const auto one_hot = middle_one_hot(n);
  std::vector<double> v(h * w * n);
  for (std::size_t p = 0; p < h * w; ++p) std::copy(one_hot.begin(), one_hot.end(), v.begin() + p * n);
  return {Tensor({h, w, n}, v, requires_grad), Tensor({h, w, n}, v, requires_grad)};
}

namespace warp_detail {

struct Planes {
  std::size_t count, h, w;
};

inline Planes image_planes(const Tensor& image, const char* op) {
  if (image.rank() != 2 && image.rank() != 3) {
    throw ShapeError(std::string(op) + ": image must be [h, w] or [c, h, w], got " +
                     shape_string(image.shape()));
  }
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  return {image.size() / (h * w), h, w};
}

inline void check_flow(const MotionField& flow, std::size_t h, std::size_t w, const char* op) {
  const Shape want{h, w};
  if (flow.u.shape() != want || flow.v.shape() != want) {
    throw ShapeError(std::string(op) + ": motion field " + shape_string(flow.u.shape()) + "/" +
                     shape_string(flow.v.shape()) + " does not match image plane " +
                     shape_string(want));
  }
}

/// Bilinear footprint of a real coordinate: lower index and fraction.
struct Footprint {
  long i0;
  double f;
};

inline Footprint footprint(double s) {
  const double fl = std::floor(s);
  return {long(fl), s - fl};
}

/// Zero-padded plane read.
inline double at(const double* plane, std::size_t h, std::size_t w, long y, long x) {
  if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) return 0.0;
  return plane[std::size_t(y) * w + std::size_t(x)];
}

inline void add_at(double* plane, std::size_t h, std::size_t w, long y, long x, double g) {
  if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) return;
  plane[std::size_t(y) * w + std::size_t(x)] += g;
}

/// Zero-padded bilinear sample and its partial derivatives along x and y.
struct Sample {
  double value, dx, dy;
};

inline Sample bilinear(const double* plane, std::size_t h, std::size_t w, Footprint fy, Footprint fx) {
  const double a = at(plane, h, w, fy.i0, fx.i0), b = at(plane, h, w, fy.i0, fx.i0 + 1);
  const double c = at(plane, h, w, fy.i0 + 1, fx.i0), d = at(plane, h, w, fy.i0 + 1, fx.i0 + 1);
  const double top = a + fx.f * (b - a), bottom = c + fx.f * (d - c);
  return {top + fy.f * (bottom - top), (1 - fy.f) * (b - a) + fy.f * (d - c), bottom - top};
}

inline void scatter_bilinear(double* plane, std::size_t h, std::size_t w, Footprint fy, Footprint fx,
                             double g) {
  add_at(plane, h, w, fy.i0, fx.i0, g * (1 - fy.f) * (1 - fx.f));
  add_at(plane, h, w, fy.i0, fx.i0 + 1, g * (1 - fy.f) * fx.f);
  add_at(plane, h, w, fy.i0 + 1, fx.i0, g * fy.f * (1 - fx.f));
  add_at(plane, h, w, fy.i0 + 1, fx.i0 + 1, g * fy.f * fx.f);
}

/// Displaced sample position along one axis. With the clamp policy the
/// coordinate is clamped to [0, n - 1]; `inside` is false when clamping moved it.
struct Coord {
  double s;
  bool inside;
};

inline Coord displaced(double base, double offset, std::size_t n, BorderPolicy border) {
  const double s = base + offset;
  if (border == BorderPolicy::zero) return {s, true};
  const double c = std::clamp(s, 0.0, double(n - 1));
  return {c, c == s};
}

}  // namespace warp_detail

/// out(x, y) = I(x + u, y + v), bilinear. The clamp policy repeats border
/// pixels for samples outside the image; the zero policy reads zeros there.
inline Tensor bilinear_resample(const Tensor& image, const MotionField& flow,
                                BorderPolicy border = BorderPolicy::clamp) {
  using namespace warp_detail;
  const auto [np, h, w] = image_planes(image, "bilinear_resample");
  check_flow(flow, h, w, "bilinear_resample");
  const auto X = image.values();
  const auto U = flow.u.values();
  const auto V = flow.v.values();
  std::vector<double> out(image.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const auto fx = footprint(displaced(double(x), U[p], w, border).s);
      const auto fy = footprint(displaced(double(y), V[p], h, border).s);
      for (std::size_t c = 0; c < np; ++c) out[c * h * w + p] = bilinear(X.data() + c * h * w, h, w, fy, fx).value;
    }
  return detail::make_result(
      "bilinear_resample", image.shape(), std::move(out), {image, flow.u, flow.v},
      [np, h, w, border](detail::Node& self) {
        const auto& X = self.parents[0]->values;
        const auto& U = self.parents[1]->values;
        const auto& V = self.parents[2]->values;
        double* gi = detail::parent_grad(self, 0);
        double* gu = detail::parent_grad(self, 1);
        double* gv = detail::parent_grad(self, 2);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * w + x;
            const auto cx = displaced(double(x), U[p], w, border);
            const auto cy = displaced(double(y), V[p], h, border);
            const auto fx = footprint(cx.s), fy = footprint(cy.s);
            for (std::size_t c = 0; c < np; ++c) {
              const double g = self.grad[c * h * w + p];
              if (gi) scatter_bilinear(gi + c * h * w, h, w, fy, fx, g);
              if (gu || gv) {
                const auto s = bilinear(X.data() + c * h * w, h, w, fy, fx);
                if (gu && cx.inside) gu[p] += g * s.dx;
                if (gv && cy.inside) gv[p] += g * s.dy;
              }
            }
          }
      });
}

/// out(x, y) = sum_ij K(y, x, i, j) I(x + j - r, y + i - r), zero padded,
/// with kernels [h, w, N, N] and r = (N - 1) / 2.
inline Tensor kernel_transform(const Tensor& image, const Tensor& kernels) {
  using namespace warp_detail;
  const auto [np, h, w] = image_planes(image, "kernel_transform");
  if (kernels.rank() != 4 || kernels.dim(0) != h || kernels.dim(1) != w ||
      kernels.dim(2) != kernels.dim(3)) {
    throw ShapeError("kernel_transform: kernels " + shape_string(kernels.shape()) +
                     " must be [h, w, N, N] for image " + shape_string(image.shape()));
  }
  const std::size_t n = kernels.dim(2);
  if (n % 2 == 0) throw DomainError("kernel_transform: N must be odd, got " + std::to_string(n));
  const long r = long(n / 2);
  const auto X = image.values();
  const auto K = kernels.values();
  std::vector<double> out(image.size(), 0.0);
  for (std::size_t c = 0; c < np; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double* k = K.data() + (y * w + x) * n * n;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            s += k[i * n + j] * at(X.data() + c * h * w, h, w, long(y) + long(i) - r, long(x) + long(j) - r);
        out[(c * h + y) * w + x] = s;
      }
  return detail::make_result(
      "kernel_transform", image.shape(), std::move(out), {image, kernels},
      [np, h, w, n, r](detail::Node& self) {
        const auto& X = self.parents[0]->values;
        const auto& K = self.parents[1]->values;
        double* gi = detail::parent_grad(self, 0);
        double* gk = detail::parent_grad(self, 1);
        for (std::size_t c = 0; c < np; ++c)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              const double g = self.grad[(c * h + y) * w + x];
              const std::size_t base = (y * w + x) * n * n;
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                  const long yy = long(y) + long(i) - r, xx = long(x) + long(j) - r;
                  if (gk) gk[base + i * n + j] += g * at(X.data() + c * h * w, h, w, yy, xx);
                  if (gi) add_at(gi + c * h * w, h, w, yy, xx, g * K[base + i * n + j]);
                }
            }
      });
}

/// Dense [h, w, N, N] kernels from a separable field: K(i, j) = k_v(i) k_h(j).
inline Tensor outer_kernels(const SeparableKernelField& kernels) {
  const Shape s = kernels.k_h.shape();
  if (s.size() != 3 || kernels.k_v.shape() != s) {
    throw ShapeError("outer_kernels: k_h " + shape_string(s) + " and k_v " +
                     shape_string(kernels.k_v.shape()) + " must both be [h, w, N]");
  }
  const std::size_t n = s[2];
  const Tensor rows = mul(Tensor::ones({s[0], s[1], n, n}), reshape(kernels.k_v, {s[0], s[1], n, 1}));
  return mul(rows, reshape(kernels.k_h, {s[0], s[1], 1, n}));
}

/// Spatially-displaced convolution:
///
///   out(x, y) = sum_ij k_v(i) k_h(j) I(cx + j - r, cy + i - r)
///
/// where (cx, cy) is (x + u, y + v) clamped to the image, and each tap is a
/// zero-padded bilinear sample. Flow gradients vanish where the center is clamped.
inline Tensor sdc(const Tensor& image, const MotionField& flow, const SeparableKernelField& kernels) {
  using namespace warp_detail;
  const auto [np, h, w] = image_planes(image, "sdc");
  check_flow(flow, h, w, "sdc");
  const Shape ks = kernels.k_h.shape();
  if (ks.size() != 3 || ks[0] != h || ks[1] != w || kernels.k_v.shape() != ks) {
    throw ShapeError("sdc: kernels " + shape_string(ks) + "/" + shape_string(kernels.k_v.shape()) +
                     " do not match image " + shape_string(image.shape()));
  }
  const std::size_t n = ks[2];
  if (n % 2 == 0) throw DomainError("sdc: N must be odd, got " + std::to_string(n));
  const long r = long(n / 2);
  const auto X = image.values();
  const auto U = flow.u.values();
  const auto V = flow.v.values();
  const auto KH = kernels.k_h.values();
  const auto KV = kernels.k_v.values();
  std::vector<double> out(image.size(), 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const auto fx = footprint(displaced(double(x), U[p], w, BorderPolicy::clamp).s);
      const auto fy = footprint(displaced(double(y), V[p], h, BorderPolicy::clamp).s);
      for (std::size_t c = 0; c < np; ++c) {
        const double* plane = X.data() + c * h * w;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double row = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            row += KH[p * n + j] * bilinear(plane, h, w, {fy.i0 + long(i) - r, fy.f},
                                            {fx.i0 + long(j) - r, fx.f}).value;
          }
          s += KV[p * n + i] * row;
        }
        out[c * h * w + p] = s;
      }
    }
  return detail::make_result(
      "sdc", image.shape(), std::move(out), {image, flow.u, flow.v, kernels.k_h, kernels.k_v},
      [np, h, w, n, r](detail::Node& self) {
        const auto& X = self.parents[0]->values;
        const auto& U = self.parents[1]->values;
        const auto& V = self.parents[2]->values;
        const auto& KH = self.parents[3]->values;
        const auto& KV = self.parents[4]->values;
        double* gi = detail::parent_grad(self, 0);
        double* gu = detail::parent_grad(self, 1);
        double* gv = detail::parent_grad(self, 2);
        double* gkh = detail::parent_grad(self, 3);
        double* gkv = detail::parent_grad(self, 4);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * w + x;
            const auto cx = displaced(double(x), U[p], w, BorderPolicy::clamp);
            const auto cy = displaced(double(y), V[p], h, BorderPolicy::clamp);
            const auto fx = footprint(cx.s), fy = footprint(cy.s);
            for (std::size_t c = 0; c < np; ++c) {
              const double g = self.grad[c * h * w + p];
              const double* plane = X.data() + c * h * w;
              for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                  const Footprint ty{fy.i0 + long(i) - r, fy.f}, tx{fx.i0 + long(j) - r, fx.f};
                  const double kk = KV[p * n + i] * KH[p * n + j];
                  if (gi) scatter_bilinear(gi + c * h * w, h, w, ty, tx, g * kk);
                  if (!(gu || gv || gkh || gkv)) continue;
                  const auto s = bilinear(plane, h, w, ty, tx);
                  if (gu && cx.inside) gu[p] += g * kk * s.dx;
                  if (gv && cy.inside) gv[p] += g * kk * s.dy;
                  if (gkh) gkh[p * n + j] += g * KV[p * n + i] * s.value;
                  if (gkv) gkv[p * n + i] += g * KH[p * n + j] * s.value;
                }
            }
          }
      });
}

}  // namespace microsim::warp
