#pragma once

// Pooling and fixed upsampling. The last two axes are spatial (h, w); any
// leading axes are treated as independent planes.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::nn {

enum class ResizeMode { max_pool, avg_pool, nearest_up, bilinear_up };

namespace resample_detail {

struct Planes {
  std::size_t count, h, w;
};

inline Planes planes_of(const Tensor& t, const char* op) {
  if (t.rank() < 2) throw ShapeError(std::string(op) + ": need at least [h, w], got " + shape_string(t.shape()));
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  return {t.size() / (h * w), h, w};
}

inline Shape with_spatial(Shape s, std::size_t h, std::size_t w) {
  s[s.size() - 2] = h;
  s[s.size() - 1] = w;
  return s;
}

}  // namespace resample_detail

inline Tensor max_pool(const Tensor& input, std::size_t factor) {
  using namespace resample_detail;
  const auto [np, h, w] = planes_of(input, "max_pool");
  if (factor < 2) throw DomainError("max_pool: factor must be >= 2");
  if (h % factor || w % factor) {
    throw ShapeError("max_pool: spatial size " + shape_string(input.shape()) +
                     " not divisible by " + std::to_string(factor));
  }
  const std::size_t H = h / factor, W = w / factor;
  const auto X = input.values();
  std::vector<double> out(np * H * W);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t best = p * h * w + (y * factor) * w + x * factor;
        for (std::size_t i = 0; i < factor; ++i)
          for (std::size_t j = 0; j < factor; ++j) {
            const std::size_t idx = p * h * w + (y * factor + i) * w + x * factor + j;
            if (X[idx] > X[best]) best = idx;
          }
        const std::size_t o = (p * H + y) * W + x;
        out[o] = X[best];
        arg[o] = best;
      }
  return detail::make_result("max_pool", with_spatial(input.shape(), H, W), std::move(out), {input},
                             [arg](detail::Node& self) {
                               double* g = detail::parent_grad(self, 0);
                               if (!g) return;
                               for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
                             });
}

inline Tensor avg_pool(const Tensor& input, std::size_t factor) {
  using namespace resample_detail;
  const auto [np, h, w] = planes_of(input, "avg_pool");
  if (factor < 2) throw DomainError("avg_pool: factor must be >= 2");
  if (h % factor || w % factor) {
    throw ShapeError("avg_pool: spatial size " + shape_string(input.shape()) +
                     " not divisible by " + std::to_string(factor));
  }
  const std::size_t H = h / factor, W = w / factor;
  const double inv = 1.0 / double(factor * factor);
  const auto X = input.values();
  std::vector<double> out(np * H * W, 0.0);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(p * H + y / factor) * W + x / factor] += X[(p * h + y) * w + x] * inv;
  return detail::make_result("avg_pool", with_spatial(input.shape(), H, W), std::move(out), {input},
                             [np, h, w, H, W, factor, inv](detail::Node& self) {
                               double* g = detail::parent_grad(self, 0);
                               if (!g) return;
                               for (std::size_t p = 0; p < np; ++p)
                                 for (std::size_t y = 0; y < h; ++y)
                                   for (std::size_t x = 0; x < w; ++x)
                                     g[(p * h + y) * w + x] +=
                                         self.grad[(p * H + y / factor) * W + x / factor] * inv;
                             });
}

inline Tensor nearest_up(const Tensor& input, std::size_t factor) {
  using namespace resample_detail;
  const auto [np, h, w] = planes_of(input, "nearest_up");
  if (factor < 2) throw DomainError("nearest_up: factor must be >= 2");
  const std::size_t H = h * factor, W = w * factor;
  const auto X = input.values();
  std::vector<double> out(np * H * W);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        out[(p * H + y) * W + x] = X[(p * h + y / factor) * w + x / factor];
  return detail::make_result("nearest_up", with_spatial(input.shape(), H, W), std::move(out), {input},
                             [np, h, w, H, W, factor](detail::Node& self) {
                               double* g = detail::parent_grad(self, 0);
                               if (!g) return;
                               for (std::size_t p = 0; p < np; ++p)
                                 for (std::size_t y = 0; y < H; ++y)
                                   for (std::size_t x = 0; x < W; ++x)
                                     g[(p * h + y / factor) * w + x / factor] +=
                                         self.grad[(p * H + y) * W + x];
                             });
}

/// Bilinear upsampling with half-pixel centers; source coordinates are
/// clamped to the input extent.
inline Tensor bilinear_up(const Tensor& input, std::size_t factor) {
  using namespace resample_detail;
  const auto [np, h, w] = planes_of(input, "bilinear_up");
  if (factor < 2) throw DomainError("bilinear_up: factor must be >= 2");
  const std::size_t H = h * factor, W = w * factor;
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  auto taps = [factor](std::size_t n_out, std::size_t n_in) {
    std::vector<Tap> t(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = (double(o) + 0.5) / double(factor) - 0.5;
      s = std::clamp(s, 0.0, double(n_in - 1));
      const std::size_t i0 = std::size_t(std::floor(s));
      t[o] = {i0, std::min(i0 + 1, n_in - 1), s - double(i0)};
    }
    return t;
  };
  const auto ty = taps(H, h), tx = taps(W, w);
  const auto X = input.values();
  std::vector<double> out(np * H * W);
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double* P = X.data() + p * h * w;
        const auto& a = ty[y];
        const auto& b = tx[x];
        out[(p * H + y) * W + x] = (1 - a.f) * ((1 - b.f) * P[a.i0 * w + b.i0] + b.f * P[a.i0 * w + b.i1]) +
                                   a.f * ((1 - b.f) * P[a.i1 * w + b.i0] + b.f * P[a.i1 * w + b.i1]);
      }
  return detail::make_result(
      "bilinear_up", with_spatial(input.shape(), H, W), std::move(out), {input},
      [np, h, w, H, W, ty, tx](detail::Node& self) {
        double* g = detail::parent_grad(self, 0);
        if (!g) return;
        for (std::size_t p = 0; p < np; ++p)
          for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
              double* P = g + p * h * w;
              const auto& a = ty[y];
              const auto& b = tx[x];
              const double go = self.grad[(p * H + y) * W + x];
              P[a.i0 * w + b.i0] += go * (1 - a.f) * (1 - b.f);
              P[a.i0 * w + b.i1] += go * (1 - a.f) * b.f;
              P[a.i1 * w + b.i0] += go * a.f * (1 - b.f);
              P[a.i1 * w + b.i1] += go * a.f * b.f;
            }
      });
}

inline Tensor resize(const Tensor& input, std::size_t factor, ResizeMode mode) {
  switch (mode) {
    case ResizeMode::max_pool: return max_pool(input, factor);
    case ResizeMode::avg_pool: return avg_pool(input, factor);
    case ResizeMode::nearest_up: return nearest_up(input, factor);
    case ResizeMode::bilinear_up: return bilinear_up(input, factor);
  }
  throw std::logic_error("resize: unknown mode");
}

}  // namespace microsim::nn
