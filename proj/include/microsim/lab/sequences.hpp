#pragma once

// Synthetic frame sequences: one bright anti-aliased square or disc on a dark
// background moving with constant velocity, optionally growing.
//
// Positions and velocities are multiples of 1/64 px and every intensity is a
// function of (pixel - center), so an integer velocity yields frames that are
// exact integer shifts of each other.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "microsim/numeric/rng.hpp"
#include "microsim/numeric/tensor.hpp"

namespace microsim::lab {

enum class SequenceKind { translate, translate_and_grow };
enum class ShapeKind { square, disc };

struct SequenceConfig {
  SequenceKind kind = SequenceKind::translate;
  std::size_t count = 8;
  std::size_t h = 32;
  std::size_t w = 32;
  std::size_t frames = 8;
  bool integer_motion = true;
  double max_speed = 2.0;   // |dx|, |dy| <= max_speed px/frame
  double size_min = 3.0;    // half side or radius at frame 0
  double size_max = 6.0;
  double growth_min = 0.3;  // size increment per frame (grow variant)
  double growth_max = 0.8;

  void validate() const {
    if (h < 16 || w < 16) throw ConfigError("sequences: h and w must be >= 16");
    if (frames < 3) throw ConfigError("sequences: at least three frames are required");
    if (count < 1) throw ConfigError("sequences: count must be >= 1");
    if (!(max_speed >= 0.0 && size_min > 0.0 && size_max >= size_min && growth_max >= growth_min && growth_min > 0.0)) {
      throw ConfigError("sequences: invalid speed, size or growth range");
    }
  }
};

struct SyntheticSequence {
  std::vector<Tensor> frames;  // [h, w] in [0, 1]
  std::vector<Tensor> masks;   // [h, w], 1 where coverage >= 0.5
  double dx = 0.0;             // displacement per frame along columns
  double dy = 0.0;             // displacement per frame along rows
  ShapeKind shape = ShapeKind::square;
  std::vector<double> sizes;   // half side or radius per frame
  std::vector<double> cx, cy;  // center per frame
};

namespace sequence_detail {

inline constexpr int kSuper = 8;

inline double quantize(double v) { return std::round(v * 64.0) / 64.0; }

inline double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

/// Fraction of pixel (y, x) = [x, x + 1] x [y, y + 1] covered by the shape.
inline double coverage(ShapeKind shape, long y, long x, double cy, double cx, double s) {
  const double ox = double(x) - cx, oy = double(y) - cy;
  if (shape == ShapeKind::square) return overlap(ox, ox + 1.0, -s, s) * overlap(oy, oy + 1.0, -s, s);
  int inside = 0;
  for (int i = 0; i < kSuper; ++i)
    for (int j = 0; j < kSuper; ++j) {
      const double py = oy + (i + 0.5) / kSuper, px = ox + (j + 0.5) / kSuper;
      inside += px * px + py * py <= s * s;
    }
  return double(inside) / double(kSuper * kSuper);
}

}  // namespace sequence_detail

inline Tensor render_shape(ShapeKind shape, std::size_t h, std::size_t w, double cy, double cx, double size) {
  std::vector<double> v(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = sequence_detail::coverage(shape, long(y), long(x), cy, cx, size);
  return Tensor({h, w}, std::move(v));
}

inline SyntheticSequence make_sequence(const SequenceConfig& cfg, Rng& rng) {
  using sequence_detail::quantize;
  const double t_last = double(cfg.frames - 1);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    SyntheticSequence s;
    s.shape = rng.below(2) ? ShapeKind::disc : ShapeKind::square;
    if (cfg.integer_motion) {
      const auto m = std::uint64_t(std::floor(cfg.max_speed));
      s.dx = double(rng.below(2 * m + 1)) - double(m);
      s.dy = double(rng.below(2 * m + 1)) - double(m);
    } else {
      s.dx = quantize(rng.uniform(-cfg.max_speed, cfg.max_speed));
      s.dy = quantize(rng.uniform(-cfg.max_speed, cfg.max_speed));
    }
    const double s0 = rng.uniform(cfg.size_min, cfg.size_max);
    const double growth =
        cfg.kind == SequenceKind::translate_and_grow ? rng.uniform(cfg.growth_min, cfg.growth_max) : 0.0;
    const double s_max = s0 + growth * t_last;
    // The shape stays at least one pixel inside the border on every frame.
    const double lo_x = 1.0 + s_max - std::min(0.0, s.dx) * t_last, hi_x = double(cfg.w) - 1.0 - s_max - std::max(0.0, s.dx) * t_last;
    const double lo_y = 1.0 + s_max - std::min(0.0, s.dy) * t_last, hi_y = double(cfg.h) - 1.0 - s_max - std::max(0.0, s.dy) * t_last;
    if (!(lo_x <= hi_x && lo_y <= hi_y)) continue;
    const double x0 = quantize(rng.uniform(lo_x, hi_x)), y0 = quantize(rng.uniform(lo_y, hi_y));
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const double size = s0 + growth * double(t);
      const double cx = x0 + s.dx * double(t), cy = y0 + s.dy * double(t);
      Tensor frame = render_shape(s.shape, cfg.h, cfg.w, cy, cx, size);
      std::vector<double> m(frame.size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = frame[i] >= 0.5 ? 1.0 : 0.0;
      s.frames.push_back(std::move(frame));
      s.masks.emplace_back(Shape{cfg.h, cfg.w}, std::move(m));
      s.sizes.push_back(size);
      s.cx.push_back(cx);
      s.cy.push_back(cy);
    }
    return s;
  }
  throw ConfigError("sequences: a " + std::to_string(cfg.h) + "x" + std::to_string(cfg.w) +
                    " image cannot hold the requested motion and size range");
}

inline std::vector<SyntheticSequence> make_synthetic_sequences(const SequenceConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<SyntheticSequence> out;
  out.reserve(cfg.count);
  for (std::size_t k = 0; k < cfg.count; ++k) out.push_back(make_sequence(cfg, rng));
  return out;
}

}  // namespace microsim::lab
