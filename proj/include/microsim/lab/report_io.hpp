#pragma once

// Run artifacts: CSV curves (header row, '.' decimal, LF), binary P5
// graymaps and resolved-config echoes. Numbers are printed with %.17g so
// identical runs produce identical bytes.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "microsim/lab/frame_predictor.hpp"
#include "microsim/lab/ring_gan.hpp"

namespace microsim::lab {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  return os;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = open_output(path, true);
  os << text;
}

/// Byte of intensity v: clamp to [0, 1], then floor(255 v + 0.5).
inline unsigned char gray_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::floor(255.0 * c + 0.5));
}

/// P5 header "P5\n<w> <h>\n255\n" followed by h*w bytes, row-major.
inline void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm: expected [h, w], got " + shape_string(image.shape()));
  auto os = open_output(path, true);
  os << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (std::size_t i = 0; i < image.size(); ++i) os.put(static_cast<char>(gray_byte(image[i])));
}

/// Reads a binary P5 graymap (maxval <= 255, `#` comments in the header) into [h, w] values in [0, 1].
inline Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path.string());
  auto token = [&](const char* what) {
    std::string t;
    for (int c = is.get(); c != EOF; c = is.get()) {
      if (c == '#' && t.empty()) {
        while (c != EOF && c != '\n') c = is.get();
      } else if (std::isspace(c)) {
        if (!t.empty()) return t;
      } else {
        t.push_back(char(c));
      }
    }
    throw ConfigError(path.string() + ": truncated header, missing " + what);
  };
  if (token("magic") != "P5") throw ConfigError(path.string() + ": not a binary graymap (P5)");
  std::size_t dims[3];
  const char* names[3] = {"width", "height", "maxval"};
  for (int i = 0; i < 3; ++i) {
    const std::string t = token(names[i]);
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), dims[i]);
    if (ec != std::errc() || p != t.data() + t.size()) {
      throw ConfigError(path.string() + ": bad " + names[i] + " '" + t + "'");
    }
  }
  const auto [w, h, maxval] = dims;
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw ConfigError(path.string() + ": unsupported P5 header");
  std::vector<double> v(w * h);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int c = is.get();
    if (c == EOF) throw ConfigError(path.string() + ": pixel data ends at offset " + std::to_string(i));
    v[i] = double(c) / double(maxval);
  }
  if (is.peek() != EOF) throw ConfigError(path.string() + ": trailing bytes after pixel data");
  return Tensor({h, w}, std::move(v));
}

/// Rasterizes point sets over [-extent, extent]^2 (y up): real points at
/// 0.5, generated points at 1.0 drawn on top, background 0.
inline Tensor scatter_raster(const Tensor& real, const Tensor& fake, std::size_t size = 128, double extent = 1.5) {
  std::vector<double> img(size * size, 0.0);
  auto plot = [&](const Tensor& pts, double level) {
    if (pts.rank() != 2 || pts.dim(1) != 2) throw ShapeError("scatter_raster: expected [n, 2] points");
    for (std::size_t i = 0; i < pts.dim(0); ++i) {
      const double fx = (pts[2 * i] + extent) / (2.0 * extent), fy = (extent - pts[2 * i + 1]) / (2.0 * extent);
      if (!(fx >= 0.0 && fx < 1.0 && fy >= 0.0 && fy < 1.0)) continue;
      img[std::size_t(fy * double(size)) * size + std::size_t(fx * double(size))] = level;
    }
  };
  plot(real, 0.5);
  plot(fake, 1.0);
  return Tensor({size, size}, std::move(img));
}

/// step, loss_g, loss_d, coverage; coverage is empty on unmeasured steps.
inline void write_gan_curves(const std::filesystem::path& path, const TrainReport& r) {
  auto os = open_output(path, true);
  os << "step,loss_g,loss_d,coverage\n";
  std::size_t c = 0;
  for (std::size_t i = 0; i < r.loss_g.size(); ++i) {
    os << i + 1 << ',' << format_number(r.loss_g[i]) << ',' << format_number(r.loss_d[i]) << ',';
    while (c < r.coverage.size() && r.coverage[c].step < i + 1) ++c;
    if (c < r.coverage.size() && r.coverage[c].step == i + 1) os << r.coverage[c].covered;
    os << '\n';
  }
}

/// stage, step, loss; steps count from 1 within each stage.
inline void write_stage_curves(const std::filesystem::path& path, const FrameTrainReport& r) {
  auto os = open_output(path, true);
  os << "stage,step,loss\n";
  for (const auto& c : r.curves)
    for (std::size_t i = 0; i < c.loss.size(); ++i)
      os << stage_name(c.stage) << ',' << i + 1 << ',' << format_number(c.loss[i]) << '\n';
}

/// One row per executed stage with held-out metrics and rollout MSE columns.
inline void write_stage_validation(const std::filesystem::path& path, const FrameTrainReport& r) {
  auto os = open_output(path, true);
  const std::size_t k = r.validation.empty() ? 0 : r.validation.front().metrics.rollout_mse.size();
  os << "stage,flow_median_error,kernel_loss,one_frame_mse,baseline_mse,l1,psnr,ssim";
  for (std::size_t j = 1; j <= k; ++j) os << ",rollout_mse_" << j;
  os << '\n';
  for (const auto& sv : r.validation) {
    const auto& v = sv.metrics;
    os << stage_name(sv.stage) << ',' << format_number(v.flow_median_error) << ',' << format_number(v.kernel_loss)
       << ',' << format_number(v.one_frame_mse) << ',' << format_number(v.baseline_mse) << ','
       << format_number(v.one_frame.l1) << ',' << format_number(v.one_frame.psnr) << ','
       << format_number(v.one_frame.ssim);
    for (double m : v.rollout_mse) os << ',' << format_number(m);
    os << '\n';
  }
}

/// y, x, u, v per pixel.
inline void write_motion_csv(const std::filesystem::path& path, const warp::MotionField& m) {
  auto os = open_output(path, true);
  os << "y,x,u,v\n";
  const std::size_t h = m.u.dim(0), w = m.u.dim(1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      os << y << ',' << x << ',' << format_number(m.u[y * w + x]) << ',' << format_number(m.v[y * w + x]) << '\n';
}

}  // namespace microsim::lab
