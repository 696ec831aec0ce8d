#pragma once

// General adaptive robust loss and its probabilistic (negative log-likelihood)
// form.
//
//   rho(x, alpha, c) = |alpha - 2| / alpha * (((x / c)^2 / |alpha - 2| + 1)^(alpha / 2) - 1)
//
// alpha = 2, alpha = 0 and alpha = -inf are removable singularities evaluated
// by closed-form branches. The density is exp(-rho) / (c Z(alpha)), defined
// for alpha >= 0; log Z is served by a cubic Hermite spline over alpha.

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::losses {

namespace robust_detail {

// Half-width of the window around alpha = 0 and alpha = 2 inside which the
// alpha-derivative is taken as the mean of the two one-sided values at the
// window edges. At alpha = 2 the true derivative diverges like log|alpha - 2|.
constexpr double kBranchWindow = 1e-6;

inline bool is_neg_inf(double a) { return std::isinf(a) && a < 0; }

inline double rho(double x, double alpha, double c) {
  const double z = (x / c) * (x / c);
  if (alpha == 2.0) return 0.5 * z;
  if (alpha == 0.0) return std::log1p(0.5 * z);
  if (is_neg_inf(alpha)) return -std::expm1(-0.5 * z);
  const double b = std::abs(alpha - 2.0);
  return b / alpha * std::expm1(0.5 * alpha * std::log1p(z / b));
}

struct Partials {
  double dx, dc, dalpha;
};

// General-case partials; alpha must avoid {0, 2}.
inline Partials general_partials(double x, double alpha, double c) {
  const double z = (x / c) * (x / c);
  const double b = std::abs(alpha - 2.0), s = alpha > 2.0 ? 1.0 : -1.0;
  const double p = 0.5 * alpha;
  const double lq = std::log1p(z / b);
  const double qp = std::exp(p * lq);           // q^p
  const double qpm1 = std::exp((p - 1.0) * lq);  // q^(p - 1)
  const double dq = -z * s / (b * b);            // dq / dalpha
  const double dalpha = (s * alpha - b) / (alpha * alpha) * std::expm1(p * lq) +
                        b / alpha * qp * (0.5 * lq + p * dq * qpm1 / qp);
  return {x / (c * c) * qpm1, -z / c * qpm1, dalpha};
}

inline Partials partials(double x, double alpha, double c) {
  const double z = (x / c) * (x / c);
  if (is_neg_inf(alpha)) {
    const double e = std::exp(-0.5 * z);
    return {x / (c * c) * e, -z / c * e, 0.0};
  }
  for (double center : {0.0, 2.0}) {
    if (std::abs(alpha - center) < kBranchWindow) {
      const auto lo = general_partials(x, center - kBranchWindow, c);
      const auto hi = general_partials(x, center + kBranchWindow, c);
      Partials out{0.5 * (lo.dx + hi.dx), 0.5 * (lo.dc + hi.dc), 0.5 * (lo.dalpha + hi.dalpha)};
      if (alpha == 2.0) out = {x / (c * c), -z / c, out.dalpha};
      if (alpha == 0.0) out = {x / (c * c) / (0.5 * z + 1.0), -z / c / (0.5 * z + 1.0), out.dalpha};
      return out;
    }
  }
  return general_partials(x, alpha, c);
}

inline double scalar_param(const Tensor& t, const char* what) {
  if (t.size() != 1) {
    throw ShapeError(std::string("garloss: ") + what + " must hold one value, got " +
                     shape_string(t.shape()));
  }
  return t[0];
}

}  // namespace robust_detail

/// Elementwise robust loss for a scalar alpha and scale c (both size-1 tensors).
inline Tensor garloss_rho(const Tensor& x, const Tensor& alpha, const Tensor& c) {
  const double a = robust_detail::scalar_param(alpha, "alpha");
  const double cv = robust_detail::scalar_param(c, "c");
  if (!(cv > 0.0)) throw DomainError("garloss_rho: scale c must be > 0, got " + std::to_string(cv));
  const auto X = x.values();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = robust_detail::rho(X[i], a, cv);
  return detail::make_result("garloss_rho", x.shape(), std::move(out), {x, alpha, c},
                             [a, cv](detail::Node& self) {
                               const auto& X = self.parents[0]->values;
                               double* gx = detail::parent_grad(self, 0);
                               double* ga = detail::parent_grad(self, 1);
                               double* gc = detail::parent_grad(self, 2);
                               for (std::size_t i = 0; i < X.size(); ++i) {
                                 const auto d = robust_detail::partials(X[i], a, cv);
                                 const double g = self.grad[i];
                                 if (gx) gx[i] += g * d.dx;
                                 if (ga) ga[0] += g * d.dalpha;
                                 if (gc) gc[0] += g * d.dc;
                               }
                             });
}

/// Fixed-parameter form; alpha may be -infinity (Welsch / Leclerc limit).
inline Tensor garloss_rho(const Tensor& x, double alpha, double c) {
  if (!(c > 0.0)) throw DomainError("garloss_rho: scale c must be > 0, got " + std::to_string(c));
  if (std::isnan(alpha) || (std::isinf(alpha) && alpha > 0)) {
    throw DomainError("garloss_rho: alpha must be finite or -inf");
  }
  if (robust_detail::is_neg_inf(alpha)) {
    return mul_scalar(add_scalar(exp(mul_scalar(square(x), -0.5 / (c * c))), -1.0), -1.0);
  }
  return garloss_rho(x, Tensor::scalar(alpha), Tensor::scalar(c));
}

inline double garloss_rho(double x, double alpha, double c) {
  if (!(c > 0.0)) throw DomainError("garloss_rho: scale c must be > 0, got " + std::to_string(c));
  return robust_detail::rho(x, alpha, c);
}

/// Z(alpha) = integral over the real line of exp(-rho(x, alpha, 1)), by
/// double-exponential quadrature on [0, inf).
inline double z_quadrature(double alpha) {
  if (!(alpha >= 0.0) || std::isinf(alpha)) {
    throw DomainError("z_quadrature: Z(alpha) diverges for alpha < 0, got " + std::to_string(alpha));
  }
  if (alpha == 2.0) return std::sqrt(2.0 * M_PI);
  boost::math::quadrature::exp_sinh<double> integrator;
  const double half = integrator.integrate(
      [alpha](double x) { return std::exp(-robust_detail::rho(x, alpha, 1.0)); }, 0.0,
      std::numeric_limits<double>::infinity(), 1e-12);
  return 2.0 * half;
}

/// Cubic Hermite interpolant of log Z(alpha). The non-smooth part
/// 0.25 (alpha - 2) log|alpha - 2| is subtracted before interpolation and
/// added back on evaluation.
class ZSpline {
 public:
  explicit ZSpline(std::vector<double> grid) : knots_(std::move(grid)) {
    if (knots_.size() < 3) throw DomainError("build_z_spline: need at least 3 knots");
    if (knots_.front() != 0.0 || knots_.back() < 4.0) {
      throw DomainError("build_z_spline: grid must cover [0, 4], got [" + std::to_string(knots_.front()) +
                        ", " + std::to_string(knots_.back()) + "]");
    }
    for (std::size_t k = 1; k < knots_.size(); ++k) {
      const double step = knots_[k] - knots_[k - 1];
      if (!(step > 0.0) || step > 0.05 + 1e-12) {
        throw DomainError("build_z_spline: knot spacing must be in (0, 0.05], got " +
                          std::to_string(step) + " at knot " + std::to_string(k));
      }
    }
    values_.resize(knots_.size());
    for (std::size_t k = 0; k < knots_.size(); ++k)
      values_[k] = std::log(z_quadrature(knots_[k])) - singular(knots_[k]);
    slopes_.resize(knots_.size());
    const std::size_t n = knots_.size();
    for (std::size_t k = 1; k + 1 < n; ++k) slopes_[k] = three_point(k - 1, k, k + 1, k);
    slopes_[0] = three_point(0, 1, 2, 0);
    slopes_[n - 1] = three_point(n - 3, n - 2, n - 1, n - 1);
  }

  /// Knots 0, 0.05, ..., 4.
  static std::shared_ptr<const ZSpline> standard() {
    static const auto spline = [] {
      std::vector<double> grid(81);
      for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = 0.05 * double(k);
      return std::make_shared<const ZSpline>(grid);
    }();
    return spline;
  }

  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }

  double log_z(double alpha) const { return eval(alpha).value; }
  double z(double alpha) const { return std::exp(log_z(alpha)); }
  /// d log Z / d alpha; averaged over a small window at alpha = 2 where it diverges.
  double dlog_z(double alpha) const { return eval(alpha).slope; }

 private:
  struct Eval {
    double value, slope;
  };

  static double singular(double a) {
    const double d = a - 2.0;
    return d == 0.0 ? 0.0 : 0.25 * d * std::log(std::abs(d));
  }
  static double singular_slope(double a) {
    const double d = std::max(std::abs(a - 2.0), robust_detail::kBranchWindow);
    return 0.25 * (std::log(d) + 1.0);
  }

  // Derivative at knot `at` of the quadratic through knots i, j, k.
  double three_point(std::size_t i, std::size_t j, std::size_t k, std::size_t at) const {
    const double xi = knots_[i], xj = knots_[j], xk = knots_[k], x = knots_[at];
    return values_[i] * ((x - xj) + (x - xk)) / ((xi - xj) * (xi - xk)) +
           values_[j] * ((x - xi) + (x - xk)) / ((xj - xi) * (xj - xk)) +
           values_[k] * ((x - xi) + (x - xj)) / ((xk - xi) * (xk - xj));
  }

  Eval eval(double alpha) const {
    if (!(alpha >= lower()) || !(alpha <= upper())) {
      throw DomainError("ZSpline: alpha = " + std::to_string(alpha) + " outside [" +
                        std::to_string(lower()) + ", " + std::to_string(upper()) +
                        "]; Z(alpha) diverges for alpha < 0");
    }
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), alpha);
    const std::size_t k = std::min<std::size_t>(std::size_t(it - knots_.begin()), knots_.size() - 1) - 1;
    const double h = knots_[k + 1] - knots_[k], t = (alpha - knots_[k]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double y0 = values_[k], y1 = values_[k + 1], m0 = slopes_[k] * h, m1 = slopes_[k + 1] * h;
    const double value = (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 +
                         (t3 - t2) * m1;
    const double slope =
        ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * m1) / h;
    return {value + singular(alpha), slope + singular_slope(alpha)};
  }

  std::vector<double> knots_, values_, slopes_;
};

inline std::shared_ptr<const ZSpline> build_z_spline(std::vector<double> alpha_grid) {
  return std::make_shared<const ZSpline>(std::move(alpha_grid));
}

/// log Z(alpha) as a differentiable scalar op.
inline Tensor log_partition(const Tensor& alpha, std::shared_ptr<const ZSpline> spline) {
  const double a = robust_detail::scalar_param(alpha, "alpha");
  if (a < 0.0) throw DomainError("garloss_nll: alpha must be >= 0 (Z diverges), got " + std::to_string(a));
  const double value = spline->log_z(a);
  return detail::make_result("log_partition", Shape{1}, {value}, {alpha},
                             [a, spline](detail::Node& self) {
                               if (double* g = detail::parent_grad(self, 0)) g[0] += self.grad[0] * spline->dlog_z(a);
                             });
}

struct RobustLossParams {
  double alpha = 1.0;
  double c = 1.0;
  std::shared_ptr<const ZSpline> z_spline;  // defaults to ZSpline::standard()

  std::shared_ptr<const ZSpline> spline() const { return z_spline ? z_spline : ZSpline::standard(); }
};

/// Mean negative log-likelihood: mean rho(x) + log c + log Z(alpha).
inline Tensor garloss_nll(const Tensor& x, const Tensor& alpha, const Tensor& c,
                          std::shared_ptr<const ZSpline> spline = ZSpline::standard()) {
  const double a = robust_detail::scalar_param(alpha, "alpha");
  if (!(a >= 0.0)) throw DomainError("garloss_nll: alpha must be >= 0 (Z diverges), got " + std::to_string(a));
  return add(add(mean(garloss_rho(x, alpha, c)), log(c)), log_partition(alpha, std::move(spline)));
}

inline Tensor garloss_nll(const Tensor& x, const RobustLossParams& params) {
  if (!(params.alpha >= 0.0)) {
    throw DomainError("garloss_nll: alpha must be >= 0 (Z diverges), got " + std::to_string(params.alpha));
  }
  return garloss_nll(x, Tensor::scalar(params.alpha), Tensor::scalar(params.c), params.spline());
}

/// Density p(x | alpha, c) = exp(-rho(x, alpha, c)) / (c Z(alpha)).
inline double garloss_density(double x, const RobustLossParams& params) {
  return std::exp(-garloss_rho(x, params.alpha, params.c)) / (params.c * params.spline()->z(params.alpha));
}

/// NLL with trainable shape and scale:
///   alpha = lo + (hi - lo) sigmoid(raw_alpha),  c = exp(raw_c).
class AdaptiveRobustLoss {
 public:
  static constexpr double kAlphaLo = 0.001;
  static constexpr double kAlphaHi = 3.999;

  AdaptiveRobustLoss(double alpha0, double c0, std::shared_ptr<const ZSpline> spline = ZSpline::standard())
      : spline_(std::move(spline)) {
    if (!(alpha0 > kAlphaLo && alpha0 < kAlphaHi)) {
      throw DomainError("AdaptiveRobustLoss: initial alpha must be in (0.001, 3.999)");
    }
    if (!(c0 > 0.0)) throw DomainError("AdaptiveRobustLoss: initial c must be > 0");
    const double t = (alpha0 - kAlphaLo) / (kAlphaHi - kAlphaLo);
    raw_alpha = Tensor::scalar(std::log(t / (1.0 - t)), true);
    raw_c = Tensor::scalar(std::log(c0), true);
  }

  Tensor alpha() const { return add_scalar(mul_scalar(sigmoid(raw_alpha), kAlphaHi - kAlphaLo), kAlphaLo); }
  Tensor c() const { return exp(raw_c); }
  Tensor operator()(const Tensor& x) const { return garloss_nll(x, alpha(), c(), spline_); }
  std::vector<Tensor> parameters() const { return {raw_alpha, raw_c}; }

  Tensor raw_alpha;
  Tensor raw_c;

 private:
  std::shared_ptr<const ZSpline> spline_;
};

}  // namespace microsim::losses
