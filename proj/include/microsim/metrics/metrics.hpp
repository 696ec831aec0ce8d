#pragma once

// Image, distribution and transport metrics. None of these are
// differentiable; inputs are read through Tensor values or Eigen matrices.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "microsim/numeric/tensor.hpp"

namespace microsim::metrics {

struct ImageMetrics {
  double l1 = 0.0;
  double mse = 0.0;
  double psnr = 0.0;  // +inf when mse == 0
  double ssim = 0.0;
};

/// Range mapped onto [0, 1] before SSIM is evaluated.
struct IntensityRange {
  double lo = 0.0;
  double hi = 1.0;
};

namespace metrics_detail {

inline constexpr double kSsimGuard = 1e-12;

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
  if (a.size() == 0) throw ShapeError(std::string(op) + ": empty image");
}

}  // namespace metrics_detail

/// Global-statistics SSIM:
///   4 E[p] E[t] Cov[p, t] / ((E[p]^2 + E[t]^2)(Var[p] + Var[t]))
/// with population moments and no stabilizing constants. Identical inputs
/// give 1; otherwise the denominator is floored at 1e-12.
inline double ssim_global(const Tensor& pred, const Tensor& target, IntensityRange range = {}) {
  metrics_detail::require_same(pred, target, "ssim_global");
  if (!(range.hi > range.lo)) throw DomainError("ssim_global: intensity range must have hi > lo");
  const auto P = pred.values(), T = target.values();
  if (std::equal(P.begin(), P.end(), T.begin())) return 1.0;
  const double n = double(P.size()), span = range.hi - range.lo;
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    mp += (P[i] - range.lo) / span;
    mt += (T[i] - range.lo) / span;
  }
  mp /= n;
  mt /= n;
  double vp = 0.0, vt = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double dp = (P[i] - range.lo) / span - mp, dt = (T[i] - range.lo) / span - mt;
    vp += dp * dp;
    vt += dt * dt;
    cov += dp * dt;
  }
  vp /= n;
  vt /= n;
  cov /= n;
  const double den = (mp * mp + mt * mt) * (vp + vt);
  return 4.0 * mp * mt * cov / std::max(den, metrics_detail::kSsimGuard);
}

/// L1 and MSE are pixel means; PSNR = 10 log10(max(pred)^2 / MSE) with the
/// maximum taken over the prediction.
inline ImageMetrics image_metrics(const Tensor& pred, const Tensor& target, IntensityRange range = {}) {
  metrics_detail::require_same(pred, target, "image_metrics");
  const auto P = pred.values(), T = target.values();
  ImageMetrics m;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double d = P[i] - T[i];
    m.l1 += std::abs(d);
    m.mse += d * d;
    peak = std::max(peak, P[i]);
  }
  m.l1 /= double(P.size());
  m.mse /= double(P.size());
  m.psnr = m.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(peak * peak / m.mse);
  m.ssim = ssim_global(pred, target, range);
  return m;
}

// ------------------------------------------------------------------ FID

struct FeatureStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

namespace metrics_detail {

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kEigenFloor = -1e-8;

inline void validate(const FeatureStats& s, const char* which) {
  const auto d = s.mu.size();
  if (s.sigma.rows() != d || s.sigma.cols() != d) {
    throw ShapeError(std::string("frechet_distance: ") + which + " covariance is " + std::to_string(s.sigma.rows()) +
                     "x" + std::to_string(s.sigma.cols()) + " for a mean of length " + std::to_string(d));
  }
  const double scale = std::max(1.0, s.sigma.cwiseAbs().maxCoeff());
  if ((s.sigma - s.sigma.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
    throw DomainError(std::string("frechet_distance: ") + which + " covariance is not symmetric");
  }
}

/// Eigen-decomposition of a symmetric PSD matrix with eigenvalues in
/// [-1e-8, 0) clipped to zero.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError(std::string("frechet_distance: eigensolver failed on ") + what);
  if (m.rows() > 0 && es.eigenvalues().minCoeff() < kEigenFloor) {
    throw DomainError(std::string("frechet_distance: ") + what + " has eigenvalue " +
                      std::to_string(es.eigenvalues().minCoeff()) + " below -1e-8");
  }
  return es;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  const auto es = psd_eigen(m, what);
  const Eigen::VectorXd r = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace metrics_detail

/// Mean and unbiased covariance of feature rows [n, d], n >= 2.
inline FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw ShapeError("feature_stats: need at least two feature rows");
  FeatureStats s;
  s.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mu.transpose();
  s.sigma = centered.transpose() * centered / double(features.rows() - 1);
  return s;
}

/// ||mu_x - mu_g||^2 + Tr(S_x + S_g) - 2 Tr((S_x^{1/2} S_g S_x^{1/2})^{1/2}).
/// The conjugated square root has the same trace as (S_x S_g)^{1/2} for PSD inputs.
inline double frechet_distance(const FeatureStats& real, const FeatureStats& fake) {
  metrics_detail::validate(real, "real");
  metrics_detail::validate(fake, "fake");
  if (real.mu.size() != fake.mu.size()) {
    throw ShapeError("frechet_distance: feature dimensions " + std::to_string(real.mu.size()) + " and " +
                     std::to_string(fake.mu.size()) + " differ");
  }
  metrics_detail::psd_eigen(fake.sigma, "fake covariance");
  const Eigen::MatrixXd root = metrics_detail::psd_sqrt(real.sigma, "real covariance");
  Eigen::MatrixXd inner = root * fake.sigma * root;
  inner = 0.5 * (inner + inner.transpose());
  const auto es = metrics_detail::psd_eigen(inner, "conjugated product");
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double fid = (real.mu - fake.mu).squaredNorm() + real.sigma.trace() + fake.sigma.trace() - 2.0 * cross;
  return std::max(0.0, fid);
}

// ------------------------------------------------------- inception score

/// exp(mean_x KL(p(y|x) || p(y))) with p(y) the row mean; 0 log 0 = 0.
inline double inception_style_score(const Eigen::MatrixXd& probs) {
  if (probs.rows() == 0 || probs.cols() == 0) throw ShapeError("inception_style_score: empty probability table");
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double total = probs.row(i).sum();
    if (probs.row(i).minCoeff() < 0.0 || !std::isfinite(total) || std::abs(total - 1.0) > 1e-9) {
      throw DomainError("inception_style_score: row " + std::to_string(i) + " is not a probability vector");
    }
  }
  const Eigen::RowVectorXd marginal = probs.colwise().mean();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double p = probs(i, k);
      if (p > 0.0) kl += p * std::log(p / marginal(k));
    }
  return std::exp(std::max(0.0, kl / double(probs.rows())));
}

// --------------------------------------------------------- earth mover

/// 1d earth-mover distance with unit spacing: sum_i |prefix_sum(p - q)_i|.
/// Totals must agree within 1e-9 relative.
inline double discrete_emd(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) {
    throw ShapeError("discrete_emd: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()) +
                     " differ");
  }
  double tp = 0.0, tq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0)) throw DomainError("discrete_emd: masses must be nonnegative");
    tp += p[i];
    tq += q[i];
  }
  if (std::abs(tp - tq) > 1e-9 * std::max(1.0, std::max(tp, tq))) {
    throw DomainError("discrete_emd: total masses " + std::to_string(tp) + " and " + std::to_string(tq) + " differ");
  }
  double carry = 0.0, cost = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    carry += p[i] - q[i];
    cost += std::abs(carry);
  }
  return cost;
}

}  // namespace microsim::metrics
