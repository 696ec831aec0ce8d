#pragma once

// Adversarial value functions. Expectations are arithmetic means over the batch.

#include <cmath>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::losses {

struct DiscreteDistribution {
  std::vector<double> support;
  std::vector<double> probs;

  DiscreteDistribution() = default;
  DiscreteDistribution(std::vector<double> support_, std::vector<double> probs_)
      : support(std::move(support_)), probs(std::move(probs_)) {
    validate();
  }

  void validate() const {
    if (support.size() != probs.size()) throw ShapeError("DiscreteDistribution: support/probs length mismatch");
    double s = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw DomainError("DiscreteDistribution: negative probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) {
      throw DomainError("DiscreteDistribution: probabilities sum to " + std::to_string(s));
    }
  }
  std::size_t size() const { return probs.size(); }
};

/// V(G, D) = sum_x p_data(x) log D(x) + p_g(x) log(1 - D(x)), with the
/// convention 0 log 0 = 0. D(x) must lie in [0, 1]; a value of 0 or 1 is an
/// error wherever the matching weight is positive.
inline double gan_value_discrete(const DiscreteDistribution& p_data, const DiscreteDistribution& p_g,
                                 const std::vector<double>& d) {
  if (p_data.support != p_g.support) throw ShapeError("gan_value_discrete: supports are not aligned");
  if (d.size() != p_data.size()) throw ShapeError("gan_value_discrete: one D value per atom required");
  double v = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool bad = !(d[i] >= 0.0 && d[i] <= 1.0) || (d[i] == 0.0 && p_data.probs[i] > 0.0) ||
                     (d[i] == 1.0 && p_g.probs[i] > 0.0);
    if (bad) {
      throw DomainError("gan_value_discrete: log of zero at atom " + std::to_string(i) + " (D = " +
                        std::to_string(d[i]) + ")");
    }
    if (p_data.probs[i] > 0.0) v += p_data.probs[i] * std::log(d[i]);
    if (p_g.probs[i] > 0.0) v += p_g.probs[i] * std::log1p(-d[i]);
  }
  return v;
}

/// D*(x) = p_data(x) / (p_data(x) + p_g(x)); atoms outside both supports get 1/2.
inline std::vector<double> optimal_discriminator(const DiscreteDistribution& p_data,
                                                 const DiscreteDistribution& p_g) {
  if (p_data.support != p_g.support) throw ShapeError("optimal_discriminator: supports are not aligned");
  std::vector<double> d(p_data.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double s = p_data.probs[i] + p_g.probs[i];
    d[i] = s > 0.0 ? p_data.probs[i] / s : 0.5;
  }
  return d;
}

enum class GanVariant { minimax, non_saturating, wasserstein };

struct GanLosses {
  Tensor d;  // discriminator (critic) loss, minimized
  Tensor g;  // generator loss, minimized
};

namespace gan_detail {

inline void require_probabilities(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0 && t[i] < 1.0)) {
      throw DomainError(std::string("gan_losses: ") + what + " score " + std::to_string(t[i]) +
                        " at index " + std::to_string(i) + " is outside (0, 1)");
    }
  }
}

inline Tensor log1m(const Tensor& p) { return log(add_scalar(mul_scalar(p, -1.0), 1.0)); }

}  // namespace gan_detail

/// Both players' losses from discriminator outputs. Log variants take
/// post-sigmoid probabilities; wasserstein takes raw critic scores.
///   minimax:        L_D = -E log D(x) - E log(1 - D(G(z))),  L_G = E log(1 - D(G(z)))
///   non_saturating: L_D as minimax,                          L_G = -E log D(G(z))
///   wasserstein:    L_D = -E D(x) + E D(G(z)),               L_G = -E D(G(z))
inline GanLosses gan_losses(const Tensor& scores_real, const Tensor& scores_fake, GanVariant variant) {
  if (variant == GanVariant::wasserstein) {
    return {add(mul_scalar(mean(scores_real), -1.0), mean(scores_fake)), mul_scalar(mean(scores_fake), -1.0)};
  }
  gan_detail::require_probabilities(scores_real, "real");
  gan_detail::require_probabilities(scores_fake, "fake");
  const Tensor fake_term = mean(gan_detail::log1m(scores_fake));
  const Tensor loss_d = sub(mul_scalar(mean(log(scores_real)), -1.0), fake_term);
  if (variant == GanVariant::minimax) return {loss_d, fake_term};
  return {loss_d, mul_scalar(mean(log(scores_fake)), -1.0)};
}

/// Same losses from pre-sigmoid logits, using log D = log_sigmoid(l) and
/// log(1 - D) = log_sigmoid(-l). Wasserstein scores pass through unchanged.
inline GanLosses gan_losses_from_logits(const Tensor& logits_real, const Tensor& logits_fake,
                                        GanVariant variant) {
  if (variant == GanVariant::wasserstein) return gan_losses(logits_real, logits_fake, variant);
  const Tensor fake_term = mean(log_sigmoid(-logits_fake));
  const Tensor loss_d = sub(mul_scalar(mean(log_sigmoid(logits_real)), -1.0), fake_term);
  if (variant == GanVariant::minimax) return {loss_d, fake_term};
  return {loss_d, mul_scalar(mean(log_sigmoid(logits_fake)), -1.0)};
}

/// U-Net discriminator output for a batch: one scalar score per sample and a
/// per-pixel score map, both post-sigmoid.
struct DualScores {
  Tensor scalar;  // [b]
  Tensor pixel;   // [b, h, w]
};

/// Encoder (scalar) and decoder (pixel) terms summed; the pixel expectation is
/// the mean over batch and pixels.
inline GanLosses unet_dual_losses(const DualScores& real, const DualScores& fake) {
  for (const auto* s : {&real, &fake}) {
    if (s->pixel.rank() < 2 || s->pixel.dim(0) != s->scalar.size()) {
      throw ShapeError("unet_dual_losses: pixel map " + shape_string(s->pixel.shape()) +
                       " does not match scalar scores " + shape_string(s->scalar.shape()));
    }
  }
  const auto scalar = gan_losses(real.scalar, fake.scalar, GanVariant::non_saturating);
  const auto pixel = gan_losses(real.pixel, fake.pixel, GanVariant::non_saturating);
  return {add(scalar.d, pixel.d), add(scalar.g, pixel.g)};
}

}  // namespace microsim::losses
