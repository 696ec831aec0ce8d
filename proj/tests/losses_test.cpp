#include <gtest/gtest.h>

#include <cmath>

#include "microsim/losses/gan.hpp"
#include "microsim/losses/regularizers.hpp"
#include "microsim/losses/robust.hpp"
#include "microsim/losses/stage.hpp"
#include "microsim/numeric/gradcheck.hpp"
#include "microsim/numeric/rng.hpp"

using namespace microsim;
using namespace microsim::losses;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Closed form without branch handling.
double rho_formula(double x, double a, double c) {
  const double b = std::abs(a - 2.0);
  return b / a * (std::pow((x / c) * (x / c) / b + 1.0, a / 2.0) - 1.0);
}

double symmetric_limit(double x, double at, double c, double h = 1e-6) {
  return 0.5 * (rho_formula(x, at - h, c) + rho_formula(x, at + h, c));
}

// Composite Simpson of f over the real line via x = t / (1 - t^2), t in (-1, 1).
// `end` is the limit of the transformed integrand at t = +-1 (nonzero only
// for 1/x^2 tails).
template <class F>
double real_line_integral(F f, double end = 0.0, int n = 400000) {
  auto g = [&](double t) {
    const double d = 1.0 - t * t;
    return f(t / d) * (1.0 + t * t) / (d * d);
  };
  const double h = 2.0 / n;
  double s = 2.0 * end;
  for (int i = 1; i < n; ++i) s += g(-1.0 + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// exp(-rho(x, 0, c)) ~ 2 c^2 / x^2, whose transformed integrand tends to 4 c^2.
double z_oracle(double alpha) {
  return real_line_integral([alpha](double x) { return std::exp(-garloss_rho(x, alpha, 1.0)); },
                            alpha == 0.0 ? 4.0 : 0.0);
}

void expect_passes(const ScalarFn& f, const Tensor& x, const char* what) {
  const auto r = gradient_check(f, x, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed()) << what << ": max rel error " << r.max_rel_error << " at " << r.worst_index;
}

}  // namespace

// ------------------------------------------------------------ robust rho

TEST(GarlossRho, ZeroAtOrigin) {
  for (double a : {-HUGE_VAL, -10.0, -2.0, 0.0, 0.5, 1.0, 2.0, 3.0, 8.0})
    for (double c : {0.1, 1.0, 7.0}) EXPECT_EQ(garloss_rho(0.0, a, c), 0.0) << a << " " << c;
}

TEST(GarlossRho, Charbonnier) {
  for (double x : {-3.0, -0.2, 0.7, 4.5}) EXPECT_NEAR(garloss_rho(x, 1.0, 1.0), std::sqrt(x * x + 1) - 1, 1e-15);
}

TEST(GarlossRho, BranchesMatchNumericLimits) {
  EXPECT_DOUBLE_EQ(garloss_rho(1.5, 2.0, 1.0), 1.125);
  for (double x : {-4.0, -1.5, 0.3, 1.5, 6.0})
    for (double c : {0.5, 1.0, 2.0}) {
      EXPECT_NEAR(garloss_rho(x, 2.0, c), symmetric_limit(x, 2.0, c), 1e-6);
      EXPECT_NEAR(garloss_rho(x, 0.0, c), symmetric_limit(x, 0.0, c), 1e-6);
      // One-sided values at 0 +- h differ from the branch by the first-order term only.
      const double slope = (rho_formula(x, 1e-4, c) - rho_formula(x, -1e-4, c)) / 2e-4;
      EXPECT_NEAR(rho_formula(x, 1e-6, c) - garloss_rho(x, 0.0, c), 1e-6 * slope, 1e-9);
      EXPECT_NEAR(garloss_rho(x, -HUGE_VAL, c), rho_formula(x, -1e8, c), 1e-6);
    }
}

TEST(GarlossRho, ContinuousAcrossBranchPoints) {
  for (double x : {0.5, 1.5, 3.0}) {
    EXPECT_NEAR(garloss_rho(x, 2.0 - 1e-6, 1.0), garloss_rho(x, 2.0, 1.0), 5e-5);
    EXPECT_NEAR(garloss_rho(x, 2.0 + 1e-6, 1.0), garloss_rho(x, 2.0, 1.0), 5e-5);
    EXPECT_NEAR(garloss_rho(x, 1e-6, 1.0), garloss_rho(x, 0.0, 1.0), 1e-6);
  }
}

TEST(GarlossRho, EvenAndMonotone) {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const double a = rng.uniform(-6, 6), c = rng.uniform(0.1, 3);
    const double x = rng.uniform(0, 10), y = x + rng.uniform(0, 3);
    EXPECT_EQ(garloss_rho(x, a, c), garloss_rho(-x, a, c));
    EXPECT_LE(garloss_rho(x, a, c), garloss_rho(y, a, c) + 1e-15);
  }
}

TEST(GarlossRho, ScaleMustBePositive) {
  EXPECT_THROW(garloss_rho(1.0, 1.0, 0.0), DomainError);
  EXPECT_THROW(garloss_rho(Tensor({1}, {1.0}), 1.0, -1.0), DomainError);
}

TEST(GarlossRho, TensorMatchesScalar) {
  const Tensor x({4}, {-2, -0.5, 0.1, 3});
  for (double a : {-HUGE_VAL, -1.0, 0.0, 1.0, 2.0, 3.5}) {
    const Tensor y = garloss_rho(x, a, 1.3);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], garloss_rho(x[i], a, 1.3), 1e-15);
  }
}

TEST(GarlossRho, Gradients) {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {6}, -3, 3);
  for (double a : {-3.0, 0.0, 0.7, 1.0, 2.0, 3.3}) {
    expect_passes([a](const Tensor& v) { return sum(garloss_rho(v, a, 1.2)); }, x, "x");
    expect_passes([&](const Tensor& c) { return sum(garloss_rho(x, Tensor::scalar(a), c)); },
                  Tensor::scalar(0.8), "c");
  }
  for (double a : {-3.0, 0.7, 1.0, 3.3})
    expect_passes([&](const Tensor& al) { return sum(garloss_rho(x, al, Tensor::scalar(1.2))); },
                  Tensor::scalar(a), "alpha");
  expect_passes([](const Tensor& v) { return sum(garloss_rho(v, -HUGE_VAL, 0.9)); }, x, "x, alpha=-inf");
}

TEST(GarlossRho, AlphaGradientAtBranchPointsIsSymmetricSecant) {
  const Tensor x({3}, {0.5, 1.5, -2.0});
  for (double at : {0.0, 2.0}) {
    Tensor a = Tensor::scalar(at, true);
    sum(garloss_rho(x, a, Tensor::scalar(1.0))).backward();
    double secant = 0.0;
    const double h = 1e-6;
    for (double v : x.values()) secant += (rho_formula(v, at + 2 * h, 1.0) - rho_formula(v, at - 2 * h, 1.0)) / (4 * h);
    // The one-sided slopes are averaged; at 0 the function is smooth.
    if (at == 0.0) {
      EXPECT_NEAR(a.grad()[0], secant, 1e-4);
    }
    EXPECT_TRUE(std::isfinite(a.grad()[0]));
  }
}

// ------------------------------------------------------------- Z spline

TEST(ZSpline, ReferenceValues) {
  const auto spline = ZSpline::standard();
  EXPECT_NEAR(spline->z(2.0) / std::sqrt(2 * M_PI) - 1.0, 0.0, 1e-3);
  EXPECT_NEAR(spline->z(0.0) / (M_PI * std::sqrt(2.0)) - 1.0, 0.0, 1e-3);
  // High-precision quadrature references.
  EXPECT_NEAR(spline->z(1.0) / 3.272306972526516 - 1.0, 0.0, 1e-3);
  EXPECT_NEAR(spline->z(0.5) / 3.6389931308930457 - 1.0, 0.0, 1e-3);
  EXPECT_NEAR(spline->z(4.0) / 2.1019609161655170 - 1.0, 0.0, 1e-3);
}

TEST(ZSpline, QuadratureMatchesIndependentOracle) {
  for (double a : {0.0, 0.5, 1.0, 2.0, 3.0})
    EXPECT_NEAR(z_quadrature(a) / z_oracle(a) - 1.0, 0.0, 1e-6) << a;
}

TEST(ZSpline, OffKnotProbes) {
  const auto spline = ZSpline::standard();
  double worst = 0.0;
  for (int k = 0; k < 80; ++k) {
    for (double frac : {0.25, 0.5, 0.77}) {
      const double a = 0.05 * (k + frac);
      const double rel = std::abs(spline->z(a) / z_oracle(a) - 1.0);
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(ZSpline, ContinuousAndFinite) {
  const auto spline = ZSpline::standard();
  double prev = spline->z(0.0);
  for (int i = 1; i <= 4000; ++i) {
    const double z = spline->z(i * 1e-3);
    ASSERT_TRUE(std::isfinite(z));
    EXPECT_LT(std::abs(z - prev), 1e-2);
    prev = z;
  }
}

TEST(ZSpline, GridValidation) {
  EXPECT_THROW(build_z_spline({0.0, 0.1, 0.2, 4.0}), DomainError);
  std::vector<double> short_grid;
  for (int k = 0; k <= 60; ++k) short_grid.push_back(0.05 * k);
  EXPECT_THROW(build_z_spline(short_grid), DomainError);
  std::vector<double> negative;
  for (int k = -2; k <= 80; ++k) negative.push_back(0.05 * k);
  EXPECT_THROW(build_z_spline(negative), DomainError);
  EXPECT_THROW(ZSpline::standard()->z(-0.1), DomainError);
}

// ----------------------------------------------------------------- NLL

TEST(GarlossNll, GaussianAtOrigin) {
  const Tensor nll = garloss_nll(Tensor({1}, {0.0}), RobustLossParams{2.0, 1.0, nullptr});
  EXPECT_NEAR(nll.item(), 0.5 * std::log(2 * M_PI), 1e-3);
}

TEST(GarlossNll, DensitiesIntegrateToOne) {
  for (double a : {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0})
    for (double c : {0.5, 1.0, 3.0}) {
      const RobustLossParams p{a, c, nullptr};
      const double end = a == 0.0 ? 4.0 * c * c / (c * p.spline()->z(0.0)) : 0.0;
      const double mass = real_line_integral([&](double x) { return garloss_density(x, p); }, end);
      EXPECT_NEAR(mass, 1.0, 1e-3) << "alpha " << a << " c " << c;
    }
}

TEST(GarlossNll, NegativeAlphaIsAnError) {
  EXPECT_THROW(garloss_nll(Tensor({1}, {0.0}), RobustLossParams{-0.5, 1.0, nullptr}), DomainError);
}

TEST(GarlossNll, ScaleArgminAtDataScale) {
  Rng rng(3);
  const Tensor x = sample(rng, Distribution::standard_normal, {10000});
  double best_c = 0.0, best = HUGE_VAL;
  for (int i = 0; i <= 300; ++i) {
    const double c = 0.5 + 0.005 * i;
    const double v = garloss_nll(x, RobustLossParams{2.0, c, nullptr}).item();
    if (v < best) {
      best = v;
      best_c = c;
    }
  }
  EXPECT_NEAR(best_c, 1.0, 0.1);
}

TEST(GarlossNll, Gradients) {
  Rng rng(4);
  const Tensor x = random_tensor(rng, {8}, -3, 3);
  for (double a : {0.3, 1.0, 2.7, 3.6}) {
    expect_passes([&](const Tensor& v) { return garloss_nll(v, Tensor::scalar(a), Tensor::scalar(1.1)); }, x, "x");
    expect_passes([&](const Tensor& al) { return garloss_nll(x, al, Tensor::scalar(1.1)); }, Tensor::scalar(a),
                  "alpha");
    expect_passes([&](const Tensor& c) { return garloss_nll(x, Tensor::scalar(a), c); }, Tensor::scalar(0.7), "c");
  }
}

TEST(AdaptiveRobustLoss, ReparameterizationAndGradients) {
  AdaptiveRobustLoss loss(1.0, 0.5);
  EXPECT_NEAR(loss.alpha().item(), 1.0, 1e-12);
  EXPECT_NEAR(loss.c().item(), 0.5, 1e-12);
  Rng rng(5);
  const Tensor x = random_tensor(rng, {16}, -2, 2);
  expect_passes(
      [&](const Tensor& raw) {
        AdaptiveRobustLoss l = loss;
        l.raw_alpha = raw;
        return l(x);
      },
      loss.raw_alpha.detach(), "raw alpha");
  // Extreme raw values stay inside the spline domain.
  AdaptiveRobustLoss extreme = loss;
  extreme.raw_alpha = Tensor::scalar(-40.0);
  EXPECT_GE(extreme.alpha().item(), 0.001);
  extreme.raw_alpha = Tensor::scalar(40.0);
  EXPECT_LE(extreme.alpha().item(), 3.999);
  EXPECT_NO_THROW(extreme(x));
  EXPECT_THROW(AdaptiveRobustLoss(5.0, 1.0), DomainError);
}

// ------------------------------------------------------------------ GAN

TEST(GanDiscrete, EqualDistributionsGiveMinusLogFour) {
  const DiscreteDistribution p({0, 1, 2}, {0.2, 0.5, 0.3});
  EXPECT_NEAR(gan_value_discrete(p, p, {0.5, 0.5, 0.5}), -std::log(4.0), 1e-12);
  EXPECT_NEAR(gan_value_discrete(p, p, optimal_discriminator(p, p)), -std::log(4.0), 1e-9);
}

TEST(GanDiscrete, OptimalDiscriminatorMaximizesGrid) {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = 2 + rng.below(4);
    auto draw = [&] {
      std::vector<double> p(k);
      double s = 0.0;
      for (double& e : p) s += (e = rng.uniform(0.01, 1.0));
      for (double& e : p) e /= s;
      double t = 0.0;
      for (std::size_t i = 0; i + 1 < k; ++i) t += p[i];
      p[k - 1] = 1.0 - t;
      return p;
    };
    std::vector<double> support(k);
    for (std::size_t i = 0; i < k; ++i) support[i] = double(i);
    const DiscreteDistribution pd(support, draw()), pg(support, draw());
    const auto dstar = optimal_discriminator(pd, pg);
    const double vstar = gan_value_discrete(pd, pg, dstar);
    // V separates per atom, so the dense grid search is done atom by atom.
    for (std::size_t i = 0; i < k; ++i) {
      double best = -HUGE_VAL, best_d = 0.0;
      for (int g = 1; g < 1000; ++g) {
        const double d = g / 1000.0;
        const double v = pd.probs[i] * std::log(d) + pg.probs[i] * std::log1p(-d);
        if (v > best) {
          best = v;
          best_d = d;
        }
      }
      EXPECT_NEAR(best_d, dstar[i], 1e-3);
      std::vector<double> d = dstar;
      d[i] = best_d;
      EXPECT_LE(gan_value_discrete(pd, pg, d), vstar + 1e-12);
    }
  }
}

TEST(GanDiscrete, DisjointSupportsWithOptimalDiscriminator) {
  const DiscreteDistribution pd({0, 1, 2, 3}, {0.5, 0.5, 0, 0}), pg({0, 1, 2, 3}, {0, 0, 0.25, 0.75});
  EXPECT_EQ(gan_value_discrete(pd, pg, optimal_discriminator(pd, pg)), 0.0);
  EXPECT_THROW(gan_value_discrete(pd, pg, {0.0, 0.5, 0.5, 0.5}), DomainError);
  EXPECT_THROW(gan_value_discrete(pd, pg, {0.5, 0.5, 1.0, 0.5}), DomainError);
  EXPECT_THROW(DiscreteDistribution({0, 1}, {0.5, 0.6}), DomainError);
}

TEST(GanLosses, Examples) {
  const auto ns = gan_losses(Tensor({1}, {0.7}), Tensor({1}, {0.5}), GanVariant::non_saturating);
  EXPECT_NEAR(ns.g.item(), std::log(2.0), 1e-15);
  const auto w = gan_losses(Tensor({2}, {0.5, 1.5}), Tensor({2}, {-2.0, 0.0}), GanVariant::wasserstein);
  EXPECT_DOUBLE_EQ(w.d.item(), -2.0);
  EXPECT_DOUBLE_EQ(w.g.item(), 1.0);
  const auto mm = gan_losses(Tensor({1}, {0.5}), Tensor({1}, {0.5}), GanVariant::minimax);
  EXPECT_NEAR(mm.d.item(), std::log(4.0), 1e-15);
  EXPECT_NEAR(mm.g.item(), -std::log(2.0), 1e-15);
}

TEST(GanLosses, UnetDual) {
  const DualScores real{Tensor({2}, {0.9, 0.8}), Tensor::full({2, 3, 3}, 0.7)};
  const DualScores fake{Tensor({2}, {0.5, 0.5}), Tensor::full({2, 3, 3}, 0.5)};
  EXPECT_NEAR(unet_dual_losses(real, fake).g.item(), 2.0 * std::log(2.0), 1e-14);
  EXPECT_THROW(unet_dual_losses(real, {Tensor({3}, {0.5, 0.5, 0.5}), fake.pixel}), ShapeError);
}

TEST(GanLosses, LogDomainErrors) {
  EXPECT_THROW(gan_losses(Tensor({1}, {1.0}), Tensor({1}, {0.5}), GanVariant::minimax), DomainError);
  EXPECT_THROW(gan_losses(Tensor({1}, {0.5}), Tensor({1}, {0.0}), GanVariant::non_saturating), DomainError);
  EXPECT_NO_THROW(gan_losses(Tensor({1}, {5.0}), Tensor({1}, {-3.0}), GanVariant::wasserstein));
}

TEST(GanLosses, LogitsAgreeWithProbabilities) {
  Rng rng(7);
  const Tensor lr = random_tensor(rng, {5}, -3, 3), lf = random_tensor(rng, {5}, -3, 3);
  for (auto v : {GanVariant::minimax, GanVariant::non_saturating}) {
    const auto a = gan_losses_from_logits(lr, lf, v);
    const auto b = gan_losses(sigmoid(lr), sigmoid(lf), v);
    EXPECT_NEAR(a.d.item(), b.d.item(), 1e-12);
    EXPECT_NEAR(a.g.item(), b.g.item(), 1e-12);
  }
}

TEST(GanLosses, Gradients) {
  Rng rng(8);
  const Tensor real = random_tensor(rng, {4}, 0.1, 0.9), fake = random_tensor(rng, {4}, 0.1, 0.9);
  for (auto v : {GanVariant::minimax, GanVariant::non_saturating, GanVariant::wasserstein}) {
    expect_passes([&](const Tensor& f) { return gan_losses(real, f, v).g; }, fake, "g");
    expect_passes([&](const Tensor& r) { return gan_losses(r, fake, v).d; }, real, "d real");
    expect_passes([&](const Tensor& f) { return gan_losses(real, f, v).d; }, fake, "d fake");
    expect_passes([&](const Tensor& f) { return gan_losses_from_logits(real, f, v).g; }, fake, "logit g");
  }
}

// ---------------------------------------------------------- regularizers

TEST(Regularizers, R1OfLinearDiscriminator) {
  const Tensor w({3}, {0.5, -1.0, 2.0});
  const Tensor x({4, 3}, {1, 2, 3, -1, 0, 1, 2, 2, 2, 0, 0, 0});
  const Tensor g = input_gradients([&](const Tensor& v) { return matmul(v, reshape(w, {3, 1})); }, x);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(g[n * 3 + k], w[k]);
  EXPECT_NEAR(r1_penalty(g, 2.0).item(), 0.25 + 1.0 + 4.0, 1e-14);
}

TEST(Regularizers, PathLengthOfScaledIdentity) {
  const Tensor A({2, 2}, {2, 0, 0, 2});
  const Tensor jty = jacobian_transpose_product(
      [&](const Tensor& w) { return reshape(matmul(A, reshape(w, {2, 1})), {2}); }, Tensor({2}, {0.3, -0.7}),
      Tensor({2}, {1.0, 0.0}));
  EXPECT_DOUBLE_EQ(jty[0], 2.0);
  EXPECT_DOUBLE_EQ(jty[1], 0.0);
  EXPECT_DOUBLE_EQ(path_length_penalty(reshape(jty, {1, 2}), 2.0).item(), 0.0);
}

TEST(Regularizers, PathLengthEma) {
  PathLengthRegularizer reg(0.99);
  const Tensor jty({1, 2}, {2.0, 0.0});
  reg(jty);
  EXPECT_NEAR(reg.target(), 0.02, 1e-15);
  for (int i = 0; i < 2000; ++i) reg(jty);
  EXPECT_NEAR(reg.target(), 2.0, 1e-6);
  EXPECT_NEAR(reg(jty).item(), 0.0, 1e-10);
}

TEST(Regularizers, Drift) {
  EXPECT_NEAR(drift_penalty(Tensor::full({5}, 3.0)).item(), 0.009, 1e-15);
}

TEST(Regularizers, ZeroExactlyAtTheirTargets) {
  Rng rng(9);
  EXPECT_EQ(r1_penalty(Tensor::zeros({3, 4}), 5.0).item(), 0.0);
  EXPECT_GT(r1_penalty(Tensor({1, 2}, {1e-3, 0.0}), 5.0).item(), 0.0);
  EXPECT_EQ(gradient_penalty(Tensor({2, 2}, {1, 0, 0, -1})).item(), 0.0);
  EXPECT_GT(gradient_penalty(Tensor({1, 2}, {0.6, 0.6})).item(), 0.0);
  EXPECT_THROW(gradient_penalty(Tensor({1, 2}, {NAN, 0.0})), NumericError);
}

TEST(Regularizers, Gradients) {
  Rng rng(10);
  const Tensor g = random_tensor(rng, {3, 4});
  expect_passes([](const Tensor& v) { return gradient_penalty(v, 10.0); }, g, "gp");
  expect_passes([](const Tensor& v) { return r1_penalty(v, 3.0); }, g, "r1");
  expect_passes([](const Tensor& v) { return path_length_penalty(v, 0.4); }, g, "path");
  expect_passes([](const Tensor& v) { return drift_penalty(v); }, g, "drift");
}

// ------------------------------------------------------------ CutMix etc.

TEST(CutMix, DegenerateAndIdentical) {
  Rng rng(11);
  const Tensor a = random_tensor(rng, {4, 4}), b = random_tensor(rng, {4, 4});
  EXPECT_EQ(cutmix_consistency(a, b, a, rectangle_mask(4, 4, 0, 0, 4, 4)).item(), 0.0);
  for (int rep = 0; rep < 10; ++rep) EXPECT_EQ(cutmix_consistency(a, a, a, random_mix_mask(4, 4, rng)).item(), 0.0);
}

TEST(CutMix, HalfMaskHandComputed) {
  const MixMask m = rectangle_mask(4, 4, 0, 0, 4, 2);
  const Tensor v = cutmix_consistency(Tensor::ones({4, 4}), Tensor::zeros({4, 4}), Tensor::full({4, 4}, 0.5), m);
  EXPECT_DOUBLE_EQ(v.item(), 0.5);
  EXPECT_THROW(cutmix_consistency(Tensor::ones({4, 4}), Tensor::zeros({4, 4}), Tensor::ones({2, 2}), m), ShapeError);
}

TEST(CutMix, MaskIsOneRectangleWithBoundedArea) {
  Rng rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t h = 2 + rng.below(20), w = 2 + rng.below(20);
    const MixMask m = random_mix_mask(h, w, rng);
    double area = 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const bool inside = y >= m.y0 && y < m.y1 && x >= m.x0 && x < m.x1;
        ASSERT_EQ(m.mask[y * w + x], inside ? 1.0 : 0.0);
        area += m.mask[y * w + x];
      }
    EXPECT_GE(area, 0.25 * double(h * w));
    EXPECT_LE(area, 0.75 * double(h * w));
  }
  EXPECT_THROW(random_mix_mask(1, 1, rng), ShapeError);
}

TEST(CutMix, Gradients) {
  Rng rng(13);
  const MixMask m = rectangle_mask(3, 4, 1, 1, 3, 3);
  const Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4}), c = random_tensor(rng, {3, 4});
  expect_passes([&](const Tensor& v) { return cutmix_consistency(v, b, c, m); }, a, "real");
  expect_passes([&](const Tensor& v) { return cutmix_consistency(a, b, v, m); }, c, "mixed");
}

TEST(EncoderLosses, Examples) {
  Rng rng(14);
  const Tensor img = random_tensor(rng, {2, 2});
  EXPECT_EQ(encoder_losses(img, img, Tensor::zeros({2}), Tensor::zeros({2})).recon.item(), 0.0);
  const auto l = encoder_losses(add_scalar(img, 1.0), img, Tensor({2}, {1, 2}), Tensor({2}, {1, 4}));
  EXPECT_NEAR(l.recon.item(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(l.latent_reg.item(), 1.0);
  EXPECT_THROW(encoder_losses(img, Tensor::zeros({3, 2}), Tensor::zeros({2}), Tensor::zeros({2})), ShapeError);
}

// ------------------------------------------------------------ weight map

TEST(WeightMap, Examples) {
  const Tensor prev = Tensor::zeros({5, 5});
  EXPECT_EQ(build_weight_map(prev, prev, 2).values.values()[0], 1.0);
  std::vector<double> t(25, 0.0);
  t[2 * 5 + 2] = 1.0;
  const auto map = build_weight_map(prev, Tensor({5, 5}, t), 1);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      const bool near = y >= 1 && y <= 3 && x >= 1 && x <= 3;
      EXPECT_EQ(map.values[y * 5 + x], near ? 1.5 : 1.0);
    }
  // Shrinkage only.
  const auto shrink = build_weight_map(Tensor({5, 5}, t), prev, 1);
  for (double v : shrink.values.values()) EXPECT_EQ(v, 1.0);
  t[0] = 0.5;
  EXPECT_THROW(build_weight_map(prev, Tensor({5, 5}, t), 1), DomainError);
}

TEST(WeightMap, EntriesAreBinaryLevels) {
  Rng rng(15);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(64), b(64);
    for (std::size_t i = 0; i < 64; ++i) {
      a[i] = rng.uniform01() < 0.3;
      b[i] = rng.uniform01() < 0.3;
    }
    const auto m = build_weight_map(Tensor({8, 8}, a), Tensor({8, 8}, b), rng.below(3));
    for (double v : m.values.values()) EXPECT_TRUE(v == 1.0 || v == 1.5);
  }
}

// --------------------------------------------------------------- stages

TEST(StageLosses, KernelInit) {
  const auto one_hot = warp::identity_kernels(4, 3, 5);
  StageInputs in;
  in.kernels = one_hot;
  EXPECT_EQ(sdc_stage_loss(SdcStage::kernel_init, in, {}, {}).item(), 0.0);
  for (std::size_t n : {1u, 3u, 7u}) {
    const warp::SeparableKernelField zeros{Tensor::zeros({4, 3, n}), Tensor::zeros({4, 3, n})};
    in.kernels = zeros;
    EXPECT_DOUBLE_EQ(sdc_stage_loss(SdcStage::kernel_init, in, {}, {}).item(), 2.0);
  }
  EXPECT_THROW(sdc_stage_loss(SdcStage::kernel_init, {}, {}, {}), ConfigError);
}

TEST(StageLosses, MultiPerfectPrediction) {
  Rng rng(16);
  const Tensor f1 = random_tensor(rng, {4, 4}), f2 = random_tensor(rng, {4, 4});
  StageInputs in;
  in.predicted = {f1, f2};
  in.target = {f1, f2};
  in.adv_scores = Tensor({3}, {0.5, 0.5, 0.5});
  EXPECT_NEAR(sdc_stage_loss(SdcStage::multi, in, {}, {}).item(), 0.01 * std::log(2.0), 1e-15);
  in.adv_scores.reset();
  EXPECT_THROW(sdc_stage_loss(SdcStage::multi, in, {}, {}), ConfigError);
  in.adv_logits = Tensor({1}, {0.0});
  EXPECT_NEAR(sdc_stage_loss(SdcStage::multi, in, {}, {}).item(), 0.01 * std::log(2.0), 1e-15);
}

TEST(StageLosses, FlowUsesWeightedRobustLoss) {
  const Tensor target = Tensor::zeros({2, 2});
  const Tensor pred({2, 2}, {1, 0, 0, 0});
  const RobustLossParams l2{2.0, 1.0, nullptr};
  StageInputs in;
  in.predicted = {pred};
  in.target = {target};
  EXPECT_DOUBLE_EQ(sdc_stage_loss(SdcStage::flow, in, {}, l2).item(), 0.5 / 4.0);
  in.weights = WeightMap{Tensor({2, 2}, {1.5, 1, 1, 1}), 0};
  EXPECT_DOUBLE_EQ(sdc_stage_loss(SdcStage::fine_tune, in, {}, l2).item(), 0.5 * 2.25 / 4.0);
  EXPECT_THROW(sdc_stage_loss(SdcStage::flow, StageInputs{}, {}, l2), ConfigError);
}

TEST(StageLosses, Gradients) {
  Rng rng(17);
  const Tensor target = random_tensor(rng, {3, 3});
  const RobustLossParams robust{1.0, 0.5, nullptr};
  expect_passes(
      [&](const Tensor& p) {
        StageInputs in;
        in.predicted = {p};
        in.target = {target};
        in.adv_logits = Tensor({1}, {0.3});
        return sdc_stage_loss(SdcStage::multi, in, {}, robust);
      },
      random_tensor(rng, {3, 3}), "multi");
  const Tensor kv = random_tensor(rng, {2, 2, 3});
  expect_passes(
      [&](const Tensor& kh) {
        StageInputs k;
        k.kernels = warp::SeparableKernelField{kh, kv};
        return sdc_stage_loss(SdcStage::kernel_init, k, {}, robust);
      },
      random_tensor(rng, {2, 2, 3}), "kernel_init");
}
