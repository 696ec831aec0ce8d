#include <gtest/gtest.h>

#include <cmath>

#include "microsim/numeric/ops.hpp"
#include "microsim/numeric/rng.hpp"
#include "microsim/optim/optim.hpp"

using namespace microsim;
using namespace microsim::optim;

namespace {

// Scripted Adam / AdamP update, one line per statement, with running powers of beta.
struct ScriptedAdam {
  double lr, b1, b2, delta, lambda;
  bool adamp = false, literal = false;
  std::vector<double> S{}, R{};
  int t = 0;
  double b1t = 1.0, b2t = 1.0;

  void step(std::vector<double>& theta, const std::vector<double>& G) {
    const std::size_t n = theta.size();
    if (S.empty()) S.assign(n, 0.0), R.assign(n, 0.0);
    t = t + 1;
    b1t *= b1;
    b2t *= b2;
    std::vector<double> dtheta(n);
    for (std::size_t i = 0; i < n; ++i) {
      S[i] = b1 * S[i] + (1 - b1) * G[i];
      R[i] = b2 * R[i] + (1 - b2) * G[i] * G[i];
      const double s_hat = S[i] / (1 - b1t);
      const double r_hat = R[i] / (literal ? 1 + b2t : 1 - b2t);
      dtheta[i] = -s_hat / std::sqrt(r_hat + delta);
    }
    if (adamp) {
      double tt = 0, gg = 0, tg = 0;
      for (std::size_t i = 0; i < n; ++i) tt += theta[i] * theta[i], gg += G[i] * G[i], tg += theta[i] * G[i];
      const double cos = (tt > 0 && gg > 0) ? tg / std::sqrt(tt * gg) : 0.0;
      if (-cos < lambda && tt > 0) {
        double td = 0;
        for (std::size_t i = 0; i < n; ++i) td += theta[i] / std::sqrt(tt) * dtheta[i];
        for (std::size_t i = 0; i < n; ++i) dtheta[i] -= td * theta[i] / std::sqrt(tt);
      }
    }
    for (std::size_t i = 0; i < n; ++i) theta[i] = theta[i] + lr * dtheta[i];
  }
};

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST(Sgd, Examples) {
  std::vector<double> p{1.0};
  sgd_step(p, std::vector<double>{2.0}, 0.1);
  EXPECT_DOUBLE_EQ(p[0], 0.8);
  std::vector<double> q{1.0, -2.0, 3.0};
  sgd_step(q, std::vector<double>{0.0, 0.0, 0.0}, 0.5);
  EXPECT_EQ(q, (std::vector<double>{1.0, -2.0, 3.0}));
  sgd_step(q, std::vector<double>{1.0, -1.0, 2.0}, 0.5);
  EXPECT_EQ(q, (std::vector<double>{0.5, -1.5, 2.0}));
}

TEST(Sgd, Errors) {
  std::vector<double> p{1.0};
  EXPECT_THROW(sgd_step(p, std::vector<double>{NAN}, 0.1), NumericError);
  EXPECT_THROW(sgd_step(p, std::vector<double>{1.0, 2.0}, 0.1), ShapeError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  OptimizerState st;
  std::vector<double> p{1.0};
  adam_step(p, std::vector<double>{2.0}, st);
  EXPECT_EQ(st.t, 1u);
  EXPECT_NEAR(p[0], 1.0 - 0.001 * 2.0 / std::sqrt(4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0], 1.0 - 0.001, 1e-9);
}

TEST(Adam, ZeroGradientAtZeroState) {
  OptimizerState st;
  std::vector<double> p{0.3, -0.7};
  adam_step(p, std::vector<double>{0.0, 0.0}, st);
  EXPECT_EQ(p, (std::vector<double>{0.3, -0.7}));
}

TEST(Adam, TwoStepsMatchScriptedOracle) {
  OptimizerState st;
  ScriptedAdam oracle{.lr = 0.001, .b1 = 0.9, .b2 = 0.999, .delta = 1e-8, .lambda = 0.1};
  std::vector<double> p{0.5}, q{0.5};
  for (int i = 0; i < 2; ++i) {
    adam_step(p, std::vector<double>{1.5}, st);
    oracle.step(q, {1.5});
  }
  EXPECT_EQ(p[0], q[0]);
}

TEST(Adam, SignSgdLimit) {
  Rng rng(1);
  OptimizerState st;
  st.beta1 = 0.0;
  st.beta2 = 0.0;
  st.delta = 1e-300;
  st.lr = 0.01;
  std::vector<double> p = random_vector(rng, 20);
  for (int k = 0; k < 50; ++k) {
    const auto before = p;
    auto g = random_vector(rng, 20, -5, 5);
    adam_step(p, g, st);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(std::abs(p[i] - before[i]), 0.01, 1e-6);
  }
}

TEST(Adam, ThousandStepsMatchOracle) {
  Rng rng(2);
  OptimizerState st;
  st.lr = 0.01;
  ScriptedAdam oracle{.lr = 0.01, .b1 = 0.9, .b2 = 0.999, .delta = 1e-8, .lambda = 0.1};
  std::vector<double> p = random_vector(rng, 7), q = p;
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto g = random_vector(rng, 7, -3, 3);
    adam_step(p, g, st);
    oracle.step(q, g);
    EXPECT_EQ(st.t, std::uint64_t(oracle.t));
    for (std::size_t i = 0; i < 7; ++i) {
      worst = std::max(worst, std::abs(p[i] - q[i]));
      worst = std::max(worst, std::abs(st.s[i] - oracle.S[i]));
      worst = std::max(worst, std::abs(st.r[i] - oracle.R[i]));
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(AdamP, ThousandStepsMatchOracle) {
  for (bool literal : {false, true}) {
    Rng rng(3);
    OptimizerState st;
    st.lr = 0.01;
    st.literal_second_moment_correction = literal;
    ScriptedAdam oracle{.lr = 0.01, .b1 = 0.9, .b2 = 0.999, .delta = 1e-8, .lambda = 0.1, .adamp = true,
                        .literal = literal};
    std::vector<double> p = random_vector(rng, 9), q = p;
    double worst = 0.0;
    int projected = 0;
    for (int k = 0; k < 1000; ++k) {
      const auto g = random_vector(rng, 9, -3, 3);
      projected += adamp_step(p, g, st);
      oracle.step(q, g);
      for (std::size_t i = 0; i < 9; ++i) worst = std::max(worst, std::abs(p[i] - q[i]));
    }
    EXPECT_LE(worst, 1e-12) << "literal=" << literal;
    EXPECT_GT(projected, 0);
    EXPECT_LT(projected, 1000);
  }
}

TEST(AdamP, LiteralCorrectionDiffers) {
  OptimizerState a, b;
  b.literal_second_moment_correction = true;
  std::vector<double> p{1.0, 0.0}, q{1.0, 0.0};
  adamp_step(p, std::vector<double>{0.0, 1.0}, a);
  adamp_step(q, std::vector<double>{0.0, 1.0}, b);
  // At t = 1, R_hat is G^2 with 1 - beta2 and G^2 * 0.001 / 1.999 with 1 + beta2.
  const double r_literal = 0.001 / 1.999;
  EXPECT_NEAR(p[1], -0.001 / std::sqrt(1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(q[1], -0.001 / std::sqrt(r_literal + 1e-8), 1e-15);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(q[0], 1.0);
}

TEST(AdamP, NeverTrueConditionEqualsAdam) {
  Rng rng(4);
  OptimizerState sa, sp;
  sp.lambda_thresh = -1.5;  // -cos >= -1 always
  std::vector<double> p = random_vector(rng, 5), q = p;
  for (int k = 0; k < 100; ++k) {
    const auto g = random_vector(rng, 5);
    adam_step(p, g, sa);
    EXPECT_FALSE(adamp_step(q, g, sp));
  }
  EXPECT_EQ(p, q);
}

TEST(AdamP, Projection) {
  const std::vector<double> theta{0.6, 0.8};
  const auto par = tangent_projection(theta, std::vector<double>{1.2, 1.6});
  EXPECT_NEAR(par[0], 0.0, 1e-15);
  EXPECT_NEAR(par[1], 0.0, 1e-15);
  const auto perp = tangent_projection(theta, std::vector<double>{-0.8, 0.6});
  EXPECT_NEAR(perp[0], -0.8, 1e-15);
  EXPECT_NEAR(perp[1], 0.6, 1e-15);
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const auto t = random_vector(rng, 6, -10, 10), d = random_vector(rng, 6, -10, 10);
    const auto pr = tangent_projection(t, d);
    double n = 0, dotv = 0;
    for (double v : t) n += v * v;
    for (std::size_t i = 0; i < 6; ++i) dotv += t[i] / std::sqrt(n) * pr[i];
    EXPECT_NEAR(dotv, 0.0, 1e-12);
  }
}

TEST(AdamP, ZeroNormParameterSkipsProjection) {
  OptimizerState st;
  std::vector<double> p{0.0, 0.0};
  EXPECT_NO_THROW(adamp_step(p, std::vector<double>{1.0, -1.0}, st));
  EXPECT_NEAR(p[0], -0.001, 1e-9);
  EXPECT_NEAR(p[1], 0.001, 1e-9);
}

TEST(AdamP, DecoupledWeightDecay) {
  OptimizerState st;
  st.weight_decay = 0.1;
  st.lr = 0.5;
  std::vector<double> p{2.0};
  adamp_step(p, std::vector<double>{0.0}, st);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * (1.0 - 0.05));
}

TEST(WeightClip, Examples) {
  std::vector<double> p{0.005, 0.5, -5.0};
  weight_clip(p, 0.01);
  EXPECT_EQ(p, (std::vector<double>{0.005, 0.01, -0.01}));
  EXPECT_THROW(weight_clip(p, 0.0), DomainError);
}

TEST(Optimizer, DrivesTensorLeaves) {
  Tensor w = Tensor({2}, {1.0, -1.0}, true);
  Optimizer opt({w}, {.kind = OptimizerKind::sgd, .lr = 0.1});
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    sum(square(w)).backward();
    opt.step();
  }
  EXPECT_NEAR(w[0], 0.0, 1e-8);
  Optimizer adam({w}, {.kind = OptimizerKind::adamp, .lr = 0.1});
  adam.zero_grad();
  sum(w).backward();
  adam.step();
  EXPECT_EQ(adam.states()[0].t, 1u);
  adam.clip(1e-3);
  EXPECT_LE(std::abs(w[0]), 1e-3);
}
