#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::nn {

/// Padé activation unit coefficients: numerator a_0..a_m, denominator b_1..b_n.
struct PauParams {
  Tensor a;  // [m + 1]
  Tensor b;  // [n]

  std::size_t numerator_order() const { return a.size() - 1; }
  std::size_t denominator_order() const { return b.size(); }
};

/// Safe rational activation, elementwise:
///
///   PAU(x) = (a_0 + a_1 x + ... + a_m x^m) / (1 + |b_1 x + ... + b_n x^n|)
///
/// The denominator is at least 1 everywhere, so there are no poles.
inline Tensor pau(const Tensor& x, const PauParams& params) {
  const std::size_t m1 = params.a.size(), n = params.b.size();
  if (m1 == 0) throw ShapeError("pau: numerator needs at least a_0");
  const auto X = x.values();
  const auto A = params.a.values();
  const auto B = params.b.values();
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    double p = 0.0, q = 0.0, xp = 1.0;
    for (std::size_t j = 0; j < m1; ++j, xp *= X[i]) p += A[j] * xp;
    xp = X[i];
    for (std::size_t k = 0; k < n; ++k, xp *= X[i]) q += B[k] * xp;
    out[i] = p / (1.0 + std::abs(q));
  }
  return detail::make_result(
      "pau", x.shape(), std::move(out), {x, params.a, params.b},
      [m1, n](detail::Node& self) {
        const auto& X = self.parents[0]->values;
        const auto& A = self.parents[1]->values;
        const auto& B = self.parents[2]->values;
        double* gx = detail::parent_grad(self, 0);
        double* ga = detail::parent_grad(self, 1);
        double* gb = detail::parent_grad(self, 2);
        for (std::size_t i = 0; i < X.size(); ++i) {
          const double x = X[i], g = self.grad[i];
          double p = 0.0, dp = 0.0, q = 0.0, dq = 0.0, xp = 1.0;
          for (std::size_t j = 0; j < m1; ++j) {
            p += A[j] * xp;
            if (j + 1 < m1) dp += double(j + 1) * A[j + 1] * xp;
            xp *= x;
          }
          xp = 1.0;
          for (std::size_t k = 0; k < n; ++k) {
            dq += double(k + 1) * B[k] * xp;
            xp *= x;
            q += B[k] * xp;
          }
          const double sgn = q > 0.0 ? 1.0 : (q < 0.0 ? -1.0 : 0.0);
          const double den = 1.0 + std::abs(q);
          if (gx) gx[i] += g * (dp / den - p * sgn * dq / (den * den));
          if (ga) {
            double pw = 1.0;
            for (std::size_t j = 0; j < m1; ++j, pw *= x) ga[j] += g * pw / den;
          }
          if (gb) {
            double pw = x;
            for (std::size_t k = 0; k < n; ++k, pw *= x) gb[k] -= g * p * sgn * pw / (den * den);
          }
        }
      });
}

/// Denominator 1 + |sum_k b_k x^k| at a point, exposed for pole-freedom checks.
inline double pau_denominator(const PauParams& params, double x) {
  double q = 0.0, xp = x;
  for (double bk : params.b.values()) {
    q += bk * xp;
    xp *= x;
  }
  return 1.0 + std::abs(q);
}

}  // namespace microsim::nn
