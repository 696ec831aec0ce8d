#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "microsim/numeric/tensor.hpp"

namespace microsim {

struct CheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  /// |analytic - numeric| / max(1, |analytic|, |numeric|)
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<std::size_t> failures;
  bool passed() const { return failures.empty(); }
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Compares the reverse-mode gradient of scalar `f` at `x` against central
/// differences with the given step.
inline CheckReport gradient_check(const ScalarFn& f, const Tensor& x, double step = 1e-5,
                                  double tolerance = 1e-4) {
  if (!(step > 0.0)) throw DomainError("gradient_check: step must be positive");
  Tensor leaf(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  const Tensor y = f(leaf);
  if (y.size() != 1) throw ShapeError("gradient_check: f must return a scalar");
  if (!std::isfinite(y.item())) throw NumericError("gradient_check: f is non-finite at x");
  y.backward();

  CheckReport report;
  report.analytic = leaf.grad();
  const std::size_t n = x.size();
  report.numeric.resize(n);
  report.rel_error.resize(n);
  std::vector<double> probe(x.values().begin(), x.values().end());
  auto eval = [&](std::size_t i, double sign) {
    probe[i] = x[i] + sign * step;
    const double v = f(Tensor(x.shape(), probe)).item();
    probe[i] = x[i];
    if (!std::isfinite(v)) {
      throw NumericError("gradient_check: f is non-finite at probe index " + std::to_string(i) +
                         (sign > 0 ? " (+step)" : " (-step)"));
    }
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double num = (eval(i, 1.0) - eval(i, -1.0)) / (2.0 * step);
    const double ana = report.analytic[i];
    const double err =
        std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
    report.numeric[i] = num;
    report.rel_error[i] = err;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
    if (err > tolerance) report.failures.push_back(i);
  }
  return report;
}

}  // namespace microsim
