#pragma once

// Gradient-based regularizers. Each takes precomputed gradient arrays with
// the batch on axis 0 and is differentiable with respect to those arrays;
// helpers below produce the arrays from a callable.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::losses {

/// Euclidean norm of every sample (row) of [b, ...]; the gradient at a zero
/// row is taken as zero.
inline Tensor row_norms(const Tensor& g) {
  if (g.rank() < 1 || g.size() == 0) throw ShapeError("row_norms: empty input");
  const std::size_t b = g.dim(0), d = g.size() / b;
  const auto G = g.values();
  std::vector<double> out(b, 0.0);
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t k = 0; k < d; ++k) out[n] += G[n * d + k] * G[n * d + k];
    out[n] = std::sqrt(out[n]);
  }
  return detail::make_result("row_norms", Shape{b}, std::move(out), {g}, [b, d](detail::Node& self) {
    double* gg = detail::parent_grad(self, 0);
    if (!gg) return;
    const auto& G = self.parents[0]->values;
    for (std::size_t n = 0; n < b; ++n) {
      if (self.values[n] == 0.0) continue;
      const double f = self.grad[n] / self.values[n];
      for (std::size_t k = 0; k < d; ++k) gg[n * d + k] += f * G[n * d + k];
    }
  });
}

/// lambda * E[(||g|| - 1)^2]
inline Tensor gradient_penalty(const Tensor& grads, double lambda = 10.0) {
  return mul_scalar(mean(square(add_scalar(row_norms(grads), -1.0))), lambda);
}

/// (gamma / 2) * E[||g||^2]
inline Tensor r1_penalty(const Tensor& grads, double gamma) {
  const std::size_t b = grads.dim(0);
  return mul_scalar(sum(square(grads)), 0.5 * gamma / double(b));
}

/// E[(||J^T y|| - a)^2]
inline Tensor path_length_penalty(const Tensor& jty, double a) {
  return mean(square(add_scalar(row_norms(jty), -a)));
}

/// epsilon * E[D(x)^2]
inline Tensor drift_penalty(const Tensor& scores, double epsilon = 0.001) {
  return mul_scalar(mean(square(scores)), epsilon);
}

/// Path-length penalty whose target a is an exponential moving average of the
/// observed ||J^T y||, updated before each evaluation.
class PathLengthRegularizer {
 public:
  explicit PathLengthRegularizer(double decay = 0.99) : decay_(decay) {
    if (!(decay >= 0.0 && decay < 1.0)) throw DomainError("PathLengthRegularizer: decay must be in [0, 1)");
  }

  Tensor operator()(const Tensor& jty) {
    const Tensor norms = row_norms(jty.detach());
    double m = 0.0;
    for (double v : norms.values()) m += v;
    m /= double(norms.size());
    a_ = decay_ * a_ + (1.0 - decay_) * m;
    ++updates_;
    return path_length_penalty(jty, a_);
  }

  double target() const { return a_; }
  std::size_t updates() const { return updates_; }

 private:
  double decay_;
  double a_ = 0.0;
  std::size_t updates_ = 0;
};

/// Gradient of sum_n f(x)_n with respect to x. For a per-sample function
/// this is the stack of per-sample input gradients. The result is a constant.
inline Tensor input_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  Tensor probe(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  sum(f(probe)).backward();
  return Tensor(x.shape(), probe.grad());
}

/// J_w^T y computed as the gradient of G(w) . y with respect to w.
inline Tensor jacobian_transpose_product(const std::function<Tensor(const Tensor&)>& generator,
                                         const Tensor& w, const Tensor& y) {
  Tensor probe(w.shape(), std::vector<double>(w.values().begin(), w.values().end()), true);
  const Tensor out = generator(probe);
  if (out.shape() != y.shape()) {
    throw ShapeError("jacobian_transpose_product: G(w) " + shape_string(out.shape()) + " vs y " +
                     shape_string(y.shape()));
  }
  sum(mul(out, y)).backward();
  return Tensor(w.shape(), probe.grad());
}

}  // namespace microsim::losses
