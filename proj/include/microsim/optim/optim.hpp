#pragma once

// Parameter updates on flat spans, plus a small driver over Tensor leaves.
//
// Adam keeps delta inside the square root: dtheta = -S_hat / sqrt(R_hat + delta).
// AdamP uses the same moments and, when -cos(theta, G) < lambda, projects the
// step onto the tangent space of the unit-normalized parameter.
// Weight decay is decoupled: theta <- theta - lr * wd * theta after the step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "microsim/numeric/tensor.hpp"

namespace microsim::optim {

struct OptimizerState {
  std::vector<double> s;  // first moment
  std::vector<double> r;  // second raw moment
  std::uint64_t t = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  double lambda_thresh = 0.1;  // AdamP only
  double weight_decay = 0.0;
  // AdamP: literal variant uses R / (1 + beta2^t) instead of R / (1 - beta2^t).
  bool literal_second_moment_correction = false;
};

namespace optim_detail {

inline void check(std::span<const double> param, std::span<const double> grad, const char* op) {
  if (param.size() != grad.size()) {
    throw ShapeError(std::string(op) + ": parameter has " + std::to_string(param.size()) + " entries, gradient " +
                     std::to_string(grad.size()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NumericError(std::string(op) + ": non-finite gradient at index " + std::to_string(i));
  }
}

inline void init_moments(OptimizerState& st, std::size_t n, const char* op) {
  if (st.s.empty() && st.r.empty()) {
    st.s.assign(n, 0.0);
    st.r.assign(n, 0.0);
  }
  if (st.s.size() != n || st.r.size() != n) {
    throw ShapeError(std::string(op) + ": optimizer state sized for " + std::to_string(st.s.size()) +
                     " entries, parameter has " + std::to_string(n));
  }
  if (!(st.beta1 >= 0.0 && st.beta1 < 1.0 && st.beta2 >= 0.0 && st.beta2 < 1.0)) {
    throw DomainError(std::string(op) + ": beta1 and beta2 must lie in [0, 1)");
  }
}

// Lines 4-9 of the Adam update; returns dtheta.
inline std::vector<double> adaptive_direction(std::span<const double> grad, OptimizerState& st, bool literal_r) {
  st.t += 1;
  const double t = double(st.t);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = literal_r ? 1.0 + std::pow(st.beta2, t) : 1.0 - std::pow(st.beta2, t);
  std::vector<double> d(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    st.s[i] = st.beta1 * st.s[i] + (1.0 - st.beta1) * grad[i];
    st.r[i] = st.beta2 * st.r[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    d[i] = -(st.s[i] / c1) / std::sqrt(st.r[i] / c2 + st.delta);
  }
  return d;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void apply(std::span<double> param, const std::vector<double>& d, const OptimizerState& st) {
  for (std::size_t i = 0; i < param.size(); ++i) param[i] += st.lr * d[i];
  if (st.weight_decay > 0.0) {
    const double f = 1.0 - st.lr * st.weight_decay;
    for (double& p : param) p *= f;
  }
}

}  // namespace optim_detail

/// param <- param - lr * grad
inline void sgd_step(std::span<double> param, std::span<const double> grad, double lr) {
  optim_detail::check(param, grad, "sgd_step");
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

inline void adam_step(std::span<double> param, std::span<const double> grad, OptimizerState& state) {
  optim_detail::check(param, grad, "adam_step");
  optim_detail::init_moments(state, param.size(), "adam_step");
  optim_detail::apply(param, optim_detail::adaptive_direction(grad, state, false), state);
}

/// Pi_theta(d) = d - (theta_hat . d) theta_hat with theta_hat = theta / ||theta||.
/// A zero-norm theta leaves d unchanged.
inline std::vector<double> tangent_projection(std::span<const double> theta, std::span<const double> d) {
  std::vector<double> out(d.begin(), d.end());
  const double n = std::sqrt(optim_detail::dot(theta, theta));
  if (n == 0.0) return out;
  const double k = optim_detail::dot(theta, d) / (n * n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= k * theta[i];
  return out;
}

/// cos(theta, G), zero when either vector vanishes.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(optim_detail::dot(a, a)), nb = std::sqrt(optim_detail::dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return optim_detail::dot(a, b) / (na * nb);
}

/// Returns true when the projection branch was taken.
inline bool adamp_step(std::span<double> param, std::span<const double> grad, OptimizerState& state) {
  optim_detail::check(param, grad, "adamp_step");
  optim_detail::init_moments(state, param.size(), "adamp_step");
  auto d = optim_detail::adaptive_direction(grad, state, state.literal_second_moment_correction);
  const bool project = -cosine(param, grad) < state.lambda_thresh;
  if (project) d = tangent_projection(param, d);
  optim_detail::apply(param, d, state);
  return project;
}

/// Clamps every entry to [-clip, clip].
inline void weight_clip(std::span<double> param, double clip) {
  if (!(clip > 0.0)) throw DomainError("weight_clip: clip must be > 0, got " + std::to_string(clip));
  for (double& p : param) p = std::min(clip, std::max(-clip, p));
}

enum class OptimizerKind { sgd, adam, adamp };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  double lambda_thresh = 0.1;
  double weight_decay = 0.0;
};

/// Steps a fixed list of leaf tensors from their accumulated gradients.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerConfig config) : params_(std::move(params)), config_(config) {
    states_.resize(params_.size());
    for (auto& st : states_) {
      st.lr = config.lr;
      st.beta1 = config.beta1;
      st.beta2 = config.beta2;
      st.delta = config.delta;
      st.lambda_thresh = config.lambda_thresh;
      st.weight_decay = config.weight_decay;
    }
  }

  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const std::vector<double> g = params_[k].grad();
      auto p = params_[k].mutable_values();
      switch (config_.kind) {
        case OptimizerKind::sgd: sgd_step(p, g, config_.lr); break;
        case OptimizerKind::adam: adam_step(p, g, states_[k]); break;
        case OptimizerKind::adamp: adamp_step(p, g, states_[k]); break;
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void clip(double c) {
    for (auto& p : params_) weight_clip(p.mutable_values(), c);
  }

  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<OptimizerState>& states() const { return states_; }
  std::vector<OptimizerState>& states() { return states_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig config_;
  std::vector<OptimizerState> states_;
};

}  // namespace microsim::optim
