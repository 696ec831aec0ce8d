#pragma once

// Batch, instance and adaptive instance normalization plus the mini-batch
// standard-deviation layer. All variances are population variances (1/N).

#include <cmath>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"

namespace microsim::nn {

struct NormParams {
  Tensor gamma;  // [c], trainable
  Tensor beta;   // [c], trainable
  std::vector<double> running_mean;
  std::vector<double> running_std;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static NormParams identity(std::size_t channels) {
    NormParams p;
    p.gamma = Tensor::ones({channels}, true);
    p.beta = Tensor::zeros({channels}, true);
    p.running_mean.assign(channels, 0.0);
    p.running_std.assign(channels, 1.0);
    return p;
  }
  std::size_t channels() const { return gamma.size(); }
};

enum class NormMode { train, eval };

/// Per-channel affine style: y_s scales, y_b shifts.
struct StyleVector {
  Tensor scale;  // y_s, [c]
  Tensor bias;   // y_b, [c]
};

}  // namespace microsim::nn

namespace microsim::detail {

struct GroupStats {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Standardizes every element by the population statistics of its group,
/// (x - mean_g) / sqrt(var_g + eps). `group_of(i)` maps a flat index to [0, groups).
template <class GroupOf>
Tensor standardize(const char* op, const Tensor& x, std::size_t groups, GroupOf group_of,
                   double eps, GroupStats* stats_out = nullptr) {
  const auto v = x.values();
  std::vector<double> mean(groups, 0.0), var(groups, 0.0), count(groups, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    mean[group_of(i)] += v[i];
    count[group_of(i)] += 1.0;
  }
  for (std::size_t g = 0; g < groups; ++g) mean[g] /= count[g];
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - mean[group_of(i)];
    var[group_of(i)] += d * d;
  }
  std::vector<double> inv_std(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    var[g] /= count[g];
    if (var[g] + eps <= 0.0) {
      throw DomainError(std::string(op) + ": zero variance in group " + std::to_string(g) +
                        " with epsilon = 0");
    }
    inv_std[g] = 1.0 / std::sqrt(var[g] + eps);
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t g = group_of(i);
    out[i] = (v[i] - mean[g]) * inv_std[g];
  }
  if (stats_out) *stats_out = GroupStats{mean, var};
  return microsim::detail::make_result(
      op, x.shape(), std::move(out), {x},
      [groups, group_of, inv_std, count](microsim::detail::Node& self) {
        double* gx = microsim::detail::parent_grad(self, 0);
        if (!gx) return;
        const auto& y = self.values;
        const auto& g = self.grad;
        std::vector<double> mg(groups, 0.0), mgy(groups, 0.0);
        for (std::size_t i = 0; i < y.size(); ++i) {
          mg[group_of(i)] += g[i];
          mgy[group_of(i)] += g[i] * y[i];
        }
        for (std::size_t k = 0; k < groups; ++k) {
          mg[k] /= count[k];
          mgy[k] /= count[k];
        }
        for (std::size_t i = 0; i < y.size(); ++i) {
          const std::size_t k = group_of(i);
          gx[i] += inv_std[k] * (g[i] - mg[k] - y[i] * mgy[k]);
        }
      });
}

/// [c] -> [c, 1, ..., 1] with `trailing` unit axes, for broadcasting over spatial dims.
inline Tensor channel_view(const Tensor& v, std::size_t trailing) {
  Shape s{v.size()};
  for (std::size_t k = 0; k < trailing; ++k) s.push_back(1);
  return reshape(v, s);
}

}  // namespace microsim::detail

namespace microsim::nn {

/// Batch normalization over [b, c, ...]. Train mode standardizes each channel
/// with batch statistics and folds them into the running averages; eval mode
/// applies the tracked statistics.
inline Tensor batch_norm(const Tensor& batch, NormParams& params, NormMode mode) {
  if (batch.rank() < 2) throw ShapeError("batch_norm: expected [b, c, ...], got " + shape_string(batch.shape()));
  const std::size_t b = batch.dim(0), c = batch.dim(1);
  if (params.channels() != c) {
    throw ShapeError("batch_norm: params have " + std::to_string(params.channels()) +
                     " channels, batch " + shape_string(batch.shape()));
  }
  const std::size_t inner = batch.size() / (b * c);
  const std::size_t trailing = batch.rank() - 2;
  Tensor normalized;
  if (mode == NormMode::train) {
    if (b < 2) throw ShapeError("batch_norm: train mode needs at least 2 instances");
    detail::GroupStats stats;
    normalized = detail::standardize(
        "batch_norm", batch, c, [inner, c](std::size_t i) { return (i / inner) % c; },
        params.epsilon, &stats);
    for (std::size_t k = 0; k < c; ++k) {
      const double m = params.momentum;
      params.running_mean[k] = (1.0 - m) * params.running_mean[k] + m * stats.mean[k];
      params.running_std[k] =
          (1.0 - m) * params.running_std[k] + m * std::sqrt(stats.var[k] + params.epsilon);
    }
  } else {
    const Tensor rm = detail::channel_view(Tensor({c}, params.running_mean), trailing);
    const Tensor rs = detail::channel_view(Tensor({c}, params.running_std), trailing);
    normalized = div(sub(batch, rm), rs);
  }
  return add(mul(normalized, detail::channel_view(params.gamma, trailing)),
             detail::channel_view(params.beta, trailing));
}

/// Instance normalization over [b, c, ...]: statistics per (instance, channel).
/// Running statistics in `params` are not used.
inline Tensor instance_norm(const Tensor& input, const NormParams& params) {
  if (input.rank() < 3) {
    throw ShapeError("instance_norm: expected [b, c, spatial...], got " + shape_string(input.shape()));
  }
  const std::size_t b = input.dim(0), c = input.dim(1);
  if (params.channels() != c) throw ShapeError("instance_norm: channel mismatch");
  const std::size_t inner = input.size() / (b * c);
  const Tensor normalized = detail::standardize(
      "instance_norm", input, b * c, [inner](std::size_t i) { return i / inner; }, params.epsilon);
  const std::size_t trailing = input.rank() - 2;
  return add(mul(normalized, detail::channel_view(params.gamma, trailing)),
             detail::channel_view(params.beta, trailing));
}

/// AdaIN(X_i, y) = y_s,i (X_i - mean X_i) / std X_i + y_b,i on [c, h, w].
inline Tensor adain(const Tensor& features, const StyleVector& style, double epsilon = 0.0) {
  detail::require_rank(features, 3, "adain");
  const std::size_t c = features.dim(0);
  if (style.scale.size() != c || style.bias.size() != c) {
    throw ShapeError("adain: style has " + std::to_string(style.scale.size()) + "/" +
                     std::to_string(style.bias.size()) + " entries for " + std::to_string(c) +
                     " feature maps");
  }
  const std::size_t inner = features.dim(1) * features.dim(2);
  const Tensor normalized = detail::standardize(
      "adain", features, c, [inner](std::size_t i) { return i / inner; }, epsilon);
  return add(mul(normalized, detail::channel_view(style.scale, 2)),
             detail::channel_view(style.bias, 2));
}

/// Appends one channel holding the mean over all (c, y, x) of the across-batch
/// population standard deviation. [b, c, h, w] -> [b, c + 1, h, w].
inline Tensor minibatch_stddev(const Tensor& batch) {
  detail::require_rank(batch, 4, "minibatch_stddev");
  const std::size_t b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (b < 2) throw ShapeError("minibatch_stddev: batch size must be >= 2");
  const std::size_t L = c * h * w;
  const auto v = batch.values();
  // Statistics of x - x_0 so identical instances give exactly zero spread.
  std::vector<double> mu(L, 0.0), sd(L, 0.0);
  for (std::size_t n = 1; n < b; ++n)
    for (std::size_t l = 0; l < L; ++l) mu[l] += v[n * L + l] - v[l];
  for (std::size_t l = 0; l < L; ++l) mu[l] = mu[l] / double(b) + v[l];
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t l = 0; l < L; ++l) {
      const double d = (v[n * L + l] - v[l]) - (mu[l] - v[l]);
      sd[l] += d * d;
    }
  double s = 0.0;
  for (double& x : sd) {
    x = std::sqrt(x / double(b));
    s += x;
  }
  s /= double(L);
  const std::size_t plane = h * w;
  const std::size_t Lout = (c + 1) * plane;
  std::vector<double> out(b * Lout);
  for (std::size_t n = 0; n < b; ++n) {
    std::copy_n(v.begin() + n * L, L, out.begin() + n * Lout);
    std::fill_n(out.begin() + n * Lout + L, plane, s);
  }
  return detail::make_result(
      "minibatch_stddev", Shape{b, c + 1, h, w}, std::move(out), {batch},
      [b, L, Lout, plane, mu, sd](detail::Node& self) {
        double* gx = detail::parent_grad(self, 0);
        if (!gx) return;
        const auto& X = self.parents[0]->values;
        double gs = 0.0;
        for (std::size_t n = 0; n < b; ++n) {
          for (std::size_t l = 0; l < L; ++l) gx[n * L + l] += self.grad[n * Lout + l];
          for (std::size_t p = 0; p < plane; ++p) gs += self.grad[n * Lout + L + p];
        }
        // d s / d x_{n,l} = (x_{n,l} - mu_l) / (b * sd_l * L); zero where sd_l = 0.
        for (std::size_t l = 0; l < L; ++l) {
          if (sd[l] == 0.0) continue;
          const double f = gs / (double(b) * sd[l] * double(L));
          for (std::size_t n = 0; n < b; ++n) gx[n * L + l] += f * (X[n * L + l] - mu[l]);
        }
      });
}

}  // namespace microsim::nn
