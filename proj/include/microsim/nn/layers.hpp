#pragma once

// Small trainable building blocks. Weights are drawn from N(0, 1); equalized
// layers multiply them by sqrt(2 / fan_in) at every forward pass, plain
// layers fold that factor into the initial draw instead.

#include <vector>

#include "microsim/nn/conv.hpp"
#include "microsim/numeric/ops.hpp"
#include "microsim/numeric/rng.hpp"

namespace microsim::nn {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  bool equalized = false;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool equalized_lr = false)
      : weight(sample(rng, Distribution::standard_normal, {in, out}, true)),
        bias(Tensor::zeros({out}, true)),
        equalized(equalized_lr) {
    if (!equalized) weight = Tensor({in, out}, scaled(weight, equalized_scale(in)), true);
  }

  /// x [batch, in] -> [batch, out]
  Tensor operator()(const Tensor& x) const {
    const Tensor w = equalized ? mul_scalar(weight, equalized_scale(weight.dim(0))) : weight;
    return add(matmul(x, w), bias);
  }

  std::vector<Tensor> parameters() const { return {weight, bias}; }

 private:
  static std::vector<double> scaled(const Tensor& t, double s) {
    std::vector<double> v(t.values().begin(), t.values().end());
    for (double& e : v) e *= s;
    return v;
  }
};

struct Conv2d {
  Tensor kernel;  // [out, in, k, k]
  Tensor bias;    // [out]
  bool equalized = false;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, Rng& rng, bool equalized_lr = false)
      : kernel(sample(rng, Distribution::standard_normal, {out, in, k, k}, true)),
        bias(Tensor::zeros({out}, true)),
        equalized(equalized_lr) {
    if (!equalized) {
      std::vector<double> v(kernel.values().begin(), kernel.values().end());
      const double s = equalized_scale(in * k * k);
      for (double& e : v) e *= s;
      kernel = Tensor(kernel.shape(), std::move(v), true);
    }
  }

  std::size_t fan_in() const { return kernel.dim(1) * kernel.dim(2) * kernel.dim(3); }

  /// x [in, h, w] -> [out, h, w]
  Tensor operator()(const Tensor& x) const {
    const Tensor k = equalized ? mul_scalar(kernel, equalized_scale(fan_in())) : kernel;
    return conv2d(x, k, bias);
  }

  std::vector<Tensor> parameters() const { return {kernel, bias}; }
};

}  // namespace microsim::nn
