#pragma once

#include <string>

#include "microsim/numeric/ops.hpp"

namespace microsim::nn {

/// Style modulation followed by per-output-channel demodulation.
///
///   W'[j, i, .]  = W[j, i, .] * s_i
///   W''[j, i, .] = W'[j, i, .] / sqrt(sum_{i, kernel} W'[j, i, .]^2 + eps)
///
/// weights [c_out, c_in, k, k], style_scales [c_in].
inline Tensor weight_demodulate(const Tensor& weights, const Tensor& style_scales,
                                double epsilon = 1e-8) {
  detail::require_rank(weights, 4, "weight_demodulate");
  const std::size_t co = weights.dim(0), ci = weights.dim(1), k = weights.dim(2);
  if (style_scales.size() != ci) {
    throw ShapeError("weight_demodulate: " + std::to_string(style_scales.size()) +
                     " style scales for weights " + shape_string(weights.shape()));
  }
  if (!(epsilon > 0.0)) throw DomainError("weight_demodulate: epsilon must be positive");
  const Tensor modulated = mul(weights, reshape(style_scales, {ci, 1, 1}));
  const Tensor sq = sum(reshape(square(modulated), {co, ci * k * weights.dim(3)}), 1);
  const Tensor norm = sqrt(add_scalar(sq, epsilon));
  return div(modulated, reshape(norm, {co, 1, 1, 1}));
}

}  // namespace microsim::nn
