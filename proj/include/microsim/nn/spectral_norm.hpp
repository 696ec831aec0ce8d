#pragma once

#include <cmath>
#include <vector>

#include "microsim/numeric/ops.hpp"
#include "microsim/numeric/rng.hpp"

namespace microsim::nn {

/// Persistent power-iteration vectors for one weight matrix.
struct SpectralNormState {
  std::vector<double> u;  // [out]
  std::vector<double> v;  // [in]
  double epsilon = 1e-12;
};

namespace spectral_detail {

inline double normalize(std::vector<double>& x) {
  double n = 0.0;
  for (double e : x) n += e * e;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& e : x) e /= n;
  }
  return n;
}

}  // namespace spectral_detail

/// W / sigma_hat, where sigma_hat = u^T W v after `iterations` power steps.
/// The gradient flows through sigma_hat with u and v held constant. A
/// (numerically) zero matrix is returned unchanged.
inline Tensor spectral_normalize(const Tensor& weight, std::size_t iterations,
                                 SpectralNormState& state, std::uint64_t init_seed = 0) {
  detail::require_rank(weight, 2, "spectral_normalize");
  if (iterations < 1) throw DomainError("spectral_normalize: iterations must be >= 1");
  const std::size_t rows = weight.dim(0), cols = weight.dim(1);
  if (state.u.size() != rows) {
    Rng rng(init_seed);
    state.u.resize(rows);
    for (double& e : state.u) e = rng.normal();
    spectral_detail::normalize(state.u);
  }
  if (state.v.size() != cols) state.v.assign(cols, 0.0);
  const auto W = weight.values();
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += W[i * cols + j] * state.u[i];
      state.v[j] = s;
    }
    spectral_detail::normalize(state.v);
    for (std::size_t i = 0; i < rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += W[i * cols + j] * state.v[j];
      state.u[i] = s;
    }
    spectral_detail::normalize(state.u);
  }
  const Tensor u({1, rows}, state.u);
  const Tensor v({cols, 1}, state.v);
  const Tensor sigma = matmul(matmul(u, weight), v);
  if (!(sigma.item() > state.epsilon)) return weight;
  return div(weight, reshape(sigma, {1}));
}

}  // namespace microsim::nn
