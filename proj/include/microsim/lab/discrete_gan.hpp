#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "microsim/losses/gan.hpp"

namespace microsim::lab {

struct DiscreteGanAnalysis {
  std::vector<double> d_star;  // p_data / (p_data + p_g) per atom
  double c_of_g = 0.0;         // max_D V(G, D)
};

/// C(G) = sum p_data log(p_data / (p_data + p_g)) + p_g log(p_g / (p_g + p_data)), 0 log 0 = 0.
inline DiscreteGanAnalysis analyze_discrete_gan(const losses::DiscreteDistribution& p_data,
                                                const losses::DiscreteDistribution& p_g) {
  p_data.validate();
  p_g.validate();
  if (p_data.support != p_g.support) throw ShapeError("analyze_discrete_gan: supports are not aligned");
  DiscreteGanAnalysis out;
  out.d_star.resize(p_data.size());
  for (std::size_t i = 0; i < p_data.size(); ++i) {
    const double pd = p_data.probs[i], pg = p_g.probs[i], s = pd + pg;
    if (!(s > 0.0)) {
      throw DomainError("analyze_discrete_gan: atom " + std::to_string(i) + " has zero combined mass");
    }
    out.d_star[i] = pd / s;
    if (pd > 0.0) out.c_of_g += pd * std::log(pd / s);
    if (pg > 0.0) out.c_of_g += pg * std::log(pg / s);
  }
  return out;
}

struct GridVerification {
  std::vector<double> grid_argmax;  // per-atom maximizer of p_data log d + p_g log(1 - d) on the grid
  double max_deviation = 0.0;       // max |grid_argmax - d_star|
  double grid_value = 0.0;          // V at the grid maximizer
  double resolution = 0.0;
  bool consistent = false;          // max_deviation <= resolution
};

/// Exhaustive search over d in {0, r, 2r, ..., 1}; endpoints are admitted only
/// where their log term has zero weight.
inline GridVerification verify_by_grid(const losses::DiscreteDistribution& p_data,
                                       const losses::DiscreteDistribution& p_g, double resolution = 1e-3) {
  if (!(resolution > 0.0 && resolution < 0.5)) throw DomainError("verify_by_grid: resolution must be in (0, 0.5)");
  const auto a = analyze_discrete_gan(p_data, p_g);
  const auto n_grid = std::size_t(std::llround(1.0 / resolution));
  GridVerification g;
  g.resolution = resolution;
  g.grid_argmax.resize(p_data.size());
  for (std::size_t i = 0; i < p_data.size(); ++i) {
    const double pd = p_data.probs[i], pg = p_g.probs[i];
    double best = -HUGE_VAL, arg = 0.5;
    for (std::size_t k = 0; k <= n_grid; ++k) {
      const double d = double(k) / double(n_grid);
      if ((d == 0.0 && pd > 0.0) || (d == 1.0 && pg > 0.0)) continue;
      const double v = (pd > 0.0 ? pd * std::log(d) : 0.0) + (pg > 0.0 ? pg * std::log1p(-d) : 0.0);
      if (v > best) best = v, arg = d;
    }
    g.grid_argmax[i] = arg;
    g.grid_value += best;
    g.max_deviation = std::max(g.max_deviation, std::abs(arg - a.d_star[i]));
  }
  g.consistent = g.max_deviation <= resolution;
  return g;
}

}  // namespace microsim::lab
