#pragma once

// Latent embedding by gradient descent on the reconstruction MSE.

#include <functional>
#include <string>
#include <vector>

#include "microsim/numeric/ops.hpp"
#include "microsim/numeric/rng.hpp"
#include "microsim/optim/optim.hpp"

namespace microsim::lab {

struct EmbedConfig {
  std::size_t latent_dim = 2;
  std::size_t steps = 500;
  optim::OptimizerConfig optimizer{.kind = optim::OptimizerKind::adam, .lr = 0.01};
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
};

struct EmbedResult {
  Tensor latent;          // [1, latent_dim]
  Tensor reconstruction;  // generator(latent)
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // loss before each step
};

/// Starts from w ~ U(0, 1)^d and minimizes mean((G(w) - target)^2).
inline EmbedResult embed_latent(const Tensor& target, const std::function<Tensor(const Tensor&)>& generator,
                                const EmbedConfig& cfg) {
  if (cfg.latent_dim == 0) throw ConfigError("embed_latent: latent_dim must be >= 1");
  Rng rng(cfg.seed);
  Tensor w = sample(rng, Distribution::uniform01, {1, cfg.latent_dim}, true);
  optim::Optimizer opt({w}, cfg.optimizer);
  EmbedResult out;
  auto loss_of = [&](const Tensor& recon) {
    if (recon.shape() != target.shape()) {
      throw ShapeError("embed_latent: generator output " + shape_string(recon.shape()) + " vs target " +
                       shape_string(target.shape()));
    }
    return mean(square(sub(recon, target)));
  };
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Tensor loss = loss_of(generator(w));
    out.loss_trace.push_back(loss.item());
    if (loss.item() > cfg.divergence_limit) {
      throw NumericError("embed_latent: loss " + std::to_string(loss.item()) + " diverged at step " +
                         std::to_string(step));
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  out.reconstruction = generator(w.detach()).detach();
  out.final_loss = loss_of(out.reconstruction).item();
  out.latent = w.detach();
  return out;
}

}  // namespace microsim::lab
