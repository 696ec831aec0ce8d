#pragma once

// 8-Gaussian ring GAN: data sampler, MLP players, alternating training loop
// and the mode-coverage diagnostic.

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "microsim/lab/snapshot.hpp"
#include "microsim/losses/gan.hpp"
#include "microsim/nn/layers.hpp"
#include "microsim/numeric/ops.hpp"
#include "microsim/numeric/rng.hpp"
#include "microsim/optim/optim.hpp"

namespace microsim::lab {

// ------------------------------------------------------------- dataset

struct RingDatasetConfig {
  std::size_t n_modes = 8;
  double radius = 1.0;
  double std = 0.05;
  std::size_t samples_per_draw = 64;

  void validate() const {
    if (n_modes < 1) throw ConfigError("ring dataset: n_modes must be >= 1");
    if (!(std > 0.0)) throw ConfigError("ring dataset: std must be > 0");
    if (!(radius >= 0.0)) throw ConfigError("ring dataset: radius must be >= 0");
    if (samples_per_draw < 1) throw ConfigError("ring dataset: samples_per_draw must be >= 1");
  }

  /// Center k sits at angle 2 pi k / n_modes.
  std::vector<std::array<double, 2>> centers() const {
    std::vector<std::array<double, 2>> c(n_modes);
    for (std::size_t k = 0; k < n_modes; ++k) {
      const double a = 2.0 * std::numbers::pi * double(k) / double(n_modes);
      c[k] = {radius * std::cos(a), radius * std::sin(a)};
    }
    return c;
  }
};

/// Uniform mode choice plus isotropic N(0, std^2) noise. Owns its stream.
class RingSampler {
 public:
  RingSampler(RingDatasetConfig cfg, Rng rng) : cfg_(cfg), centers_(cfg.centers()), rng_(rng) { cfg_.validate(); }

  Tensor draw() { return draw(cfg_.samples_per_draw); }

  /// [n, 2]
  Tensor draw(std::size_t n) {
    std::vector<double> v(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = centers_[rng_.below(cfg_.n_modes)];
      v[2 * i] = c[0] + cfg_.std * rng_.normal();
      v[2 * i + 1] = c[1] + cfg_.std * rng_.normal();
    }
    return Tensor({n, 2}, std::move(v));
  }

  const RingDatasetConfig& config() const { return cfg_; }
  const std::vector<std::array<double, 2>>& centers() const { return centers_; }

 private:
  RingDatasetConfig cfg_;
  std::vector<std::array<double, 2>> centers_;
  Rng rng_;
};

inline RingSampler make_ring_dataset(const RingDatasetConfig& cfg, Rng& rng) { return RingSampler(cfg, rng.split(0)); }

/// Number of modes holding at least min_fraction of the samples within
/// capture_radius_sigmas * std of their center.
inline std::size_t mode_coverage(const Tensor& samples, const RingDatasetConfig& cfg,
                                 double capture_radius_sigmas = 3.0, double min_fraction = 0.02) {
  if (samples.rank() != 2 || samples.dim(1) != 2 || samples.dim(0) == 0) {
    throw ShapeError("mode_coverage: expects nonempty [n, 2] samples, got " + shape_string(samples.shape()));
  }
  const auto centers = cfg.centers();
  const double r2 = std::pow(capture_radius_sigmas * cfg.std, 2);
  std::vector<std::size_t> hits(centers.size(), 0);
  const std::size_t n = samples.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double dx = samples[2 * i] - centers[k][0], dy = samples[2 * i + 1] - centers[k][1];
      if (dx * dx + dy * dy <= r2) ++hits[k];
    }
  std::size_t covered = 0;
  for (std::size_t h : hits) covered += double(h) >= min_fraction * double(n);
  return covered;
}

// ----------------------------------------------------------------- MLP

enum class Activation { identity, relu, leaky_relu, tanh, sigmoid };

struct MlpSpec {
  std::vector<std::size_t> widths;      // input, hidden..., output
  std::vector<Activation> activations;  // one per linear layer
  double leaky_slope = 0.2;

  /// in -> hidden -> hidden -> out: three linear layers.
  static MlpSpec three_layer(std::size_t in, std::size_t hidden, std::size_t out,
                             Activation hidden_act = Activation::leaky_relu, Activation out_act = Activation::identity) {
    return {{in, hidden, hidden, out}, {hidden_act, hidden_act, out_act}};
  }

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 3) throw ConfigError("MlpSpec: at least two layers are required");
    if (activations.size() != widths.size() - 1) throw ConfigError("MlpSpec: one activation per layer required");
    for (std::size_t w : widths)
      if (w == 0) throw ConfigError("MlpSpec: zero width");
  }
};

inline Tensor activate(const Tensor& x, Activation a, double slope) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, slope);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

class Mlp {
 public:
  Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) layers_.emplace_back(spec_.widths[l], spec_.widths[l + 1], rng);
  }

  /// x [b, in] -> [b, out]
  Tensor operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) h = activate(layers_[l](h), spec_.activations[l], spec_.leaky_slope);
    return h;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p;
    for (const auto& l : layers_) {
      p.push_back(l.weight);
      p.push_back(l.bias);
    }
    return p;
  }

  const MlpSpec& spec() const { return spec_; }

 private:
  MlpSpec spec_;
  std::vector<nn::Linear> layers_;
};

// ------------------------------------------------------------ training

struct GanTrainConfig {
  RingDatasetConfig data;
  MlpSpec generator = MlpSpec::three_layer(2, 10, 2);
  MlpSpec discriminator = MlpSpec::three_layer(2, 10, 1);
  losses::GanVariant loss = losses::GanVariant::minimax;
  optim::OptimizerConfig opt_g{.kind = optim::OptimizerKind::sgd, .lr = 0.01};
  optim::OptimizerConfig opt_d{.kind = optim::OptimizerKind::sgd, .lr = 0.01};
  std::size_t steps = 10000;
  std::size_t d_steps = 1;  // discriminator updates per generator update
  double clip = 0.0;        // > 0 clips discriminator weights after each of its steps
  std::size_t coverage_every = 500;
  std::size_t coverage_samples = 2000;
  double capture_sigmas = 3.0;
  double min_fraction = 0.02;
  std::uint64_t seed = 0;

  void validate() const {
    data.validate();
    generator.validate();
    discriminator.validate();
    if (generator.output_dim() != 2) throw ConfigError("generator must emit 2d points");
    if (discriminator.input_dim() != 2 || discriminator.output_dim() != 1) {
      throw ConfigError("discriminator must map 2d points to one score");
    }
    if (d_steps < 1) throw ConfigError("d_steps must be >= 1");
    if (clip < 0.0) throw ConfigError("clip must be >= 0");
    if (coverage_samples < 1) throw ConfigError("coverage_samples must be >= 1");
  }
};

struct CoveragePoint {
  std::size_t step = 0;  // number of completed iterations
  std::size_t covered = 0;
};

struct TrainReport {
  std::vector<double> loss_g;
  std::vector<double> loss_d;  // last discriminator loss of each iteration
  std::vector<CoveragePoint> coverage;
  std::size_t final_coverage = 0;
  double wall_seconds = 0.0;
  std::string snapshot_id;
};

struct GanRun {
  TrainReport report;
  Mlp generator;
  Mlp discriminator;
  Tensor final_samples;  // coverage evaluation batch from the final generator
};

/// z ~ U(0, 1)^d, [n, d]
inline Tensor latent_batch(Rng& rng, std::size_t n, std::size_t d) {
  return sample(rng, Distribution::uniform01, {n, d});
}

/// Alternating updates: d_steps discriminator steps on a fresh real batch and
/// a detached fake batch, then one generator step. Logit-space losses are
/// used for the log-likelihood variants; wasserstein takes raw critic scores.
/// `on_coverage(step, samples)` sees each coverage evaluation batch.
using CoverageObserver = std::function<void(std::size_t, const Tensor&)>;

inline GanRun train_gan_2d(const GanTrainConfig& cfg, const CoverageObserver& on_coverage = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Rng root(cfg.seed);
  Rng init = root.split(1), data_rng = root.split(2), z_rng = root.split(3), eval_rng = root.split(4);
  Mlp gen(cfg.generator, init), disc(cfg.discriminator, init);
  RingSampler data(cfg.data, data_rng);
  optim::Optimizer opt_g(gen.parameters(), cfg.opt_g), opt_d(disc.parameters(), cfg.opt_d);
  const std::size_t b = cfg.data.samples_per_draw, zdim = cfg.generator.input_dim();
  const Tensor eval_z = latent_batch(eval_rng, cfg.coverage_samples, zdim);

  TrainReport report;
  auto measure = [&](std::size_t step) {
    const Tensor samples = gen(eval_z).detach();
    report.coverage.push_back({step, mode_coverage(samples, cfg.data, cfg.capture_sigmas, cfg.min_fraction)});
    if (on_coverage) on_coverage(step, samples);
  };
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    try {
      double ld = 0.0;
      for (std::size_t k = 0; k < cfg.d_steps; ++k) {
        const Tensor real = data.draw(b);
        const Tensor fake = gen(latent_batch(z_rng, b, zdim)).detach();
        const auto l = losses::gan_losses_from_logits(disc(real), disc(fake), cfg.loss);
        opt_d.zero_grad();
        l.d.backward();
        opt_d.step();
        if (cfg.clip > 0.0) opt_d.clip(cfg.clip);
        ld = l.d.item();
      }
      const Tensor fake = gen(latent_batch(z_rng, b, zdim));
      const Tensor scores_fake = disc(fake);
      const auto l = losses::gan_losses_from_logits(scores_fake.detach(), scores_fake, cfg.loss);
      opt_g.zero_grad();
      l.g.backward();
      opt_g.step();
      report.loss_d.push_back(ld);
      report.loss_g.push_back(l.g.item());
    } catch (const NumericError& e) {
      throw NumericError("train_gan_2d: non-finite value at step " + std::to_string(step) + ": " + e.what());
    }
    if (cfg.coverage_every > 0 && (step + 1) % cfg.coverage_every == 0) measure(step + 1);
  }
  const Tensor final_samples = gen(eval_z);
  report.final_coverage = mode_coverage(final_samples, cfg.data, cfg.capture_sigmas, cfg.min_fraction);
  auto params = gen.parameters();
  for (const auto& p : disc.parameters()) params.push_back(p);
  report.snapshot_id = snapshot_id(cfg.seed, params);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(report), std::move(gen), std::move(disc), final_samples.detach()};
}

}  // namespace microsim::lab
