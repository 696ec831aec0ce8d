#pragma once

// Consistency, encoder and future-frame stage losses, plus the growth weight
// map and CutMix masks.

#include <optional>
#include <string>
#include <vector>

#include "microsim/losses/gan.hpp"
#include "microsim/losses/robust.hpp"
#include "microsim/numeric/ops.hpp"
#include "microsim/numeric/rng.hpp"
#include "microsim/warp/warp.hpp"

namespace microsim::losses {

// ---------------------------------------------------------------- CutMix

/// Indicator of the rectangle rows [y0, y1) x columns [x0, x1).
struct MixMask {
  Tensor mask;  // [h, w], entries 0 or 1
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};

inline MixMask rectangle_mask(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t y1,
                              std::size_t x1) {
  if (!(y0 < y1 && y1 <= h && x0 < x1 && x1 <= w)) throw ShapeError("rectangle_mask: rectangle outside image");
  std::vector<double> m(h * w, 0.0);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) m[y * w + x] = 1.0;
  return {Tensor({h, w}, m), y0, x0, y1, x1};
}

/// One uniformly placed rectangle covering 25% to 75% of the image.
inline MixMask random_mix_mask(std::size_t h, std::size_t w, Rng& rng) {
  const double area = double(h * w);
  auto fits = [&](std::size_t hh, std::size_t ww) {
    const double a = double(hh * ww);
    return a >= 0.25 * area && a <= 0.75 * area;
  };
  bool feasible = false;
  for (std::size_t hh = 1; hh <= h && !feasible; ++hh)
    for (std::size_t ww = 1; ww <= w && !feasible; ++ww) feasible = fits(hh, ww);
  if (!feasible) throw ShapeError("random_mix_mask: no rectangle covers 25-75% of a " + std::to_string(h) + "x" + std::to_string(w) + " image");
  std::size_t hh = 0, ww = 0;
  do {
    hh = 1 + std::size_t(rng.below(h));
    ww = 1 + std::size_t(rng.below(w));
  } while (!fits(hh, ww));
  const std::size_t y0 = std::size_t(rng.below(h - hh + 1)), x0 = std::size_t(rng.below(w - ww + 1));
  return rectangle_mask(h, w, y0, x0, y0 + hh, x0 + ww);
}

/// mask * a + (1 - mask) * b; the [h, w] mask broadcasts over leading axes.
inline Tensor mix(const Tensor& a, const Tensor& b, const MixMask& m) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mix: operands " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
  const Tensor inverse = add_scalar(mul_scalar(m.mask, -1.0), 1.0);
  return add(mul(a, m.mask), mul(b, inverse));
}

/// sqrt(mean(t^2)); the gradient at t = 0 is taken as zero.
inline Tensor rms(const Tensor& t) {
  const auto T = t.values();
  double s = 0.0;
  for (double v : T) s += v * v;
  const double n = double(T.size());
  return detail::make_result("rms", Shape{1}, {std::sqrt(s / n)}, {t}, [n](detail::Node& self) {
    double* g = detail::parent_grad(self, 0);
    const double r = self.values[0];
    if (!g || r == 0.0) return;
    const auto& T = self.parents[0]->values;
    for (std::size_t i = 0; i < T.size(); ++i) g[i] += self.grad[0] * T[i] / (n * r);
  });
}

/// || Mix(D(real), D(fake)) - D(Mix(real, fake)) ||, taken as the root mean
/// square over pixels.
inline Tensor cutmix_consistency(const Tensor& pred_real_map, const Tensor& pred_fake_map,
                                 const Tensor& mixed_input_pred_map, const MixMask& mask) {
  if (mixed_input_pred_map.shape() != pred_real_map.shape()) {
    throw ShapeError("cutmix_consistency: mixed prediction " + shape_string(mixed_input_pred_map.shape()) +
                     " vs " + shape_string(pred_real_map.shape()));
  }
  return rms(sub(mix(pred_real_map, pred_fake_map, mask), mixed_input_pred_map));
}

// ---------------------------------------------------------------- encoder

struct EncoderLosses {
  Tensor recon;       // mean |I_hat - I| over batch and pixels
  Tensor latent_reg;  // mean |E(I_fake) - w_fake| over batch and latent dims
};

inline EncoderLosses encoder_losses(const Tensor& pred_images, const Tensor& real_images,
                                    const Tensor& pred_latents, const Tensor& true_latents) {
  if (pred_images.shape() != real_images.shape() || pred_latents.shape() != true_latents.shape()) {
    throw ShapeError("encoder_losses: images " + shape_string(pred_images.shape()) + "/" +
                     shape_string(real_images.shape()) + ", latents " + shape_string(pred_latents.shape()) +
                     "/" + shape_string(true_latents.shape()));
  }
  return {mean(abs(sub(pred_images, real_images))), mean(abs(sub(pred_latents, true_latents)))};
}

// ---------------------------------------------------------- weight map

struct WeightMap {
  Tensor values;  // [h, w], entries 1.0 or 1.5
  std::size_t dilation_radius = 0;
};

/// 1.5 on the growth region (target & !prev) dilated by a (2r+1)^2 square, 1.0 elsewhere.
inline WeightMap build_weight_map(const Tensor& mask_prev, const Tensor& mask_target, std::size_t radius) {
  if (mask_prev.rank() != 2 || mask_prev.shape() != mask_target.shape()) {
    throw ShapeError("build_weight_map: masks " + shape_string(mask_prev.shape()) + " and " +
                     shape_string(mask_target.shape()) + " must be equal [h, w]");
  }
  const std::size_t h = mask_prev.dim(0), w = mask_prev.dim(1);
  for (const Tensor* m : {&mask_prev, &mask_target})
    for (std::size_t i = 0; i < m->size(); ++i)
      if ((*m)[i] != 0.0 && (*m)[i] != 1.0) {
        throw DomainError("build_weight_map: mask value " + std::to_string((*m)[i]) + " at index " +
                          std::to_string(i) + " is not binary");
      }
  std::vector<double> out(h * w, 1.0);
  const long r = long(radius);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!(mask_target[y * w + x] == 1.0 && mask_prev[y * w + x] == 0.0)) continue;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long yy = long(y) + dy, xx = long(x) + dx;
          if (yy >= 0 && xx >= 0 && yy < long(h) && xx < long(w)) out[std::size_t(yy) * w + std::size_t(xx)] = 1.5;
        }
    }
  return {Tensor({h, w}, out), radius};
}

// ---------------------------------------------------- future-frame stages

enum class SdcStage { flow, kernel_init, fine_tune, multi };

struct StageLambdas {
  double g = 1.0;
  double adv = 0.01;
};

/// Inputs for one stage loss; each stage reads only the fields it needs.
struct StageInputs {
  std::vector<Tensor> predicted;  // frames I_hat, each [h, w] or [c, h, w]
  std::vector<Tensor> target;     // frames I, same shapes
  std::optional<warp::SeparableKernelField> kernels;
  std::optional<Tensor> adv_scores;  // D(fake sequence) in (0, 1)
  std::optional<Tensor> adv_logits;  // alternatively pre-sigmoid logits
  std::optional<WeightMap> weights;
};

/// L_g[I - I_hat] = mean over pixels of rho(W * (I - I_hat)) with fixed (alpha, c).
inline Tensor robust_frame_loss(const Tensor& predicted, const Tensor& target, const RobustLossParams& robust,
                                const std::optional<WeightMap>& weights) {
  if (predicted.shape() != target.shape()) {
    throw ShapeError("frame loss: prediction " + shape_string(predicted.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  Tensor residual = sub(target, predicted);
  if (weights) residual = mul(residual, weights->values);
  return mean(garloss_rho(residual, robust.alpha, robust.c));
}

/// Mean over pixels of ||k_h - e||^2 + ||k_v - e||^2, e the middle-one-hot vector.
inline Tensor kernel_init_loss(const warp::SeparableKernelField& kernels) {
  const std::size_t n = kernels.size();
  const Tensor e({n}, warp::middle_one_hot(n));
  const std::size_t pixels = kernels.k_h.size() / n;
  return mul_scalar(add(sum(square(sub(kernels.k_h, e))), sum(square(sub(kernels.k_v, e)))), 1.0 / double(pixels));
}

inline Tensor sdc_stage_loss(SdcStage stage, const StageInputs& in, const StageLambdas& lambdas,
                             const RobustLossParams& robust) {
  auto need_frames = [&](const char* name) {
    if (in.predicted.empty() || in.predicted.size() != in.target.size()) {
      throw ConfigError(std::string("sdc_stage_loss(") + name + "): needs matching predicted/target frames");
    }
  };
  switch (stage) {
    case SdcStage::flow:
    case SdcStage::fine_tune:
      need_frames(stage == SdcStage::flow ? "flow" : "fine_tune");
      return robust_frame_loss(in.predicted[0], in.target[0], robust, in.weights);
    case SdcStage::kernel_init:
      if (!in.kernels) throw ConfigError("sdc_stage_loss(kernel_init): needs kernels");
      return kernel_init_loss(*in.kernels);
    case SdcStage::multi: {
      need_frames("multi");
      if (!in.adv_scores && !in.adv_logits) {
        throw ConfigError("sdc_stage_loss(multi): needs discriminator scores for the sequence");
      }
      Tensor recon = Tensor::scalar(0.0);
      for (std::size_t t = 0; t < in.predicted.size(); ++t)
        recon = add(recon, robust_frame_loss(in.predicted[t], in.target[t], robust, in.weights));
      recon = mul_scalar(recon, lambdas.g / double(in.predicted.size()));
      Tensor log_d;
      if (in.adv_scores) {
        gan_detail::require_probabilities(*in.adv_scores, "sequence");
        log_d = mean(log(*in.adv_scores));
      } else {
        log_d = mean(log_sigmoid(*in.adv_logits));
      }
      return sub(recon, mul_scalar(log_d, lambdas.adv));
    }
  }
  throw std::logic_error("sdc_stage_loss: unknown stage");
}

}  // namespace microsim::losses
