#pragma once

// Desk-scale SDC frame predictor and its four-stage trainer.
//
// Input: the last `inputs` frames plus a two-channel backward flow (u, v)
// between the two most recent frames, stacked as [inputs + 2, h, w].
// Encoder: conv 3x3 -> avg-pool 2 -> conv 3x3 -> bilinear-up 2 -> concat
// with the full-resolution features -> conv 3x3, leaky ReLU after each conv.
// Heads: motion (2 channels, 3x3 conv on the features), k_h and k_v (N channels
// each, 1x1 convs on instance-normalized features).
// The next frame is sdc(last frame, motion, kernels).
//
// Stage masks: flow trains encoder + motion head with middle-one-hot kernels;
// kernel_init trains only the kernel heads; fine_tune and multi train all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "microsim/lab/sequences.hpp"
#include "microsim/lab/snapshot.hpp"
#include "microsim/losses/gan.hpp"
#include "microsim/losses/stage.hpp"
#include "microsim/metrics/metrics.hpp"
#include "microsim/nn/layers.hpp"
#include "microsim/nn/normalization.hpp"
#include "microsim/nn/resample.hpp"
#include "microsim/optim/optim.hpp"
#include "microsim/warp/warp.hpp"

namespace microsim::lab {

using losses::SdcStage;

inline const char* stage_name(SdcStage s) {
  switch (s) {
    case SdcStage::flow: return "flow";
    case SdcStage::kernel_init: return "kernel_init";
    case SdcStage::fine_tune: return "fine_tune";
    case SdcStage::multi: return "multi";
  }
  return "?";
}

inline SdcStage parse_stage(const std::string& s) {
  if (s == "flow") return SdcStage::flow;
  if (s == "kernel_init" || s == "kernel") return SdcStage::kernel_init;
  if (s == "fine_tune" || s == "finetune") return SdcStage::fine_tune;
  if (s == "multi") return SdcStage::multi;
  throw ConfigError("unknown stage '" + s + "' (flow, kernel_init, fine_tune, multi)");
}

struct PredictorConfig {
  std::size_t inputs = 3;
  std::size_t kernel_size = 7;
  std::size_t features = 12;
};

struct Prediction {
  Tensor frame;  // [h, w]
  warp::MotionField motion;
  std::optional<warp::SeparableKernelField> kernels;  // empty in flow mode
};

class FramePredictor {
 public:
  FramePredictor(PredictorConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.inputs < 2) throw ConfigError("predictor: at least two input frames are required");
    if (cfg.kernel_size % 2 == 0) throw ConfigError("predictor: kernel size must be odd");
    const std::size_t f = cfg.features;
    enc1_ = nn::Conv2d(cfg.inputs + 2, f, 3, rng);
    enc2_ = nn::Conv2d(f, f, 3, rng);
    fuse_ = nn::Conv2d(2 * f, f, 3, rng);
    motion_ = nn::Conv2d(f, 2, 3, rng);
    k_h_ = nn::Conv2d(f, cfg.kernel_size, 1, rng);
    k_v_ = nn::Conv2d(f, cfg.kernel_size, 1, rng);
  }

  /// frames: the last `inputs` frames [h, w], oldest first; flow: backward flow into the newest.
  Tensor features(const std::vector<Tensor>& frames, const warp::MotionField& flow) const {
    if (frames.size() != cfg_.inputs) {
      throw ShapeError("predictor: expected " + std::to_string(cfg_.inputs) + " frames, got " +
                       std::to_string(frames.size()));
    }
    const std::size_t h = frames[0].dim(0), w = frames[0].dim(1);
    if (h % 2 || w % 2) throw ShapeError("predictor: frame size must be even");
    std::vector<Tensor> planes;
    for (const auto& f : frames) planes.push_back(reshape(f, {1, h, w}));
    planes.push_back(reshape(flow.u, {1, h, w}));
    planes.push_back(reshape(flow.v, {1, h, w}));
    const Tensor x = concat(planes, 0);
    const Tensor a = leaky_relu(enc1_(x));
    const Tensor b = nn::bilinear_up(leaky_relu(enc2_(nn::avg_pool(a, 2))), 2);
    return leaky_relu(fuse_(concat({a, b}, 0)));
  }

  warp::MotionField motion(const Tensor& feat) const {
    const Tensor m = motion_(feat);
    const std::size_t h = feat.dim(1), w = feat.dim(2);
    return {reshape(slice(m, 0, 0, 1), {h, w}), reshape(slice(m, 0, 1, 2), {h, w})};
  }

  /// Kernel heads read per-channel standardized features.
  warp::SeparableKernelField kernels(const Tensor& feat) const {
    const std::size_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2), n = cfg_.kernel_size;
    nn::NormParams plain;
    plain.gamma = Tensor::ones({c});
    plain.beta = Tensor::zeros({c});
    const Tensor z = reshape(nn::instance_norm(reshape(feat, {1, c, h, w}), plain), {c, h, w});
    auto arrange = [&](const Tensor& k) { return reshape(transpose(reshape(k, {n, h * w})), {h, w, n}); };
    return {arrange(k_h_(z)), arrange(k_v_(z))};
  }

  Prediction predict(const std::vector<Tensor>& frames, const warp::MotionField& flow, bool use_kernels) const {
    const Tensor feat = features(frames, flow);
    Prediction p;
    p.motion = motion(feat);
    const std::size_t h = feat.dim(1), w = feat.dim(2);
    if (use_kernels) {
      p.kernels = kernels(feat);
      p.frame = warp::sdc(frames.back(), p.motion, *p.kernels);
    } else {
      p.frame = warp::sdc(frames.back(), p.motion, warp::identity_kernels(h, w, cfg_.kernel_size));
    }
    return p;
  }

  std::vector<Tensor> encoder_parameters() const { return join({&enc1_, &enc2_, &fuse_}); }
  std::vector<Tensor> motion_parameters() const { return join({&motion_}); }
  std::vector<Tensor> kernel_parameters() const { return join({&k_h_, &k_v_}); }
  std::vector<Tensor> parameters() const { return join({&enc1_, &enc2_, &fuse_, &motion_, &k_h_, &k_v_}); }

  /// Parameters updated by a stage.
  std::vector<Tensor> trainable(SdcStage stage) const {
    switch (stage) {
      case SdcStage::flow: {
        auto p = encoder_parameters();
        for (const auto& t : motion_parameters()) p.push_back(t);
        return p;
      }
      case SdcStage::kernel_init: return kernel_parameters();
      case SdcStage::fine_tune:
      case SdcStage::multi: return parameters();
    }
    return {};
  }

  const PredictorConfig& config() const { return cfg_; }

 private:
  static std::vector<Tensor> join(std::initializer_list<const nn::Conv2d*> layers) {
    std::vector<Tensor> p;
    for (const auto* l : layers) {
      p.push_back(l->kernel);
      p.push_back(l->bias);
    }
    return p;
  }

  PredictorConfig cfg_;
  nn::Conv2d enc1_, enc2_, fuse_, motion_, k_h_, k_v_;
};

/// Scores a window of consecutive frames [t, h, w] with one logit.
class SequenceDiscriminator {
 public:
  SequenceDiscriminator(std::size_t frames, std::size_t h, std::size_t w, Rng& rng)
      : conv_(frames, 8, 3, rng), head_(8 * (h / 4) * (w / 4), 1, rng) {
    if (h % 4 || w % 4) throw ShapeError("sequence discriminator: frame size must be divisible by 4");
  }

  Tensor operator()(const std::vector<Tensor>& frames) const {
    std::vector<Tensor> planes;
    const std::size_t h = frames[0].dim(0), w = frames[0].dim(1);
    for (const auto& f : frames) planes.push_back(reshape(f, {1, h, w}));
    const Tensor a = nn::avg_pool(leaky_relu(conv_(concat(planes, 0))), 4);
    return reshape(head_(reshape(a, {1, a.size()})), {1});
  }

  std::vector<Tensor> parameters() const { return {conv_.kernel, conv_.bias, head_.weight, head_.bias}; }

 private:
  nn::Conv2d conv_;
  nn::Linear head_;
};

// ------------------------------------------------------------- training

struct FrameTrainConfig {
  SequenceConfig data;                    // training sequences
  std::size_t validation_count = 8;       // held-out sequences, same generator settings
  PredictorConfig predictor;
  std::vector<SdcStage> stages{SdcStage::flow, SdcStage::kernel_init, SdcStage::fine_tune, SdcStage::multi};
  std::size_t epochs_flow = 20;
  std::size_t epochs_kernel = 20;
  std::size_t epochs_fine = 20;
  std::size_t epochs_multi = 5;
  std::size_t batch = 4;
  optim::OptimizerConfig opt{.kind = optim::OptimizerKind::adam, .lr = 3e-3};
  optim::OptimizerConfig opt_kernel{.kind = optim::OptimizerKind::sgd, .lr = 0.1};
  optim::OptimizerConfig opt_disc{.kind = optim::OptimizerKind::adam, .lr = 1e-3, .beta1 = 0.5};
  double robust_alpha = 1.0;
  double robust_c = 0.1;
  losses::StageLambdas lambdas;
  std::size_t multi_frames = 3;  // autoregressive steps in the multi stage
  bool adversarial = true;
  bool weight_map = false;  // growth weight map from ground-truth masks
  std::size_t weight_radius = 2;
  std::size_t rollout = 5;  // frames in the validation rollout
  std::uint64_t seed = 0;

  std::size_t epochs(SdcStage s) const {
    switch (s) {
      case SdcStage::flow: return epochs_flow;
      case SdcStage::kernel_init: return epochs_kernel;
      case SdcStage::fine_tune: return epochs_fine;
      case SdcStage::multi: return epochs_multi;
    }
    return 0;
  }

  void validate() const {
    data.validate();
    if (data.frames < predictor.inputs + 1) throw ConfigError("framesim: sequences are shorter than inputs + 1");
    if (data.frames < predictor.inputs + multi_frames) {
      throw ConfigError("framesim: sequences are shorter than inputs + multi_frames");
    }
    if (data.frames < predictor.inputs + rollout) throw ConfigError("framesim: sequences are shorter than inputs + rollout");
    if (data.h % 4 || data.w % 4) throw ConfigError("framesim: h and w must be divisible by 4");
    if (batch < 1) throw ConfigError("framesim: batch must be >= 1");
    if (stages.empty()) throw ConfigError("framesim: no stages selected");
    for (std::size_t i = 1; i < stages.size(); ++i) {
      if (int(stages[i]) <= int(stages[i - 1])) {
        throw ConfigError(std::string("framesim: stage ordering violation, ") + stage_name(stages[i]) +
                          " cannot follow " + stage_name(stages[i - 1]));
      }
    }
  }
};

struct StageCurve {
  SdcStage stage;
  std::vector<double> loss;  // one value per optimizer step
};

struct FrameValidation {
  double flow_median_error = 0.0;  // px, median over held-out sequences
  double kernel_loss = 0.0;        // kernel_init_loss of the heads
  double one_frame_mse = 0.0;
  double baseline_mse = 0.0;  // copy-last-frame
  metrics::ImageMetrics one_frame;  // averaged over held-out sequences
  std::vector<double> rollout_mse;  // per autoregressive step
};

struct StageValidation {
  SdcStage stage;
  FrameValidation metrics;
};

struct FrameTrainReport {
  std::vector<StageCurve> curves;
  std::vector<StageValidation> validation;  // after each executed stage
  double wall_seconds = 0.0;
  std::string snapshot_id;
};

namespace frame_detail {

/// A training window: frames [t - inputs + 1, t] predict frame t + 1.
struct Window {
  std::size_t seq = 0;
  std::size_t t = 0;
};

inline warp::MotionField true_flow(const SyntheticSequence& s, std::size_t h, std::size_t w) {
  return warp::MotionField::uniform(h, w, -s.dx, -s.dy);
}

inline std::vector<Tensor> history(const SyntheticSequence& s, std::size_t t, std::size_t inputs) {
  return {s.frames.begin() + long(t + 1 - inputs), s.frames.begin() + long(t + 1)};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / double(a.size());
}

}  // namespace frame_detail

/// Autoregressive rollout: each prediction joins the history and its motion
/// becomes the flow input of the next step.
inline std::vector<Prediction> rollout(const FramePredictor& net, const SyntheticSequence& s, std::size_t t,
                                       std::size_t steps, bool use_kernels) {
  const std::size_t h = s.frames[0].dim(0), w = s.frames[0].dim(1);
  auto hist = frame_detail::history(s, t, net.config().inputs);
  warp::MotionField flow = frame_detail::true_flow(s, h, w);
  std::vector<Prediction> out;
  for (std::size_t k = 0; k < steps; ++k) {
    out.push_back(net.predict(hist, flow, use_kernels));
    hist.erase(hist.begin());
    hist.push_back(out.back().frame);
    flow = out.back().motion;
  }
  return out;
}

/// Loss of one window under a stage; multi-stage windows roll out
/// `multi_frames` steps. `disc_logit` receives the sequence score input.
inline Tensor frame_stage_loss(const FramePredictor& net, SdcStage stage, const SyntheticSequence& s, std::size_t t,
                               const FrameTrainConfig& cfg, const SequenceDiscriminator* disc = nullptr,
                               std::vector<Tensor>* fake_window = nullptr) {
  const std::size_t h = s.frames[0].dim(0), w = s.frames[0].dim(1), inputs = net.config().inputs;
  losses::RobustLossParams robust;
  robust.alpha = cfg.robust_alpha;
  robust.c = cfg.robust_c;
  losses::StageInputs in;
  auto weights_for = [&](std::size_t target) -> std::optional<losses::WeightMap> {
    if (!cfg.weight_map) return std::nullopt;
    return losses::build_weight_map(s.masks[target - 1], s.masks[target], cfg.weight_radius);
  };
  switch (stage) {
    case SdcStage::flow:
    case SdcStage::fine_tune: {
      const auto p = net.predict(frame_detail::history(s, t, inputs), frame_detail::true_flow(s, h, w),
                                 stage == SdcStage::fine_tune);
      in.predicted = {p.frame};
      in.target = {s.frames[t + 1]};
      in.weights = weights_for(t + 1);
      break;
    }
    case SdcStage::kernel_init:
      in.kernels = net.kernels(
          net.features(frame_detail::history(s, t, inputs), frame_detail::true_flow(s, h, w)).detach());
      break;
    case SdcStage::multi: {
      const auto preds = rollout(net, s, t, cfg.multi_frames, true);
      std::vector<Tensor> window = frame_detail::history(s, t, inputs);
      for (std::size_t k = 0; k < preds.size(); ++k) {
        in.predicted.push_back(preds[k].frame);
        in.target.push_back(s.frames[t + 1 + k]);
        window.push_back(preds[k].frame);
      }
      in.weights = weights_for(t + 1);
      if (disc) {
        in.adv_logits = (*disc)(window);
        if (fake_window) *fake_window = window;
      } else {
        Tensor recon = Tensor::scalar(0.0);
        for (std::size_t k = 0; k < preds.size(); ++k)
          recon = add(recon, losses::robust_frame_loss(in.predicted[k], in.target[k], robust, in.weights));
        return mul_scalar(recon, cfg.lambdas.g / double(preds.size()));
      }
      break;
    }
  }
  return losses::sdc_stage_loss(stage, in, cfg.lambdas, robust);
}

inline FrameValidation validate_predictor(const FramePredictor& net, const std::vector<SyntheticSequence>& held_out,
                                          const FrameTrainConfig& cfg, bool use_kernels) {
  using frame_detail::median;
  using frame_detail::mse;
  const std::size_t inputs = net.config().inputs, t = inputs - 1;
  FrameValidation v;
  v.rollout_mse.assign(cfg.rollout, 0.0);
  std::vector<double> flow_err;
  const double n = double(held_out.size());
  for (const auto& s : held_out) {
    const std::size_t h = s.frames[0].dim(0), w = s.frames[0].dim(1);
    const Tensor feat = net.features(frame_detail::history(s, t, inputs), frame_detail::true_flow(s, h, w));
    const auto m = net.motion(feat);
    std::vector<double> u(m.u.values().begin(), m.u.values().end()), vv(m.v.values().begin(), m.v.values().end());
    flow_err.push_back(std::hypot(median(u) + s.dx, median(vv) + s.dy));
    v.kernel_loss += losses::kernel_init_loss(net.kernels(feat)).item() / n;
    const auto preds = rollout(net, s, t, cfg.rollout, use_kernels);
    const Tensor& target = s.frames[t + 1];
    v.one_frame_mse += mse(preds[0].frame, target) / n;
    v.baseline_mse += mse(s.frames[t], target) / n;
    const auto im = metrics::image_metrics(preds[0].frame, target);
    v.one_frame.l1 += im.l1 / n;
    v.one_frame.mse += im.mse / n;
    v.one_frame.psnr += im.psnr / n;
    v.one_frame.ssim += im.ssim / n;
    for (std::size_t k = 0; k < cfg.rollout; ++k) v.rollout_mse[k] += mse(preds[k].frame, s.frames[t + 1 + k]) / n;
  }
  v.flow_median_error = median(flow_err);
  return v;
}

struct FrameRun {
  FrameTrainReport report;
  FramePredictor predictor;
  std::vector<SyntheticSequence> validation_sequences;
};

inline FrameRun train_frame_predictor(const FrameTrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  Rng root(cfg.seed);
  Rng data_rng = root.split(1), val_rng = root.split(2), init_rng = root.split(3), order_rng = root.split(4);
  const auto train = make_synthetic_sequences(cfg.data, data_rng);
  SequenceConfig val_cfg = cfg.data;
  val_cfg.count = cfg.validation_count;
  const auto held_out = make_synthetic_sequences(val_cfg, val_rng);
  FramePredictor net(cfg.predictor, init_rng);
  const std::size_t inputs = cfg.predictor.inputs;
  std::optional<SequenceDiscriminator> disc;
  if (cfg.adversarial) disc.emplace(inputs + cfg.multi_frames, cfg.data.h, cfg.data.w, init_rng);

  FrameTrainReport report;
  bool kernels_active = false;
  for (SdcStage stage : cfg.stages) {
    const std::size_t horizon = stage == SdcStage::multi ? cfg.multi_frames : 1;
    std::vector<frame_detail::Window> windows;
    for (std::size_t q = 0; q < train.size(); ++q)
      for (std::size_t t = inputs - 1; t + horizon < cfg.data.frames; ++t) windows.push_back({q, t});
    optim::Optimizer opt(net.trainable(stage), stage == SdcStage::kernel_init ? cfg.opt_kernel : cfg.opt);
    std::optional<optim::Optimizer> opt_d;
    if (stage == SdcStage::multi && disc) opt_d.emplace(disc->parameters(), cfg.opt_disc);
    StageCurve curve{stage, {}};
    for (std::size_t epoch = 0; epoch < cfg.epochs(stage); ++epoch) {
      for (std::size_t i = windows.size(); i > 1; --i) std::swap(windows[i - 1], windows[order_rng.below(i)]);
      for (std::size_t b0 = 0; b0 < windows.size(); b0 += cfg.batch) {
        const std::size_t b1 = std::min(windows.size(), b0 + cfg.batch);
        try {
          Tensor loss = Tensor::scalar(0.0);
          std::vector<std::vector<Tensor>> fakes;
          for (std::size_t k = b0; k < b1; ++k) {
            std::vector<Tensor> fake;
            loss = add(loss, frame_stage_loss(net, stage, train[windows[k].seq], windows[k].t, cfg,
                                              opt_d ? &*disc : nullptr, &fake));
            if (opt_d) fakes.push_back(std::move(fake));
          }
          loss = mul_scalar(loss, 1.0 / double(b1 - b0));
          opt.zero_grad();
          if (opt_d) opt_d->zero_grad();
          loss.backward();
          opt.step();
          curve.loss.push_back(loss.item());
          if (opt_d) {
            Tensor ld = Tensor::scalar(0.0);
            for (std::size_t k = b0; k < b1; ++k) {
              const auto& s = train[windows[k].seq];
              const std::size_t t = windows[k].t;
              std::vector<Tensor> real(s.frames.begin() + long(t + 1 - inputs),
                                       s.frames.begin() + long(t + 1 + cfg.multi_frames));
              std::vector<Tensor> fake;
              for (const auto& f : fakes[k - b0]) fake.push_back(f.detach());
              ld = add(ld, losses::gan_losses_from_logits((*disc)(real), (*disc)(fake), losses::GanVariant::minimax).d);
            }
            opt_d->zero_grad();
            mul_scalar(ld, 1.0 / double(b1 - b0)).backward();
            opt_d->step();
          }
        } catch (const NumericError& e) {
          throw NumericError(std::string("train_frame_predictor: non-finite value in stage ") + stage_name(stage) +
                             " at step " + std::to_string(curve.loss.size()) + ": " + e.what());
        }
      }
    }
    if (stage != SdcStage::flow) kernels_active = true;
    report.curves.push_back(std::move(curve));
    report.validation.push_back({stage, validate_predictor(net, held_out, cfg, kernels_active)});
  }
  report.snapshot_id = snapshot_id(cfg.seed, net.parameters());
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(report), std::move(net), held_out};
}

}  // namespace microsim::lab
