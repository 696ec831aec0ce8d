#pragma once

// Run configuration: a fixed, documented key set per experiment. Values are
// kept as the strings the user supplied so the resolved echo replays exactly.
//
// File syntax: one `key = value` per line; `#` starts a comment; blank lines
// are ignored. Unknown keys and repeated keys within one file are errors.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "microsim/lab/frame_predictor.hpp"
#include "microsim/lab/ring_gan.hpp"
#include "microsim/numeric/error.hpp"

namespace microsim::cli {

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string doc;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || text.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return v;
}

}  // namespace config_detail

class RunConfig {
 public:
  RunConfig(std::string experiment, std::vector<KeyDoc> keys) : experiment_(std::move(experiment)), keys_(std::move(keys)) {
    for (const auto& k : keys_) values_[k.key] = k.default_value;
  }

  const std::string& experiment() const { return experiment_; }
  const std::vector<KeyDoc>& keys() const { return keys_; }
  bool has_key(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown " + experiment_ + " config key '" + key + "'");
    it->second = value;
  }

  void load_text(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    std::map<std::string, std::size_t> seen;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
      const auto hash = line.find('#');
      const std::string body = config_detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      const std::string where = source + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = config_detail::trim(body.substr(0, eq)), value = config_detail::trim(body.substr(eq + 1));
      if (key.empty()) throw ConfigError(where + ": empty key");
      if (!has_key(key)) throw ConfigError(where + ": unknown " + experiment_ + " config key '" + key + "'");
      if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
        throw ConfigError(where + ": key '" + key + "' already set on line " + std::to_string(it->second));
      }
      set(key, value);
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    load_text(ss.str(), path.string());
  }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown " + experiment_ + " config key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const { return config_detail::parse_number<double>(key, text(key)); }
  std::size_t count(const std::string& key) const { return config_detail::parse_number<std::size_t>(key, text(key)); }
  std::uint64_t u64(const std::string& key) const { return config_detail::parse_number<std::uint64_t>(key, text(key)); }

  bool flag(const std::string& key) const {
    const auto& v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
  }

  /// Every key in registry order; loadable with load_text.
  std::string resolved() const {
    std::string s = "# microsim " + experiment_ + " resolved configuration\n";
    for (const auto& k : keys_) s += k.key + " = " + values_.at(k.key) + "\n";
    return s;
  }

 private:
  std::string experiment_;
  std::vector<KeyDoc> keys_;
  std::map<std::string, std::string> values_;
};

// ------------------------------------------------------------ enum spellings

inline optim::OptimizerKind parse_optimizer(const std::string& key, const std::string& v) {
  if (v == "sgd") return optim::OptimizerKind::sgd;
  if (v == "adam") return optim::OptimizerKind::adam;
  if (v == "adamp") return optim::OptimizerKind::adamp;
  throw ConfigError("config key '" + key + "': unknown optimizer '" + v + "' (sgd, adam, adamp)");
}

inline losses::GanVariant parse_gan_loss(const std::string& v) {
  if (v == "minimax" || v == "standard") return losses::GanVariant::minimax;
  if (v == "non_saturating" || v == "ns") return losses::GanVariant::non_saturating;
  if (v == "wgan" || v == "wasserstein") return losses::GanVariant::wasserstein;
  throw ConfigError("config key 'loss': unknown variant '" + v + "' (minimax, non_saturating, wgan)");
}

inline lab::Activation parse_activation(const std::string& v) {
  using lab::Activation;
  if (v == "identity") return Activation::identity;
  if (v == "relu") return Activation::relu;
  if (v == "leaky_relu") return Activation::leaky_relu;
  if (v == "tanh") return Activation::tanh;
  if (v == "sigmoid") return Activation::sigmoid;
  throw ConfigError("config key 'activation': unknown activation '" + v + "'");
}

inline std::vector<losses::SdcStage> parse_stages(const std::string& v) {
  std::vector<losses::SdcStage> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = config_detail::trim(item);
    if (!item.empty()) out.push_back(lab::parse_stage(item));
  }
  return out;
}

// ------------------------------------------------------------ gan2d

inline std::vector<KeyDoc> gan2d_keys() {
  return {
      {"seed", "0", "root seed; initialization, data, latent and evaluation streams derive from it"},
      {"steps", "10000", "training iterations (discriminator steps then one generator step)"},
      {"batch", "64", "real and generated samples per update"},
      {"n_modes", "8", "Gaussian modes on the ring"},
      {"radius", "1", "ring radius"},
      {"std", "0.05", "per-coordinate standard deviation of each mode"},
      {"latent_dim", "2", "generator input dimension, z ~ U(0,1)^d"},
      {"hidden", "10", "hidden width of both three-layer MLPs"},
      {"activation", "leaky_relu", "hidden activation: identity, relu, leaky_relu, tanh, sigmoid"},
      {"leaky_slope", "0.2", "negative slope of leaky_relu"},
      {"loss", "minimax", "GAN loss: minimax, non_saturating, wgan"},
      {"optimizer", "sgd", "optimizer of both networks: sgd, adam, adamp"},
      {"lr", "0.01", "learning rate of both networks"},
      {"beta1", "0.9", "first-moment decay (adam, adamp)"},
      {"beta2", "0.999", "second-moment decay (adam, adamp)"},
      {"adamp_lambda", "0.1", "adamp projection threshold on -cos(theta, G)"},
      {"weight_decay", "0", "decoupled weight decay"},
      {"d_steps", "1", "discriminator updates per generator update"},
      {"clip", "0", "discriminator weight clip after each of its steps; 0 disables"},
      {"coverage_every", "500", "iterations between coverage evaluations and scatter dumps; 0 disables"},
      {"coverage_samples", "2000", "generated points per coverage evaluation"},
      {"capture_sigmas", "3", "capture radius in units of std"},
      {"min_fraction", "0.02", "sample fraction a mode needs to count as covered"},
      {"scatter_size", "128", "side of the P5 scatter images in pixels"},
  };
}

inline lab::GanTrainConfig gan_config_from(const RunConfig& rc) {
  lab::GanTrainConfig c;
  c.seed = rc.u64("seed");
  c.steps = rc.count("steps");
  c.data.samples_per_draw = rc.count("batch");
  c.data.n_modes = rc.count("n_modes");
  c.data.radius = rc.number("radius");
  c.data.std = rc.number("std");
  const auto act = parse_activation(rc.text("activation"));
  const std::size_t hidden = rc.count("hidden"), zdim = rc.count("latent_dim");
  c.generator = lab::MlpSpec::three_layer(zdim, hidden, 2, act);
  c.discriminator = lab::MlpSpec::three_layer(2, hidden, 1, act);
  c.generator.leaky_slope = c.discriminator.leaky_slope = rc.number("leaky_slope");
  c.loss = parse_gan_loss(rc.text("loss"));
  optim::OptimizerConfig opt;
  opt.kind = parse_optimizer("optimizer", rc.text("optimizer"));
  opt.lr = rc.number("lr");
  opt.beta1 = rc.number("beta1");
  opt.beta2 = rc.number("beta2");
  opt.lambda_thresh = rc.number("adamp_lambda");
  opt.weight_decay = rc.number("weight_decay");
  c.opt_g = c.opt_d = opt;
  c.d_steps = rc.count("d_steps");
  c.clip = rc.number("clip");
  c.coverage_every = rc.count("coverage_every");
  c.coverage_samples = rc.count("coverage_samples");
  c.capture_sigmas = rc.number("capture_sigmas");
  c.min_fraction = rc.number("min_fraction");
  if (rc.count("scatter_size") < 8) throw ConfigError("config key 'scatter_size' must be >= 8");
  c.validate();
  return c;
}

// ------------------------------------------------------------ framesim

inline std::vector<KeyDoc> framesim_keys() {
  return {
      {"seed", "0", "root seed; data, validation, initialization and batch-order streams derive from it"},
      {"kind", "translate", "sequence family: translate, translate_and_grow"},
      {"count", "8", "training sequences"},
      {"validation_count", "8", "held-out sequences"},
      {"h", "32", "frame height (>= 16, divisible by 4)"},
      {"w", "32", "frame width (>= 16, divisible by 4)"},
      {"frames", "8", "frames per sequence"},
      {"integer_motion", "true", "integer per-frame displacement; otherwise multiples of 1/64 px"},
      {"max_speed", "2", "bound on |dx| and |dy| in px/frame"},
      {"size_min", "3", "smallest initial half side or radius"},
      {"size_max", "6", "largest initial half side or radius"},
      {"growth_min", "0.3", "smallest size increment per frame (translate_and_grow)"},
      {"growth_max", "0.8", "largest size increment per frame (translate_and_grow)"},
      {"inputs", "3", "input frames per prediction"},
      {"kernel_size", "7", "separable kernel length N (odd)"},
      {"features", "12", "encoder channels"},
      {"stages", "flow,kernel_init,fine_tune,multi", "comma-separated stages in increasing order"},
      {"epochs_flow", "20", "epochs of the flow stage"},
      {"epochs_kernel", "20", "epochs of the kernel initialization stage"},
      {"epochs_fine", "20", "epochs of the fine-tune stage"},
      {"epochs_multi", "5", "epochs of the multi-frame stage"},
      {"batch", "4", "windows per optimizer step"},
      {"optimizer", "adam", "optimizer of the flow, fine-tune and multi stages: sgd, adam, adamp"},
      {"lr", "0.003", "learning rate of the flow, fine-tune and multi stages"},
      {"kernel_optimizer", "sgd", "optimizer of the kernel initialization stage"},
      {"kernel_lr", "0.1", "learning rate of the kernel initialization stage"},
      {"disc_lr", "0.001", "sequence discriminator learning rate (adam)"},
      {"disc_beta1", "0.5", "sequence discriminator first-moment decay"},
      {"robust_alpha", "1", "shape parameter of the robust reconstruction loss"},
      {"robust_c", "0.1", "scale parameter of the robust reconstruction loss"},
      {"lambda_g", "1", "weight of the reconstruction term"},
      {"lambda_adv", "0.01", "weight of the adversarial term in the multi stage"},
      {"multi_frames", "3", "autoregressive steps per multi-stage window"},
      {"adversarial", "true", "train a sequence discriminator in the multi stage"},
      {"weight_map", "false", "weight reconstruction by a growth map built from ground-truth masks"},
      {"weight_radius", "2", "dilation radius of the growth weight map"},
      {"rollout", "5", "autoregressive frames in validation"},
      {"dump_sequences", "2", "held-out sequences written as P5 frames"},
  };
}

inline lab::FrameTrainConfig frame_config_from(const RunConfig& rc) {
  lab::FrameTrainConfig c;
  c.seed = rc.u64("seed");
  const auto& kind = rc.text("kind");
  if (kind == "translate") {
    c.data.kind = lab::SequenceKind::translate;
  } else if (kind == "translate_and_grow" || kind == "grow") {
    c.data.kind = lab::SequenceKind::translate_and_grow;
  } else {
    throw ConfigError("config key 'kind': unknown sequence kind '" + kind + "' (translate, translate_and_grow)");
  }
  c.data.count = rc.count("count");
  c.validation_count = rc.count("validation_count");
  c.data.h = rc.count("h");
  c.data.w = rc.count("w");
  c.data.frames = rc.count("frames");
  c.data.integer_motion = rc.flag("integer_motion");
  c.data.max_speed = rc.number("max_speed");
  c.data.size_min = rc.number("size_min");
  c.data.size_max = rc.number("size_max");
  c.data.growth_min = rc.number("growth_min");
  c.data.growth_max = rc.number("growth_max");
  c.predictor.inputs = rc.count("inputs");
  c.predictor.kernel_size = rc.count("kernel_size");
  c.predictor.features = rc.count("features");
  c.stages = parse_stages(rc.text("stages"));
  c.epochs_flow = rc.count("epochs_flow");
  c.epochs_kernel = rc.count("epochs_kernel");
  c.epochs_fine = rc.count("epochs_fine");
  c.epochs_multi = rc.count("epochs_multi");
  c.batch = rc.count("batch");
  c.opt.kind = parse_optimizer("optimizer", rc.text("optimizer"));
  c.opt.lr = rc.number("lr");
  c.opt_kernel.kind = parse_optimizer("kernel_optimizer", rc.text("kernel_optimizer"));
  c.opt_kernel.lr = rc.number("kernel_lr");
  c.opt_disc.lr = rc.number("disc_lr");
  c.opt_disc.beta1 = rc.number("disc_beta1");
  c.robust_alpha = rc.number("robust_alpha");
  c.robust_c = rc.number("robust_c");
  c.lambdas.g = rc.number("lambda_g");
  c.lambdas.adv = rc.number("lambda_adv");
  c.multi_frames = rc.count("multi_frames");
  c.adversarial = rc.flag("adversarial");
  c.weight_map = rc.flag("weight_map");
  c.weight_radius = rc.count("weight_radius");
  c.rollout = rc.count("rollout");
  rc.count("dump_sequences");
  c.validate();
  return c;
}

}  // namespace microsim::cli
