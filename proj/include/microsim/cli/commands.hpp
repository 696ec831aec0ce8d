#pragma once

// Command bodies behind the `microsim` executable. Each writes its artifacts
// under one output directory and reports on the given stream; file contents
// depend only on the resolved configuration.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "microsim/cli/config.hpp"
#include "microsim/lab/discrete_gan.hpp"
#include "microsim/lab/report_io.hpp"
#include "microsim/lab/snapshot.hpp"
#include "microsim/lab/sweep.hpp"
#include "microsim/metrics/array_io.hpp"
#include "microsim/metrics/metrics.hpp"

namespace microsim::cli {

namespace fs = std::filesystem;

/// `--out` wins; otherwise $MICROSIM_OUT (or ./runs) joined with the experiment name.
inline fs::path output_dir(const std::optional<std::string>& out, const std::string& experiment) {
  if (out && !out->empty()) return *out;
  const char* root = std::getenv("MICROSIM_OUT");
  return fs::path(root && *root ? root : "runs") / experiment;
}

/// Fixed-width display formatting for terminal tables.
inline std::string display(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = config_detail::trim(item);
    if (!item.empty()) seeds.push_back(config_detail::parse_number<std::uint64_t>("seeds", item));
  }
  if (seeds.empty()) throw ConfigError("--seeds: no seeds given");
  return seeds;
}

// ------------------------------------------------------------ gan2d

/// Runs one configuration; returns the summary line.
inline std::string run_gan2d(const RunConfig& rc, const fs::path& dir) {
  const auto cfg = gan_config_from(rc);
  fs::create_directories(dir);
  lab::write_text(dir / "config.txt", rc.resolved());
  const std::size_t size = rc.count("scatter_size");
  const double extent = 1.5 * std::max(1.0, cfg.data.radius + 4.0 * cfg.data.std);
  Rng viz = Rng(cfg.seed).split(99);
  const Tensor real = lab::make_ring_dataset(cfg.data, viz).draw(cfg.coverage_samples);
  auto dump = [&](const std::string& name, const Tensor& fake) {
    lab::write_pgm(dir / name, lab::scatter_raster(real, fake, size, extent));
  };
  const auto run = lab::train_gan_2d(cfg, [&](std::size_t step, const Tensor& samples) {
    char name[48];
    std::snprintf(name, sizeof name, "scatter_step%07zu.pgm", step);
    dump(name, samples);
  });
  lab::write_gan_curves(dir / "curves.csv", run.report);
  dump("scatter_final.pgm", run.final_samples);
  metrics::write_csv((dir / "final_samples.csv").string(), run.final_samples, {"x", "y"});
  auto params = run.generator.parameters();
  for (const auto& p : run.discriminator.parameters()) params.push_back(p);
  lab::write_snapshot(dir / "snapshot.bin", cfg.seed, params);
  const std::string summary = "final_coverage=" + std::to_string(run.report.final_coverage) + "/" +
                              std::to_string(cfg.data.n_modes) + " steps=" + std::to_string(cfg.steps) +
                              " seed=" + std::to_string(cfg.seed) + " snapshot=" + run.report.snapshot_id;
  lab::write_text(dir / "summary.txt", summary + "\n");
  char wall[32];
  std::snprintf(wall, sizeof wall, " wall=%.2fs", run.report.wall_seconds);
  return "gan2d " + summary + wall;
}

// ------------------------------------------------------------ framesim

inline std::string run_framesim(const RunConfig& rc, const fs::path& dir) {
  const auto cfg = frame_config_from(rc);
  fs::create_directories(dir);
  lab::write_text(dir / "config.txt", rc.resolved());
  const auto run = lab::train_frame_predictor(cfg);
  lab::write_stage_curves(dir / "stages.csv", run.report);
  lab::write_stage_validation(dir / "validation.csv", run.report);
  lab::write_snapshot(dir / "snapshot.bin", cfg.seed, run.predictor.parameters());

  bool kernels = false;
  for (auto s : cfg.stages) kernels = kernels || s != losses::SdcStage::flow;
  const std::size_t t = cfg.predictor.inputs - 1;
  const auto& first = run.validation_sequences.front();
  lab::write_motion_csv(dir / "motion.csv", lab::rollout(run.predictor, first, t, 1, kernels).front().motion);
  const std::size_t dumps = std::min(rc.count("dump_sequences"), run.validation_sequences.size());
  for (std::size_t q = 0; q < dumps; ++q) {
    const auto& s = run.validation_sequences[q];
    const auto preds = lab::rollout(run.predictor, s, t, cfg.rollout, kernels);
    const std::string tag = "seq" + std::to_string(q);
    for (std::size_t k = 0; k < s.frames.size(); ++k)
      lab::write_pgm(dir / "frames" / (tag + "_true_t" + std::to_string(k) + ".pgm"), s.frames[k]);
    for (std::size_t k = 0; k < preds.size(); ++k)
      lab::write_pgm(dir / "frames" / (tag + "_pred_t" + std::to_string(t + 1 + k) + ".pgm"), preds[k].frame);
  }

  std::string summary = "seed=" + std::to_string(cfg.seed) + " snapshot=" + run.report.snapshot_id;
  for (const auto& sv : run.report.validation) {
    const auto& v = sv.metrics;
    summary += std::string("\n  ") + lab::stage_name(sv.stage) + ": flow_error=" + display(v.flow_median_error) +
               "px kernel_loss=" + display(v.kernel_loss) + " mse=" + display(v.one_frame_mse) +
               " baseline_mse=" + display(v.baseline_mse) + " rollout_mse_last=" +
               display(v.rollout_mse.empty() ? 0.0 : v.rollout_mse.back());
  }
  lab::write_text(dir / "summary.txt", summary + "\n");
  char wall[32];
  std::snprintf(wall, sizeof wall, " wall=%.2fs", run.report.wall_seconds);
  return "framesim " + summary + wall;
}

// ------------------------------------------------------------ sweeps

using Runner = std::string (*)(const RunConfig&, const fs::path&);

/// One run per seed in `dir/seed_<s>`; summaries come back in seed order.
inline std::vector<std::string> run_sweep(Runner runner, const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                          const fs::path& dir, std::size_t jobs) {
  std::vector<std::function<std::string()>> tasks;
  for (std::uint64_t seed : seeds) {
    RunConfig rc = base;
    rc.set("seed", std::to_string(seed));
    tasks.push_back([runner, rc, sub = dir / ("seed_" + std::to_string(seed))] { return runner(rc, sub); });
  }
  return lab::run_parallel(tasks, jobs);
}

// ------------------------------------------------------------ metrics

/// `.pgm` files are graymaps; anything else is a numeric table.
inline Tensor load_image(const std::string& path) {
  if (fs::path(path).extension() == ".pgm") return lab::read_pgm(path);
  return metrics::load_table(path);
}

inline std::vector<double> load_vector(const std::string& path) {
  const Tensor t = metrics::load_table(path);
  return {t.values().begin(), t.values().end()};
}

/// Stats table: row 0 is mu, rows 1..d are sigma.
inline metrics::FeatureStats load_stats(const std::string& path) {
  const Eigen::MatrixXd m = metrics::to_matrix(metrics::load_table(path));
  if (m.rows() != m.cols() + 1) {
    throw ConfigError(path + ": stats table must have d + 1 rows of d values (mu, then sigma)");
  }
  return {m.row(0).transpose(), m.bottomRows(m.cols())};
}

struct MetricsRequest {
  std::optional<std::pair<std::string, std::string>> emd;
  std::optional<std::pair<std::string, std::string>> images;  // prediction, target
  std::optional<std::pair<std::string, std::string>> fid;     // feature tables [n, d]
  std::optional<std::pair<std::string, std::string>> fid_stats;
  std::optional<std::string> inception;  // class probabilities [n, k]
  metrics::IntensityRange range;
};

inline void run_metrics(const MetricsRequest& req, std::ostream& out) {
  if (!req.emd && !req.images && !req.fid && !req.fid_stats && !req.inception) {
    throw ConfigError("metrics: nothing to compute (use --emd, --images, --fid, --fid-stats or --is)");
  }
  out << "metric value\n";
  if (req.images) {
    const auto m = metrics::image_metrics(load_image(req.images->first), load_image(req.images->second), req.range);
    out << "l1 " << display(m.l1) << "\nmse " << display(m.mse) << "\npsnr " << display(m.psnr) << "\nssim "
        << display(m.ssim) << "\n";
  }
  if (req.emd) {
    out << "emd " << display(metrics::discrete_emd(load_vector(req.emd->first), load_vector(req.emd->second))) << "\n";
  }
  if (req.fid) {
    const auto a = metrics::feature_stats(metrics::to_matrix(metrics::load_table(req.fid->first)));
    const auto b = metrics::feature_stats(metrics::to_matrix(metrics::load_table(req.fid->second)));
    out << "fid " << display(metrics::frechet_distance(a, b)) << "\n";
  }
  if (req.fid_stats) {
    out << "fid " << display(metrics::frechet_distance(load_stats(req.fid_stats->first), load_stats(req.fid_stats->second)))
        << "\n";
  }
  if (req.inception) {
    out << "is " << display(metrics::inception_style_score(metrics::to_matrix(metrics::load_table(*req.inception))))
        << "\n";
  }
}

// ------------------------------------------------------------ analyze

inline losses::DiscreteDistribution load_distribution(const std::string& path) {
  auto p = load_vector(path);
  std::vector<double> support(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) support[i] = double(i);
  try {
    return {std::move(support), std::move(p)};
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Returns false when the grid check disagrees with the closed form.
inline bool run_analyze(const std::string& p_data_path, const std::string& p_g_path, bool verify, double resolution,
                        std::ostream& out) {
  const auto pd = load_distribution(p_data_path), pg = load_distribution(p_g_path);
  if (pd.size() != pg.size()) {
    throw ConfigError("analyze: " + std::to_string(pd.size()) + " atoms in " + p_data_path + " vs " +
                      std::to_string(pg.size()) + " in " + p_g_path);
  }
  const auto a = lab::analyze_discrete_gan(pd, pg);
  out << "atom p_data p_g d_star\n";
  for (std::size_t i = 0; i < pd.size(); ++i)
    out << i << ' ' << display(pd.probs[i]) << ' ' << display(pg.probs[i]) << ' ' << display(a.d_star[i]) << "\n";
  char line[64];
  std::snprintf(line, sizeof line, "C(G) = %.6f\n", a.c_of_g);
  out << line;
  if (!verify) return true;
  const auto g = lab::verify_by_grid(pd, pg, resolution);
  out << "grid_max_deviation " << display(g.max_deviation) << " resolution " << display(g.resolution) << " "
      << (g.consistent ? "consistent" : "INCONSISTENT") << "\n";
  return g.consistent;
}

}  // namespace microsim::cli
