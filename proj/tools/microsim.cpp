// microsim: command-line front end for the lab experiments and metrics.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "microsim/cli/commands.hpp"

namespace {

using namespace microsim;
using namespace microsim::cli;

struct ExperimentArgs {
  std::optional<std::string> config_file;
  std::optional<std::string> out;
  std::optional<std::string> seeds;
  std::size_t jobs = 1;
  std::map<std::string, std::string> overrides;
};

/// Adds --config, --out, --seeds, --jobs and one --<key> option per registry key.
CLI::App* add_experiment(CLI::App& app, const std::string& name, const std::string& description,
                         const std::vector<KeyDoc>& keys, ExperimentArgs& args) {
  auto* sub = app.add_subcommand(name, description);
  sub->set_help_flag("--help", "print this help and every config key");
  sub->add_option("--config", args.config_file, "key = value file applied before flag overrides");
  sub->add_option("--out", args.out, "output directory (default $MICROSIM_OUT/" + name + " or runs/" + name + ")");
  sub->add_option("--seeds", args.seeds, "comma-separated seed sweep; runs land in <out>/seed_<s>");
  sub->add_option("--jobs", args.jobs, "parallel workers for a seed sweep")->check(CLI::PositiveNumber);
  for (const auto& k : keys) {
    sub->add_option_function<std::string>(
           "--" + k.key, [&args, key = k.key](const std::string& v) { args.overrides[key] = v; },
           k.doc + " [default: " + k.default_value + "]")
        ->group("Config keys");
  }
  return sub;
}

int run_experiment(const std::string& name, std::vector<KeyDoc> keys, const ExperimentArgs& args, Runner runner) {
  RunConfig rc(name, std::move(keys));
  if (args.config_file) rc.load_file(*args.config_file);
  for (const auto& [k, v] : args.overrides) rc.set(k, v);
  const auto dir = output_dir(args.out, name);
  if (args.seeds) {
    for (const auto& line : run_sweep(runner, rc, parse_seed_list(*args.seeds), dir, args.jobs))
      std::cout << line << "\n";
  } else {
    std::cout << runner(rc, dir) << "\n";
  }
  std::cout << "outputs: " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microsim: GAN toy experiments, frame-prediction training and evaluation metrics"};
  app.require_subcommand(1);

  ExperimentArgs gan_args, frame_args;
  auto* gan = add_experiment(app, "gan2d", "train a GAN on the 8-Gaussian ring", gan2d_keys(), gan_args);
  auto* frame =
      add_experiment(app, "framesim", "train the staged frame predictor on synthetic sequences", framesim_keys(), frame_args);

  MetricsRequest req;
  std::vector<std::string> emd, images, fid, fid_stats;
  std::optional<std::string> inception;
  std::vector<double> range;
  auto* met = app.add_subcommand("metrics", "evaluate metrics on files (.csv tables, MSIMARR1 arrays, .pgm images)");
  met->add_option("--emd", emd, "discrete EMD between two histograms P Q")->expected(2);
  met->add_option("--images", images, "image metrics of PRED against TARGET")->expected(2);
  met->add_option("--fid", fid, "Frechet distance between two feature tables [n, d]")->expected(2);
  met->add_option("--fid-stats", fid_stats, "Frechet distance between stats tables (row 0 mu, rows 1..d sigma)")
      ->expected(2);
  met->add_option("--is", inception, "inception-style score of a class-probability table [n, k]");
  met->add_option("--range", range, "intensity range LO HI for PSNR and SSIM [default: 0 1]")->expected(2);

  std::string p_data, p_g;
  bool verify = false;
  double resolution = 1e-3;
  auto* ana = app.add_subcommand("analyze", "optimal discriminator and C(G) for two discrete distributions");
  ana->add_option("p_data", p_data, "data distribution table")->required();
  ana->add_option("p_g", p_g, "generator distribution table")->required();
  ana->add_flag("--verify", verify, "confirm the maximizer by grid search");
  ana->add_option("--resolution", resolution, "grid resolution for --verify");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gan) return run_experiment("gan2d", gan2d_keys(), gan_args, run_gan2d);
    if (*frame) return run_experiment("framesim", framesim_keys(), frame_args, run_framesim);
    if (*met) {
      auto pair = [](const std::vector<std::string>& v) -> std::optional<std::pair<std::string, std::string>> {
        if (v.empty()) return std::nullopt;
        return std::pair{v[0], v[1]};
      };
      req.emd = pair(emd);
      req.images = pair(images);
      req.fid = pair(fid);
      req.fid_stats = pair(fid_stats);
      req.inception = inception;
      if (!range.empty()) req.range = {range[0], range[1]};
      run_metrics(req, std::cout);
      return 0;
    }
    if (*ana) return run_analyze(p_data, p_g, verify, resolution, std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
