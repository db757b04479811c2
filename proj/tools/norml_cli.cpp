#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "norml/harness.hpp"

namespace fs = std::filesystem;
using namespace norml;
using namespace norml::harness;

namespace {

int cmd_train(const std::string& config_path, const std::optional<std::string>& variant,
              const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out, bool quiet) {
  std::string raw;
  auto cfg = load_experiment_config(config_path, &raw);
  if (variant) cfg.variants = {variant_from_string(*variant)};
  if (seed) cfg.seeds = {*seed};
  const fs::path dir = out ? fs::path(*out) : resolve_output_dir(cfg);
  const auto outcome = run(cfg, raw, dir, quiet ? nullptr : &std::cerr);
  for (const auto& r : outcome.runs) {
    std::cout << to_string(r.variant) << " seed " << r.seed << ": ";
    if (r.aborted) {
      std::cout << "aborted (" << r.message << ")\n";
    } else if (r.final_row) {
      std::cout << "pre " << r.final_row->pre_mean << " post " << r.final_row->post_mean << "\n";
    } else {
      std::cout << "done\n";
    }
  }
  std::cout << "artifacts: " << dir.string() << "\n";
  return outcome.exit_code;
}

int cmd_eval(const std::string& checkpoint, int tasks, std::uint64_t seed, const std::optional<int>& rollouts) {
  auto cp = load_checkpoint(checkpoint);
  if (rollouts) cp.rollouts = *rollouts;
  const auto s = evaluate_checkpoint(cp, tasks, seed);
  nlohmann::json j;
  j["variant"] = to_string(cp.variant);
  j["env"] = to_string(cp.env);
  j["tasks"] = tasks;
  j["pre_mean"] = s.pre_mean;
  j["pre_std"] = s.pre_std;
  j["post_mean"] = s.post_mean;
  j["post_std"] = s.post_std;
  j["pre_returns"] = s.pre_returns;
  j["post_returns"] = s.post_returns;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, int samples, std::uint64_t seed, const std::optional<std::string>& variant,
              const std::optional<std::string>& out) {
  auto cfg = load_experiment_config(config_path);
  if (variant) cfg.variants = {variant_from_string(*variant)};
  cfg.sweep.enabled = true;
  cfg.validate();
  const auto result = sweep(cfg, samples, Rng(seed), [](const ExperimentConfig& c) {
    const auto& init = c.train.init;
    try {
      const double score = default_candidate_score(c);
      std::fprintf(stderr, "beta %.3g alpha_init %.3g log_std_init %.3f -> %.4f\n", init.beta, init.alpha_init,
                   init.log_std_init, score);
      return score;
    } catch (const NumericAbort&) {
      std::fprintf(stderr, "beta %.3g alpha_init %.3g log_std_init %.3f -> aborted\n", init.beta, init.alpha_init,
                   init.log_std_init);
      throw;
    }
  });
  const fs::path dir = out ? fs::path(*out) : resolve_output_dir(cfg) / "sweep";
  fs::create_directories(dir);
  write_sweep_csv((dir / "sweep.csv").string(), result);
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    std::printf("%3zu beta %.3g alpha_init %.3g log_std_init %.3f -> %s\n", i, c.beta, c.alpha_init, c.log_std_init,
                c.aborted ? "aborted" : std::to_string(c.score).c_str());
  }
  if (result.best < 0) {
    std::cerr << "sweep: every candidate aborted\n";
    return kExitNumericAbort;
  }
  std::ofstream(dir / "best_config.json") << experiment_config_to_json(result.best_config).dump(2) << "\n";
  std::cout << "best: candidate " << result.best << ", config written to " << (dir / "best_config.json").string()
            << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& runs, const std::string& out, const std::string& title) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  const auto series = load_run_series(dirs);
  if (series.empty()) throw ContractError("plot: no curves.csv found under the given directories");
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + out + "'");
  f << render_svg(series, title, "post-adaptation mean return");
  return 0;
}

int cmd_advantage_grid(const std::string& checkpoint, const std::string& out, int angles, double phi_deg) {
  const auto cp = load_checkpoint(checkpoint);
  if (cp.env != EnvKind::PointShaped && cp.env != EnvKind::PointSparse) {
    throw ContractError("advantage-grid: checkpoint is not a point-agent run");
  }
  const auto rows = emit_advantage_grid(cp.params.psi, PointTask{phi_deg * std::acos(-1.0) / 180.0}, angles);
  write_advantage_grid_csv(out, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-RL experiments with learned advantages and parameter offsets"};
  app.require_subcommand(1);

  std::string config, checkpoint, out, title = "learning curves";
  std::optional<std::string> variant, out_opt;
  std::optional<std::uint64_t> seed_opt;
  std::optional<int> rollouts;
  std::uint64_t seed = 0;
  int tasks = 20, samples = 1, angles = 360;
  double phi = 0.0;
  bool quiet = false;
  std::vector<std::string> runs;

  auto* train = app.add_subcommand("train", "Train every configured variant and seed");
  train->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--variant", variant, "Override the variants list with one variant");
  train->add_option("--seed", seed_opt, "Override the seeds list with one seed");
  train->add_option("--out", out_opt, "Output directory (default: $NORML_OUTPUT_ROOT/<output_dir>)");
  train->add_flag("--quiet", quiet, "No per-iteration log on stderr");

  auto* eval = app.add_subcommand("eval", "Held-out evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", tasks, "Number of held-out tasks")->check(CLI::NonNegativeNumber);
  eval->add_option("--seed", seed, "Evaluation seed");
  eval->add_option("--rollouts", rollouts, "Meta rollouts per task (default: as trained)");

  auto* sw = app.add_subcommand("sweep", "Random hyperparameter sweep over beta, alpha_init and log_std_init");
  sw->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--samples", samples, "Number of candidates")->required()->check(CLI::PositiveNumber);
  sw->add_option("--seed", seed, "Sweep seed");
  sw->add_option("--variant", variant, "Variant to sweep");
  sw->add_option("--out", out_opt, "Output directory");

  auto* plot = app.add_subcommand("plot", "SVG learning curves from run directories");
  plot->add_option("--runs", runs, "Run directories")->required();
  plot->add_option("--out", out, "Output SVG")->required();
  plot->add_option("--title", title, "Plot title");

  auto* grid = app.add_subcommand("advantage-grid", "Learned advantage of unit actions from the origin");
  grid->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  grid->add_option("--out", out, "Output CSV")->required();
  grid->add_option("--angles", angles, "Number of action angles")->check(CLI::PositiveNumber);
  grid->add_option("--phi", phi, "Task rotation in degrees");

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(config, variant, seed_opt, out_opt, quiet);
    if (eval->parsed()) return cmd_eval(checkpoint, tasks, seed, rollouts);
    if (sw->parsed()) return cmd_sweep(config, samples, seed, variant, out_opt);
    if (plot->parsed()) return cmd_plot(runs, out, title);
    if (grid->parsed()) return cmd_advantage_grid(checkpoint, out, angles, phi);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumericAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
