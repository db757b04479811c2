#pragma once

// Experiment harness: JSON configs, training runs with on-disk artifacts,
// held-out evaluation, hyperparameter sweeps, learned-advantage grids and
// SVG learning curves.
//
// Run layout under <output root>/<output_dir>:
//   config.json                      verbatim copy of the experiment file
//   curves.svg                       post-adaptation mean, one series per variant
//   <variant>/seed-<n>/curves.csv    iteration,pre_mean,pre_std,post_mean,post_std,seconds
//   <variant>/seed-<n>/returns.jsonl per-task held-out returns per record
//   <variant>/seed-<n>/checkpoint.json and checkpoints/iter-<k>.json

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "norml/errors.hpp"
#include "norml/meta.hpp"

namespace norml::harness {

inline constexpr const char* kConfigSchema = "norml-experiment";
inline constexpr int kConfigVersion = 1;
inline constexpr const char* kOutputRootEnv = "NORML_OUTPUT_ROOT";

// Invalid experiment configuration; `field()` is the dotted path.
class ConfigError : public ContractError {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : ContractError(field + ": " + message), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SweepSpec {
  bool enabled = false;
  Range beta{1e-4, 1e-2};          // log-uniform
  Range alpha_init{1e-3, 1e-1};    // log-uniform
  Range log_std_init{-2.0, 0.0};   // uniform
  bool parallel = false;           // run candidates concurrently
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<Variant> variants{Variant::Norml};
  std::vector<std::uint64_t> seeds{1};
  TrainConfig train{};  // train.variant is replaced per run
  SweepSpec sweep{};
  int checkpoint_every = 0;   // 0: final checkpoint only
  bool record_seconds = true; // false writes 0 so curves are byte-reproducible
  std::string output_dir;     // relative paths resolve against the output root

  TrainConfig train_config(Variant v) const;
  void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
// Parses `path`; the raw text is returned for the verbatim snapshot.
ExperimentConfig load_experiment_config(const std::string& path, std::string* raw_text = nullptr);

// $NORML_OUTPUT_ROOT if set, else "runs".
std::filesystem::path output_root();
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Learning curves.

struct CurveRow {
  int iteration = 0;
  double pre_mean = 0.0;
  double pre_std = 0.0;
  double post_mean = 0.0;
  double post_std = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kCurveHeader = "iteration,pre_mean,pre_std,post_mean,post_std,seconds";

// Values are written with 17 significant digits and parse back exactly.
std::string format_curve_row(const CurveRow& row);
CurveRow to_curve_row(const CurveRecord& rec, bool record_seconds);
void write_curves_csv(const std::string& path, const std::vector<CurveRow>& rows);
// Throws ContractError on a wrong header or malformed row.
std::vector<CurveRow> read_curves_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Runs.

struct RunSummary {
  Variant variant = Variant::Norml;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool aborted = false;
  std::string message;
  std::optional<CurveRow> final_row;
  MetaParams params;
};

struct RunOutcome {
  int exit_code = 0;  // 0 ok, kExitNumericAbort if any run aborted
  std::vector<RunSummary> runs;
};

inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumericAbort = 3;

// Trains every (variant, seed) pair and writes the artifacts listed above.
RunOutcome run(const ExperimentConfig& cfg, const std::string& raw_config_text,
               const std::filesystem::path& out_dir, std::ostream* log = nullptr);

// Held-out evaluation of a checkpoint; task seeds come from the evaluation
// stream, which is disjoint from the training stream.
EvalSummary evaluate_checkpoint(const Checkpoint& cp, int n_tasks, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepCandidate {
  double beta = 0.0;
  double alpha_init = 0.0;
  double log_std_init = 0.0;
  double score = 0.0;  // mean final held-out post-adaptation return over seeds
  bool aborted = false;
  std::string message;
};

struct SweepResult {
  std::vector<SweepCandidate> candidates;
  int best = -1;  // -1 when every candidate aborted
  ExperimentConfig best_config;
};

// Scores one candidate configuration; throws NumericAbort to disqualify it.
using CandidateRunner = std::function<double(const ExperimentConfig&)>;

ExperimentConfig apply_candidate(const ExperimentConfig& cfg, const SweepCandidate& c);
double default_candidate_score(const ExperimentConfig& cfg);

// Candidate i draws its hyperparameters from rng.split(i). Requires a single
// variant. Ties keep the earlier candidate.
SweepResult sweep(const ExperimentConfig& cfg, int n_samples, const Rng& rng,
                  const CandidateRunner& runner = default_candidate_score);
void write_sweep_csv(const std::string& path, const SweepResult& result);

// ---------------------------------------------------------------------------
// Learned advantage on unit actions from the origin of the point agent.

struct AdvantageGridRow {
  double angle_deg = 0.0;
  double advantage = 0.0;
};

// Angles 360 k / n degrees, k = 0..n-1; s' follows the task's dynamics.
std::vector<AdvantageGridRow> emit_advantage_grid(const AdvantageParams& psi, const PointTask& task, int n_angles);
void write_advantage_grid_csv(const std::string& path, const std::vector<AdvantageGridRow>& rows);

// ---------------------------------------------------------------------------
// Plots.

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& y_label);

// A directory holding curves.csv is one series; otherwise each subdirectory
// whose seed-*/curves.csv files exist becomes one series averaged over seeds.
std::vector<Series> load_run_series(const std::vector<std::filesystem::path>& dirs);

// Averages post_mean over curves with identical iteration columns.
Series average_series(const std::string& label, const std::vector<std::vector<CurveRow>>& curves);

}  // namespace norml::harness
