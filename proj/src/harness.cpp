#include "norml/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace norml::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Typed access to a JSON object that reports dotted field paths.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  void reject_unknown(std::initializer_list<const char*> known) const {
    std::set<std::string> k(known.begin(), known.end());
    for (const auto& [key, _] : j_.items()) {
      if (!k.count(key)) throw ConfigError(at(key), "unknown field");
    }
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    return v.get<double>();
  }

  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<int> int_list(const std::string& key, std::vector<int> fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back(v[i].get<int>());
    }
    return out;
  }

  Range range(const std::string& key, Range fallback) const {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError(at(key), "expected [lo, hi]");
    }
    return {v[0].get<double>(), v[1].get<double>()};
  }

  const json& raw(const std::string& key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string path_;
};

template <typename F>
auto wrap_enum(const std::string& field, F&& parse) {
  try {
    return parse();
  } catch (const ContractError& e) {
    throw ConfigError(field, e.what());
  }
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

TrainConfig ExperimentConfig::train_config(Variant v) const {
  TrainConfig t = train;
  t.variant = v;
  t.init.env = t.env;
  return t;
}

void ExperimentConfig::validate() const {
  require(!variants.empty(), "variants", "must list at least one variant");
  require(!seeds.empty(), "seeds", "must list at least one seed");
  require(train.iterations >= 0, "iterations", "must be >= 0");
  require(train.tasks_per_iteration > 0, "tasks_per_iteration", "must be positive");
  require(train.rollouts > 0, "rollouts", "must be positive");
  require(train.horizon >= 0, "horizon", "must be >= 0 (0 selects the environment maximum)");
  require(train.gamma > 0.0 && train.gamma <= 1.0, "gamma", "must be in (0, 1]");
  require(train.eval_tasks >= 0, "eval_tasks", "must be >= 0");
  require(train.eval_every >= 0, "eval_every", "must be >= 0");
  require(train.ppo.clip > 0.0 && train.ppo.clip < 1.0, "ppo.clip", "must be in (0, 1)");
  require(train.ppo.epochs >= 1, "ppo.epochs", "must be >= 1");
  require(train.init.beta > 0.0, "beta", "must be positive");
  require(std::isfinite(train.init.alpha_init), "alpha_init", "must be finite");
  require(std::isfinite(train.init.log_std_init), "policy.log_std_init", "must be finite");
  require(!train.init.policy_hidden.empty(), "policy.hidden", "must have at least one layer");
  for (int h : train.init.policy_hidden) require(h > 0, "policy.hidden", "layer sizes must be positive");
  require(!train.init.advantage_hidden.empty(), "advantage.hidden", "must have at least one layer");
  for (int h : train.init.advantage_hidden) require(h > 0, "advantage.hidden", "layer sizes must be positive");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  if (sweep.enabled) {
    require(sweep.beta.lo > 0.0 && sweep.beta.lo <= sweep.beta.hi, "sweep.beta", "need 0 < lo <= hi");
    require(sweep.alpha_init.lo > 0.0 && sweep.alpha_init.lo <= sweep.alpha_init.hi, "sweep.alpha_init",
            "need 0 < lo <= hi");
    require(sweep.log_std_init.lo <= sweep.log_std_init.hi, "sweep.log_std_init", "need lo <= hi");
  }
}

ExperimentConfig parse_experiment_config(const json& j) {
  const Fields f(j, "");
  f.reject_unknown({"schema", "version", "name", "env", "variants", "seeds", "iterations", "tasks_per_iteration",
                    "rollouts", "horizon", "gamma", "eval_tasks", "eval_every", "second_order", "ppo", "policy",
                    "advantage", "alpha_init", "beta", "sweep", "checkpoint_every", "record_seconds", "output_dir"});
  require(f.string("schema", "") == kConfigSchema, "schema", std::string("must be \"") + kConfigSchema + "\"");
  require(f.has("version"), "version", "missing");
  require(f.integer("version", 0) == kConfigVersion, "version",
          "unsupported version (expected " + std::to_string(kConfigVersion) + ")");

  ExperimentConfig c;
  c.name = f.string("name", c.name);
  require(f.has("env"), "env", "missing");
  c.train.env = wrap_enum("env", [&] { return env_kind_from_string(f.string("env", "")); });

  if (f.has("variants")) {
    const auto& v = f.raw("variants");
    require(v.is_array(), "variants", "expected an array of variant names");
    c.variants.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string field = "variants[" + std::to_string(i) + "]";
      require(v[i].is_string(), field, "expected a string");
      c.variants.push_back(wrap_enum(field, [&] { return variant_from_string(v[i].get<std::string>()); }));
    }
  }
  if (f.has("seeds")) {
    const auto& v = f.raw("seeds");
    require(v.is_array(), "seeds", "expected an array of non-negative integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      require(v[i].is_number_integer() && (v[i].is_number_unsigned() || v[i].get<long long>() >= 0),
              "seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
      c.seeds.push_back(v[i].get<std::uint64_t>());
    }
  }

  auto& t = c.train;
  t.iterations = f.integer("iterations", t.env == EnvKind::Cartpole ? 500 : 300);
  t.tasks_per_iteration = f.integer("tasks_per_iteration", t.tasks_per_iteration);
  t.rollouts = f.integer("rollouts", t.rollouts);
  t.horizon = f.integer("horizon", t.horizon);
  t.gamma = f.number("gamma", t.gamma);
  t.eval_tasks = f.integer("eval_tasks", t.eval_tasks);
  t.eval_every = f.integer("eval_every", t.eval_every);
  t.second_order = f.boolean("second_order", t.second_order);
  t.init.alpha_init = f.number("alpha_init", t.init.alpha_init);
  t.init.beta = f.number("beta", t.init.beta);

  if (f.has("ppo")) {
    const Fields p(f.raw("ppo"), "ppo");
    p.reject_unknown({"clip", "epochs"});
    t.ppo.clip = p.number("clip", t.ppo.clip);
    t.ppo.epochs = p.integer("epochs", t.ppo.epochs);
  }
  if (f.has("policy")) {
    const Fields p(f.raw("policy"), "policy");
    p.reject_unknown({"hidden", "log_std_init", "hidden_gain", "output_gain"});
    t.init.policy_hidden = p.int_list("hidden", t.init.policy_hidden);
    t.init.log_std_init = p.number("log_std_init", t.init.log_std_init);
    t.init.policy_scheme.hidden_gain = p.number("hidden_gain", t.init.policy_scheme.hidden_gain);
    t.init.policy_scheme.output_gain = p.number("output_gain", t.init.policy_scheme.output_gain);
  }
  if (f.has("advantage")) {
    const Fields a(f.raw("advantage"), "advantage");
    a.reject_unknown({"hidden", "hidden_gain", "output_gain"});
    t.init.advantage_hidden = a.int_list("hidden", t.init.advantage_hidden);
    t.init.advantage_scheme.hidden_gain = a.number("hidden_gain", t.init.advantage_scheme.hidden_gain);
    t.init.advantage_scheme.output_gain = a.number("output_gain", t.init.advantage_scheme.output_gain);
  }
  if (f.has("sweep")) {
    const Fields s(f.raw("sweep"), "sweep");
    s.reject_unknown({"enabled", "beta", "alpha_init", "log_std_init", "parallel"});
    c.sweep.enabled = s.boolean("enabled", true);
    c.sweep.beta = s.range("beta", c.sweep.beta);
    c.sweep.alpha_init = s.range("alpha_init", c.sweep.alpha_init);
    c.sweep.log_std_init = s.range("log_std_init", c.sweep.log_std_init);
    c.sweep.parallel = s.boolean("parallel", c.sweep.parallel);
  }
  c.checkpoint_every = f.integer("checkpoint_every", c.checkpoint_every);
  c.record_seconds = f.boolean("record_seconds", c.record_seconds);
  c.output_dir = f.string("output_dir", c.name);
  c.validate();
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  json variants = json::array();
  for (auto v : c.variants) variants.push_back(to_string(v));
  json j;
  j["schema"] = kConfigSchema;
  j["version"] = kConfigVersion;
  j["name"] = c.name;
  j["env"] = to_string(t.env);
  j["variants"] = variants;
  j["seeds"] = c.seeds;
  j["iterations"] = t.iterations;
  j["tasks_per_iteration"] = t.tasks_per_iteration;
  j["rollouts"] = t.rollouts;
  j["horizon"] = t.horizon;
  j["gamma"] = t.gamma;
  j["eval_tasks"] = t.eval_tasks;
  j["eval_every"] = t.eval_every;
  j["second_order"] = t.second_order;
  j["ppo"] = {{"clip", t.ppo.clip}, {"epochs", t.ppo.epochs}};
  j["policy"] = {{"hidden", t.init.policy_hidden},
                 {"log_std_init", t.init.log_std_init},
                 {"hidden_gain", t.init.policy_scheme.hidden_gain},
                 {"output_gain", t.init.policy_scheme.output_gain}};
  j["advantage"] = {{"hidden", t.init.advantage_hidden},
                    {"hidden_gain", t.init.advantage_scheme.hidden_gain},
                    {"output_gain", t.init.advantage_scheme.output_gain}};
  j["alpha_init"] = t.init.alpha_init;
  j["beta"] = t.init.beta;
  j["sweep"] = {{"enabled", c.sweep.enabled},
                {"beta", {c.sweep.beta.lo, c.sweep.beta.hi}},
                {"alpha_init", {c.sweep.alpha_init.lo, c.sweep.alpha_init.hi}},
                {"log_std_init", {c.sweep.log_std_init.lo, c.sweep.log_std_init.hi}},
                {"parallel", c.sweep.parallel}};
  j["checkpoint_every"] = c.checkpoint_every;
  j["record_seconds"] = c.record_seconds;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig load_experiment_config(const std::string& path, std::string* raw_text) {
  const std::string text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  auto cfg = parse_experiment_config(j);
  if (raw_text != nullptr) *raw_text = text;
  return cfg;
}

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

fs::path resolve_output_dir(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir.empty() ? cfg.name : cfg.output_dir);
  return dir.is_absolute() ? dir : output_root() / dir;
}

// ---------------------------------------------------------------------------

std::string format_curve_row(const CurveRow& r) {
  return std::to_string(r.iteration) + "," + fmt(r.pre_mean) + "," + fmt(r.pre_std) + "," + fmt(r.post_mean) + "," +
         fmt(r.post_std) + "," + fmt(r.seconds);
}

CurveRow to_curve_row(const CurveRecord& rec, bool record_seconds) {
  return {rec.iteration, rec.pre_mean, rec.pre_std, rec.post_mean, rec.post_std, record_seconds ? rec.seconds : 0.0};
}

void write_curves_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  std::string text = std::string(kCurveHeader) + "\n";
  for (const auto& r : rows) text += format_curve_row(r) + "\n";
  write_text(path, text);
}

std::vector<CurveRow> read_curves_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) {
    throw ContractError(path + ": expected header '" + kCurveHeader + "'");
  }
  std::vector<CurveRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ContractError(path + ":" + std::to_string(lineno) + ": expected 6 columns");
    try {
      std::size_t used = 0;
      CurveRow r;
      r.iteration = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("iteration");
      double* dst[] = {&r.pre_mean, &r.pre_std, &r.post_mean, &r.post_std, &r.seconds};
      for (int k = 0; k < 5; ++k) {
        *dst[k] = std::stod(cells[static_cast<std::size_t>(k) + 1], &used);
        if (used != cells[static_cast<std::size_t>(k) + 1].size()) throw std::invalid_argument("value");
      }
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ContractError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::string iteration_name(int it) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter-%06d.json", it);
  return buf;
}

Checkpoint make_checkpoint(const TrainConfig& t, const MetaParams& p, const AdamState& adam, int iteration) {
  Checkpoint cp;
  cp.params = p;
  cp.adam = adam;
  cp.variant = t.variant;
  cp.env = t.env;
  cp.iteration = iteration;
  cp.rollouts = t.rollouts;
  cp.horizon = t.effective_horizon();
  cp.gamma = t.gamma;
  return cp;
}

RunSummary train_one(const ExperimentConfig& cfg, Variant v, std::uint64_t seed, const fs::path& dir,
                     std::ostream* log) {
  const TrainConfig t = cfg.train_config(v);
  RunSummary s;
  s.variant = v;
  s.seed = seed;
  s.dir = dir;
  fs::create_directories(dir);
  std::ofstream curves(dir / "curves.csv", std::ios::binary);
  std::ofstream returns(dir / "returns.jsonl", std::ios::binary);
  curves << kCurveHeader << "\n" << std::flush;

  auto on_iteration = [&](const CurveRecord& rec, const MetaParams& p, const AdamState& adam) {
    const auto row = to_curve_row(rec, cfg.record_seconds);
    curves << format_curve_row(row) << "\n" << std::flush;
    returns << json{{"iteration", rec.iteration}, {"pre", rec.pre_returns}, {"post", rec.post_returns}}.dump()
            << "\n"
            << std::flush;
    s.final_row = row;
    if (cfg.checkpoint_every > 0 && rec.iteration % cfg.checkpoint_every == 0) {
      fs::create_directories(dir / "checkpoints");
      save_checkpoint((dir / "checkpoints" / iteration_name(rec.iteration)).string(),
                      make_checkpoint(t, p, adam, rec.iteration));
    }
    if (log != nullptr) {
      *log << to_string(v) << " seed " << seed << " iter " << rec.iteration << " pre " << rec.pre_mean << " post "
           << rec.post_mean << "\n"
           << std::flush;
    }
  };

  try {
    auto result = meta_train(t, Rng(seed), on_iteration);
    save_checkpoint((dir / "checkpoint.json").string(), make_checkpoint(t, result.params, result.adam, t.iterations));
    s.params = std::move(result.params);
  } catch (const NumericAbort& e) {
    s.aborted = true;
    s.message = e.what();
    if (log != nullptr) *log << to_string(v) << " seed " << seed << " aborted: " << e.what() << "\n";
  }
  return s;
}

}  // namespace

RunOutcome run(const ExperimentConfig& cfg, const std::string& raw_config_text, const fs::path& out_dir,
               std::ostream* log) {
  cfg.validate();
  fs::create_directories(out_dir);
  write_text(out_dir / "config.json", raw_config_text);
  RunOutcome out;
  std::vector<Series> series;
  for (auto v : cfg.variants) {
    std::vector<std::vector<CurveRow>> curves;
    for (auto seed : cfg.seeds) {
      const fs::path dir = out_dir / to_string(v) / ("seed-" + std::to_string(seed));
      auto s = train_one(cfg, v, seed, dir, log);
      if (s.aborted) out.exit_code = kExitNumericAbort;
      curves.push_back(read_curves_csv((dir / "curves.csv").string()));
      out.runs.push_back(std::move(s));
    }
    series.push_back(average_series(to_string(v), curves));
  }
  write_text(out_dir / "curves.svg", render_svg(series, cfg.name, "post-adaptation mean return"));
  return out;
}

EvalSummary evaluate_checkpoint(const Checkpoint& cp, int n_tasks, std::uint64_t seed) {
  return evaluate_heldout(cp.params, cp.variant, cp.env, n_tasks, cp.rollouts,
                          cp.horizon > 0 ? cp.horizon : max_horizon(cp.env), cp.gamma, Rng(seed).split(kEvalStream));
}

// ---------------------------------------------------------------------------

ExperimentConfig apply_candidate(const ExperimentConfig& cfg, const SweepCandidate& c) {
  ExperimentConfig out = cfg;
  out.train.init.beta = c.beta;
  out.train.init.alpha_init = c.alpha_init;
  out.train.init.log_std_init = c.log_std_init;
  out.sweep.enabled = false;
  return out;
}

double default_candidate_score(const ExperimentConfig& cfg) {
  double total = 0.0;
  for (auto seed : cfg.seeds) {
    TrainConfig t = cfg.train_config(cfg.variants.front());
    t.eval_every = 0;
    const auto result = meta_train(t, Rng(seed));
    const auto s = evaluate_heldout(result.params, t.variant, t.env, t.eval_tasks, t.rollouts, t.effective_horizon(),
                                    t.gamma, Rng(seed).split(kEvalStream));
    if (!std::isfinite(s.post_mean)) throw NumericAbort("non-finite held-out return", t.iterations);
    total += s.post_mean;
  }
  return total / static_cast<double>(cfg.seeds.size());
}

SweepResult sweep(const ExperimentConfig& cfg, int n_samples, const Rng& rng, const CandidateRunner& runner) {
  if (n_samples < 1) throw ConfigError("samples", "must be >= 1");
  if (cfg.variants.size() != 1) throw ConfigError("variants", "a sweep needs exactly one variant");
  const auto& sw = cfg.sweep;
  SweepResult result;
  result.candidates.resize(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    auto& c = result.candidates[static_cast<std::size_t>(i)];
    c.beta = std::exp(r.uniform(std::log(sw.beta.lo), std::log(sw.beta.hi)));
    c.alpha_init = std::exp(r.uniform(std::log(sw.alpha_init.lo), std::log(sw.alpha_init.hi)));
    c.log_std_init = r.uniform(sw.log_std_init.lo, sw.log_std_init.hi);
  }
#pragma omp parallel for schedule(dynamic) if (sw.parallel)
  for (int i = 0; i < n_samples; ++i) {
    auto& c = result.candidates[static_cast<std::size_t>(i)];
    try {
      c.score = runner(apply_candidate(cfg, c));
      if (!std::isfinite(c.score)) throw NumericAbort("non-finite score", 0);
    } catch (const NumericAbort& e) {
      c.aborted = true;
      c.message = e.what();
    }
  }
  for (int i = 0; i < n_samples; ++i) {
    const auto& c = result.candidates[static_cast<std::size_t>(i)];
    if (c.aborted) continue;
    if (result.best < 0 || c.score > result.candidates[static_cast<std::size_t>(result.best)].score) result.best = i;
  }
  result.best_config =
      result.best >= 0 ? apply_candidate(cfg, result.candidates[static_cast<std::size_t>(result.best)]) : cfg;
  return result;
}

void write_sweep_csv(const std::string& path, const SweepResult& result) {
  std::string text = "candidate,beta,alpha_init,log_std_init,score,aborted\n";
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    text += std::to_string(i) + "," + fmt(c.beta) + "," + fmt(c.alpha_init) + "," + fmt(c.log_std_init) + "," +
            (c.aborted ? std::string("nan") : fmt(c.score)) + "," + (c.aborted ? "1" : "0") + "\n";
  }
  write_text(path, text);
}

// ---------------------------------------------------------------------------

std::vector<AdvantageGridRow> emit_advantage_grid(const AdvantageParams& psi, const PointTask& task, int n_angles) {
  validate(psi);
  if (psi.state_dim != 2 || psi.action_dim != 2) throw ContractError("emit_advantage_grid: needs a point-agent network");
  if (n_angles < 1) throw ContractError("emit_advantage_grid: n_angles must be >= 1");
  std::vector<AdvantageGridRow> rows;
  rows.reserve(static_cast<std::size_t>(n_angles));
  const PointState origin{};
  for (int k = 0; k < n_angles; ++k) {
    const double deg = 360.0 * k / n_angles;
    const double w = deg * std::numbers::pi / 180.0;
    const std::array<double, 2> a{std::cos(w), std::sin(w)};
    const PointState next = point_step(origin, a, task);
    const double s[] = {origin.x, origin.y};
    const double sn[] = {next.x, next.y};
    rows.push_back({deg, advantage_forward(psi, s, a, sn)});
  }
  return rows;
}

void write_advantage_grid_csv(const std::string& path, const std::vector<AdvantageGridRow>& rows) {
  std::string text = "angle_deg,advantage\n";
  for (const auto& r : rows) text += fmt(r.angle_deg) + "," + fmt(r.advantage) + "\n";
  write_text(path, text);
}

// ---------------------------------------------------------------------------

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

}  // namespace

std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& y_label) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return T + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape_xml(title)
    << "</text>\n";
  o << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(T + ph + 18) << "\" text-anchor=\"middle\">"
      << tick_label(xv) << "</text>\n";
    o << "<text x=\"" << num(L - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick_label(yv)
      << "</text>\n";
    o << "<line x1=\"" << num(L) << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << num(L + pw) << "\" y2=\""
      << num(py(yv)) << "\" stroke=\"#dddddd\"/>\n";
  }
  o << "<text x=\"" << num(L + pw / 2) << "\" y=\"" << num(H - 10) << "\" text-anchor=\"middle\">iteration</text>\n";
  o << "<text x=\"16\" y=\"" << num(T + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num(T + ph / 2) << ")\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % (sizeof colors / sizeof *colors)];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << num(L + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(L + pw + 30) << "\" y2=\""
      << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(L + pw + 35) << "\" y=\"" << num(ly + 4) << "\">" << escape_xml(s.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

Series average_series(const std::string& label, const std::vector<std::vector<CurveRow>>& curves) {
  Series s;
  s.label = label;
  if (curves.empty()) return s;
  std::map<int, std::pair<double, int>> acc;
  for (const auto& c : curves) {
    for (const auto& r : c) {
      auto& [sum, n] = acc[r.iteration];
      sum += r.post_mean;
      ++n;
    }
  }
  for (const auto& [it, sn] : acc) {
    s.x.push_back(it);
    s.y.push_back(sn.first / sn.second);
  }
  return s;
}

std::vector<Series> load_run_series(const std::vector<fs::path>& dirs) {
  std::vector<Series> out;
  for (const auto& d : dirs) {
    if (fs::exists(d / "curves.csv")) {
      out.push_back(average_series(d.filename().string(), {read_curves_csv((d / "curves.csv").string())}));
      continue;
    }
    if (!fs::is_directory(d)) throw ContractError("plot: '" + d.string() + "' is not a run directory");
    std::vector<fs::path> groups;
    for (const auto& e : fs::directory_iterator(d)) {
      if (e.is_directory()) groups.push_back(e.path());
    }
    std::sort(groups.begin(), groups.end());
    for (const auto& g : groups) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(g)) {
        if (e.is_directory() && e.path().filename().string().rfind("seed-", 0) == 0 &&
            fs::exists(e.path() / "curves.csv")) {
          files.push_back(e.path() / "curves.csv");
        }
      }
      if (files.empty()) continue;
      std::sort(files.begin(), files.end());
      std::vector<std::vector<CurveRow>> curves;
      for (const auto& f : files) curves.push_back(read_curves_csv(f.string()));
      out.push_back(average_series(g.filename().string(), curves));
    }
  }
  return out;
}

}  // namespace norml::harness
