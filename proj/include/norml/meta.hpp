#pragma once

// Meta-learning: inner adaptation, the clipped-surrogate outer objective, its
// exact gradient through the inner step, Adam, the training loop and
// fine-tuning.
//
// Generic inner step for every adapting variant:
//   theta_i = theta + [offset] + sign * alpha (.) sum_t w_t grad_theta log pi(a_t | s_t)
// with w_t = A_psi(s_t, a_t, s_t+1) and sign = -1 for the learned advantage,
// or w_t = observed advantage and sign = +1 otherwise.
//
// Trainable stack order (Adam state and checkpoints):
//   [theta_mu, theta_sigma, theta_offset, alpha, psi]

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "norml/advantage_est.hpp"
#include "norml/envs.hpp"
#include "norml/netcore.hpp"
#include "norml/rollout.hpp"

namespace norml {

enum class Variant { Maml, Norml, NormlNoOffset, NormlNoLaf, DomainRandomization };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct VariantTraits {
  bool adapts = true;
  bool learned_advantage = false;
  bool offset = false;
  double inner_sign = 1.0;
};

VariantTraits traits(Variant v);

struct MetaParams {
  PolicyParams theta;
  std::vector<double> offset;
  std::vector<double> alpha;
  AdvantageParams psi;
  double beta = 1e-3;

  std::size_t theta_size() const { return theta.size(); }
  std::size_t stack_size() const { return 3 * theta.size() + psi.psi.size(); }
  std::vector<double> stack() const;
  void set_stack(std::span<const double> stack);
};

struct MetaInit {
  EnvKind env = EnvKind::PointShaped;
  std::vector<int> policy_hidden{50, 50};
  std::vector<int> advantage_hidden{50, 50};
  double log_std_init = 0.0;
  double alpha_init = 0.01;
  double beta = 1e-3;
  InitScheme policy_scheme{};
  InitScheme advantage_scheme{};
};

// theta_offset starts at zero; alpha at alpha_init, or zero for DR.
MetaParams init_meta_params(const MetaInit& init, Variant variant, Rng& rng);

// Per-coordinate mask of the stack entries a variant trains.
std::vector<char> trainable_mask(const MetaParams& params, Variant variant);

struct PpoConfig {
  double clip = 0.2;
  int epochs = 1;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// One Adam update with learning rate `beta`; state is created on first use.
void adam_step(std::span<double> stack, std::span<const double> grads, AdamState& state, double beta);

// ---------------------------------------------------------------------------
// Inner adaptation.

// sum_t w_t grad_theta log pi(a_t | s_t), flat policy layout.
std::vector<double> score_sum(const PolicyParams& theta, const TransitionSet& data, std::span<const double> weights);

std::vector<double> learned_advantages(const AdvantageParams& adv, const TransitionSet& data);

// theta + alpha (.) sum A grad log pi with observed advantages under `fit`.
PolicyParams inner_adapt_maml(const PolicyParams& theta, std::span<const double> alpha,
                              std::span<const Trajectory> d_train, const ValueFit& fit);

// theta + offset - alpha (.) sum A_psi grad log pi. Only transitions are
// accepted, so rewards cannot be read.
PolicyParams inner_adapt_norml(const PolicyParams& theta, std::span<const double> offset,
                               std::span<const double> alpha, const AdvantageParams& psi,
                               const TransitionSet& d_train);

// Generic form used by all variants: theta + offset + sign * alpha (.) u.
PolicyParams inner_step(const PolicyParams& theta, std::span<const double> offset, std::span<const double> alpha,
                        double sign, std::span<const double> u);

// ---------------------------------------------------------------------------
// Outer objective and meta-gradient.

// Data of one task for one meta-iteration.
struct TaskBatch {
  TransitionSet train;                  // empty for DR
  std::vector<double> train_advantages;  // observed, for variants without the learned advantage
  TransitionSet test;
  std::vector<double> test_advantages;  // standardized observed advantages
  std::vector<double> behavior_log_probs;
};

// -sum_t min(rho_t A_t, clip(rho_t, 1 - eps, 1 + eps) A_t).
double meta_objective(const PolicyParams& theta_i, const TransitionSet& d_test, std::span<const double> advantages,
                      std::span<const double> behavior_log_probs, const PpoConfig& ppo);

// Adapted parameters of one task as used by the meta-gradient.
PolicyParams adapted_for_batch(const MetaParams& params, Variant variant, const TaskBatch& batch);

struct MetaGradient {
  double loss = 0.0;
  std::vector<double> grad;  // stack layout, masked by variant
};

struct GradientOptions {
  bool second_order = true;  // false drops the Hessian-vector term
};

// Exact gradient of sum_i L_i(theta_i) through the inner step. Tasks run in
// parallel; the reduction is in task order.
MetaGradient meta_gradient(const MetaParams& params, Variant variant, std::span<const TaskBatch> tasks,
                           const PpoConfig& ppo, const GradientOptions& options = {});

MetaGradient task_gradient(const MetaParams& params, Variant variant, const TaskBatch& task, const PpoConfig& ppo,
                           const GradientOptions& options = {});

// ---------------------------------------------------------------------------
// Training loop, fine-tuning and evaluation.

struct TrainConfig {
  EnvKind env = EnvKind::PointShaped;
  Variant variant = Variant::Norml;
  int iterations = 300;
  int tasks_per_iteration = 10;
  int rollouts = 25;  // K
  int horizon = 0;    // 0: environment maximum
  double gamma = 0.99;
  PpoConfig ppo{};
  MetaInit init{};  // init.env is taken from env
  int eval_tasks = 20;
  int eval_every = 1;  // 0 disables per-iteration evaluation
  bool second_order = true;

  int effective_horizon() const { return horizon > 0 ? horizon : max_horizon(env); }
  void validate() const;
};

struct CurveRecord {
  int iteration = 0;
  double pre_mean = 0.0;
  double pre_std = 0.0;
  double post_mean = 0.0;
  double post_std = 0.0;
  std::vector<double> pre_returns;
  std::vector<double> post_returns;
  double seconds = 0.0;
};

struct EvalSummary {
  std::vector<Task> tasks;
  std::vector<double> pre_returns;
  std::vector<double> post_returns;
  double pre_mean = 0.0;
  double pre_std = 0.0;
  double post_mean = 0.0;
  double post_std = 0.0;
};

// Adapts from already collected meta rollouts. Learned-advantage variants
// see only the reward-free transitions.
PolicyParams adapt(const MetaParams& params, Variant variant, std::span<const Trajectory> meta_rollouts,
                   double gamma, int horizon);

// Collects K meta rollouts on `task` with the meta-policy and adapts.
PolicyParams fine_tune(const MetaParams& params, Variant variant, const Task& task, int K, int horizon,
                       double gamma, const Rng& rng, const CollectOptions& options = {});

// Pre- and post-adaptation mean returns on n held-out tasks. Task i uses
// rng.split(1).split(i) for both its meta and its evaluation rollouts.
EvalSummary evaluate_heldout(const MetaParams& params, Variant variant, EnvKind env, int n_tasks, int K,
                             int horizon, double gamma, const Rng& rng);

struct TrainResult {
  MetaParams params;
  AdamState adam;
  std::vector<CurveRecord> curve;
};

// Stream keys split from the master generator.
inline constexpr std::uint64_t kTrainStream = 0x7261696eULL;
inline constexpr std::uint64_t kEvalStream = 0x6576616cULL;
inline constexpr std::uint64_t kInitStream = 0x696e6974ULL;

using IterationCallback = std::function<void(const CurveRecord&, const MetaParams&, const AdamState&)>;

// Throws NumericAbort when the parameters or the gradient become non-finite.
TrainResult meta_train(const TrainConfig& config, const Rng& rng, const IterationCallback& on_iteration = {});

// Continues training from a given state.
TrainResult meta_train_from(const TrainConfig& config, MetaParams params, AdamState adam, int first_iteration,
                            const Rng& rng, const IterationCallback& on_iteration = {});

// Collects one task's D_train / D_test for the current parameters.
TaskBatch build_task_batch(const MetaParams& params, Variant variant, const Task& task, int K, int horizon,
                           double gamma, const Rng& train_rng, const Rng& test_rng);

// ---------------------------------------------------------------------------
// Checkpoints: {"format": "norml-checkpoint", "version": 1, "variant", "env",
// "iteration", "beta", "rollouts", "horizon", "gamma", "policy_net",
// "advantage_net", "arrays": {"theta_mu", "theta_sigma", "theta_offset",
// "alpha", "psi"}, "adam": {"step", "m", "v"}}.

struct Checkpoint {
  MetaParams params;
  AdamState adam;
  Variant variant = Variant::Norml;
  EnvKind env = EnvKind::PointShaped;
  int iteration = 0;
  int rollouts = 25;
  int horizon = 0;
  double gamma = 0.99;
};

nlohmann::json checkpoint_to_json(const Checkpoint& cp);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace norml
