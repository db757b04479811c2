#pragma once

// Trajectory collection. The K rollouts of one task advance in lockstep so
// the policy is evaluated on a batch per step; each rollout draws from its
// own stream split from the caller's generator, so results depend only on
// (seed, rollout index) and never on scheduling.

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "norml/envs.hpp"
#include "norml/kernels.hpp"
#include "norml/netcore.hpp"
#include "norml/rng.hpp"

namespace norml {

struct Trajectory {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states;     // (steps + 1) x state_dim, row-major
  std::vector<double> actions;    // steps x action_dim
  std::vector<double> rewards;    // steps entries, or empty when not recorded
  std::vector<double> log_probs;  // behaviour-policy log density per step

  int steps() const { return static_cast<int>(log_probs.size()); }
  bool has_rewards() const { return !rewards.empty() || log_probs.empty(); }
  std::span<const double> state(int t) const;
  std::span<const double> action(int t) const;
  double total_reward() const;
  void check() const;
};

// (s_t, a_t, s_{t+1}) columns, ordered by (trajectory, timestep). Carries no
// rewards by construction.
struct TransitionSet {
  int state_dim = 0;
  int action_dim = 0;
  kernels::Matrix states;
  kernels::Matrix actions;
  kernels::Matrix next_states;
  std::vector<int> trajectory;
  std::vector<int> timestep;

  Eigen::Index size() const { return states.cols(); }
};

class RolloutError : public std::runtime_error {
 public:
  RolloutError(int rollout, const std::string& what)
      : std::runtime_error("rollout " + std::to_string(rollout) + ": " + what), rollout_(rollout) {}
  int rollout() const noexcept { return rollout_; }

 private:
  int rollout_;
};

struct CollectOptions {
  bool record_rewards = true;
  bool poison_rewards = false;  // every reward becomes NaN
};

// K rollouts of at most H steps. Rollout k uses rng.split(k).
std::vector<Trajectory> collect(const PolicyParams& policy, const Task& task, int K, int H, const Rng& rng,
                                const CollectOptions& options = {});

// Collects for many (policy, task) pairs, task i using rng.split(i), in
// parallel over tasks. Output order follows the input order.
std::vector<std::vector<Trajectory>> collect_many(std::span<const PolicyParams> policies,
                                                  std::span<const Task> tasks, int K, int H, const Rng& rng,
                                                  const CollectOptions& options = {});

TransitionSet strip_rewards(std::span<const Trajectory> trajectories);

// Concatenated per-step values in transition order.
std::vector<double> stacked_log_probs(std::span<const Trajectory> trajectories);

// Re-runs every rollout with its stored actions and checks each stored
// next state equals the environment's output exactly.
bool verify_replay(std::span<const Trajectory> trajectories, const Task& task, const Rng& rng);

double mean_return(std::span<const Trajectory> trajectories);

// One JSON object per line:
// {"state_dim", "action_dim", "states", "actions", "rewards" (or null), "log_probs"}.
void write_jsonl(std::ostream& out, std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_jsonl(std::istream& in);

}  // namespace norml
