#include "norml/rollout.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

namespace norml {

std::span<const double> Trajectory::state(int t) const {
  return std::span<const double>(states).subspan(static_cast<std::size_t>(t * state_dim),
                                                 static_cast<std::size_t>(state_dim));
}

std::span<const double> Trajectory::action(int t) const {
  return std::span<const double>(actions).subspan(static_cast<std::size_t>(t * action_dim),
                                                  static_cast<std::size_t>(action_dim));
}

double Trajectory::total_reward() const {
  if (!has_rewards()) throw ContractError("Trajectory::total_reward: rewards were not recorded");
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

void Trajectory::check() const {
  const auto h = static_cast<std::size_t>(steps());
  if (states.size() != (h + 1) * static_cast<std::size_t>(state_dim) ||
      actions.size() != h * static_cast<std::size_t>(action_dim) || (!rewards.empty() && rewards.size() != h)) {
    throw ContractError("Trajectory: inconsistent lengths");
  }
}

std::vector<Trajectory> collect(const PolicyParams& policy, const Task& task, int K, int H, const Rng& rng,
                                const CollectOptions& options) {
  if (K < 1) throw ContractError("collect: K must be >= 1");
  if (H < 1) throw ContractError("collect: H must be >= 1");
  const int sd = state_dim(task.kind), ad = action_dim(task.kind);
  if (policy.state_dim() != sd || policy.action_dim() != ad) {
    throw ContractError("collect: policy dimensions do not match the environment");
  }
  const auto k_count = static_cast<std::size_t>(K);
  std::vector<Episode> episodes;
  std::vector<Rng> streams;
  std::vector<Trajectory> out(k_count);
  episodes.reserve(k_count);
  streams.reserve(k_count);
  for (int k = 0; k < K; ++k) {
    const auto ki = static_cast<std::size_t>(k);
    episodes.emplace_back(task, options.poison_rewards);
    streams.push_back(rng.split(static_cast<std::uint64_t>(k)));
    const auto obs = episodes[ki].reset(streams[ki]);
    out[ki].state_dim = sd;
    out[ki].action_dim = ad;
    out[ki].states = obs;
  }

  std::vector<int> active;
  kernels::MlpTrace trace;
  kernels::Matrix obs(sd, K), act(ad, K);
  kernels::Vector lp;
  for (int t = 0; t < H; ++t) {
    active.clear();
    for (int k = 0; k < K; ++k) {
      if (!episodes[static_cast<std::size_t>(k)].done()) active.push_back(k);
    }
    if (active.empty()) break;
    const auto n = static_cast<Eigen::Index>(active.size());
    obs.resize(sd, n);
    act.resize(ad, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto s = out[static_cast<std::size_t>(active[static_cast<std::size_t>(j)])].state(t);
      for (int d = 0; d < sd; ++d) obs(d, j) = s[static_cast<std::size_t>(d)];
    }
    kernels::forward(policy.mean_net, policy.mean, obs, trace);
    const kernels::Matrix& mu = trace.h.back();
    for (Eigen::Index j = 0; j < n; ++j) {
      Rng& r = streams[static_cast<std::size_t>(active[static_cast<std::size_t>(j)])];
      for (int d = 0; d < ad; ++d) act(d, j) = mu(d, j) + std::exp(policy.log_std[static_cast<std::size_t>(d)]) * r.normal();
    }
    kernels::gaussian_log_prob(mu, policy.log_std, act, lp);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int k = active[static_cast<std::size_t>(j)];
      auto& traj = out[static_cast<std::size_t>(k)];
      const std::vector<double> a(act.col(j).data(), act.col(j).data() + ad);
      StepResult step;
      try {
        step = episodes[static_cast<std::size_t>(k)].step(a);
      } catch (const std::exception& e) {
        throw RolloutError(k, e.what());
      }
      traj.actions.insert(traj.actions.end(), a.begin(), a.end());
      traj.states.insert(traj.states.end(), step.observation.begin(), step.observation.end());
      traj.log_probs.push_back(lp(j));
      if (options.record_rewards) traj.rewards.push_back(step.reward);
    }
  }
  return out;
}

std::vector<std::vector<Trajectory>> collect_many(std::span<const PolicyParams> policies,
                                                  std::span<const Task> tasks, int K, int H, const Rng& rng,
                                                  const CollectOptions& options) {
  if (policies.size() != tasks.size()) throw ContractError("collect_many: one policy per task required");
  const auto n = static_cast<std::ptrdiff_t>(tasks.size());
  std::vector<std::vector<Trajectory>> out(tasks.size());
  std::vector<std::string> errors(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    try {
      out[ui] = collect(policies[ui], tasks[ui], K, H, rng.split(static_cast<std::uint64_t>(i)), options);
    } catch (const std::exception& e) {
      errors[ui] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("task " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

TransitionSet strip_rewards(std::span<const Trajectory> trajectories) {
  TransitionSet set;
  Eigen::Index total = 0;
  for (const auto& t : trajectories) total += t.steps();
  if (!trajectories.empty()) {
    set.state_dim = trajectories.front().state_dim;
    set.action_dim = trajectories.front().action_dim;
  }
  set.states.resize(set.state_dim, total);
  set.actions.resize(set.action_dim, total);
  set.next_states.resize(set.state_dim, total);
  set.trajectory.reserve(static_cast<std::size_t>(total));
  set.timestep.reserve(static_cast<std::size_t>(total));
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const auto& traj = trajectories[k];
    if (traj.state_dim != set.state_dim || traj.action_dim != set.action_dim) {
      throw ContractError("strip_rewards: trajectories have mixed dimensions");
    }
    for (int t = 0; t < traj.steps(); ++t, ++col) {
      const auto s = traj.state(t), a = traj.action(t), sn = traj.state(t + 1);
      for (int d = 0; d < set.state_dim; ++d) {
        set.states(d, col) = s[static_cast<std::size_t>(d)];
        set.next_states(d, col) = sn[static_cast<std::size_t>(d)];
      }
      for (int d = 0; d < set.action_dim; ++d) set.actions(d, col) = a[static_cast<std::size_t>(d)];
      set.trajectory.push_back(static_cast<int>(k));
      set.timestep.push_back(t);
    }
  }
  return set;
}

std::vector<double> stacked_log_probs(std::span<const Trajectory> trajectories) {
  std::vector<double> out;
  for (const auto& t : trajectories) out.insert(out.end(), t.log_probs.begin(), t.log_probs.end());
  return out;
}

bool verify_replay(std::span<const Trajectory> trajectories, const Task& task, const Rng& rng) {
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const auto& traj = trajectories[k];
    Episode ep(task);
    Rng stream = rng.split(static_cast<std::uint64_t>(k));
    const auto first = ep.reset(stream);
    if (!std::equal(first.begin(), first.end(), traj.state(0).begin())) return false;
    for (int t = 0; t < traj.steps(); ++t) {
      if (ep.done()) return false;
      const auto step = ep.step(traj.action(t));
      const auto expected = traj.state(t + 1);
      if (!std::equal(step.observation.begin(), step.observation.end(), expected.begin())) return false;
    }
  }
  return true;
}

double mean_return(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : trajectories) total += t.total_reward();
  return total / static_cast<double>(trajectories.size());
}

void write_jsonl(std::ostream& out, std::span<const Trajectory> trajectories) {
  for (const auto& t : trajectories) {
    nlohmann::json j;
    j["state_dim"] = t.state_dim;
    j["action_dim"] = t.action_dim;
    j["states"] = t.states;
    j["actions"] = t.actions;
    j["rewards"] = t.rewards.empty() && t.steps() > 0 ? nlohmann::json(nullptr) : nlohmann::json(t.rewards);
    j["log_probs"] = t.log_probs;
    out << j.dump() << '\n';
  }
}

std::vector<Trajectory> read_jsonl(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Trajectory t;
      t.state_dim = j.at("state_dim").get<int>();
      t.action_dim = j.at("action_dim").get<int>();
      t.states = j.at("states").get<std::vector<double>>();
      t.actions = j.at("actions").get<std::vector<double>>();
      if (!j.at("rewards").is_null()) t.rewards = j.at("rewards").get<std::vector<double>>();
      t.log_probs = j.at("log_probs").get<std::vector<double>>();
      t.check();
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw ContractError("read_jsonl: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace norml
