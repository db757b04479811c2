#pragma once

// Task distributions: a point agent whose actions are rotated by an unknown
// angle (shaped or sparse reward) and a cart-pole whose pole-angle sensor
// carries an unknown bias.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "norml/rng.hpp"

namespace norml {

enum class EnvKind { PointShaped, PointSparse, Cartpole };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

// ---------------------------------------------------------------------------
// Point agent.

struct PointTask {
  double phi = 0.0;  // radians, [0, 2 pi)
};

struct PointState {
  double x = 0.0;
  double y = 0.0;
};

inline constexpr double kPointBound = 2.0;
inline constexpr int kPointShapedHorizon = 10;
inline constexpr int kPointSparseHorizon = 100;
inline constexpr double kPointGoalRadius = 0.1;

// Clamps the action to [-1, 1]^2, rotates it by phi, moves and clips to the
// square [-2, 2]^2.
PointState point_step(PointState s, std::array<double, 2> a, PointTask task);
double point_reward_shaped(PointState s_next);

struct PointSparseStep {
  PointState next;
  double reward = -1.0;
  bool done = false;
};

// `step_count` is the number of steps taken including this one.
PointSparseStep point_step_sparse(PointState s, std::array<double, 2> a, PointTask task, int step_count);

// ---------------------------------------------------------------------------
// Cart-pole.

struct CartpoleTask {
  double delta = 0.0;  // radians, |delta| <= 10 degrees
};

struct CartpoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
};

struct CartpoleConstants {
  double gravity = 9.8;
  double mass_cart = 1.0;
  double mass_pole = 0.1;
  double half_length = 0.5;
  double dt = 0.02;
  double force_limit = 10.0;
  double theta_limit = 12.0 * 3.14159265358979323846 / 180.0;
  double x_limit = 2.4;
  int max_steps = 500;
};

inline constexpr double kMaxSensorBias = 10.0 * 3.14159265358979323846 / 180.0;

struct CartpoleStep {
  CartpoleState next;
  double reward = 0.0;
  bool done = false;
};

bool cartpole_failed(const CartpoleState& s, const CartpoleConstants& c = {});

// Semi-implicit Euler. Reward 1 unless the new state fails; done on failure
// or when `step_count` (steps taken including this one) reaches the cap.
CartpoleStep cartpole_step(CartpoleState s, double force, int step_count, const CartpoleConstants& c = {});
std::array<double, 4> cartpole_observe(const CartpoleState& s, CartpoleTask task);

// ---------------------------------------------------------------------------
// Uniform task / episode interface used by rollouts.

struct Task {
  EnvKind kind = EnvKind::PointShaped;
  double param = 0.0;  // phi for point tasks, delta for cart-pole
};

int state_dim(EnvKind kind);
int action_dim(EnvKind kind);
int max_horizon(EnvKind kind);

Task sample_task(EnvKind kind, Rng& rng);

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
};

// One episode on one task. When `poison_rewards` is set every reward is NaN.
class Episode {
 public:
  explicit Episode(Task task, bool poison_rewards = false);

  // Initial state draws (cart-pole only) come from `rng`.
  std::vector<double> reset(Rng& rng);
  StepResult step(std::span<const double> action);

  std::vector<double> observation() const;
  int steps() const noexcept { return steps_; }
  bool done() const noexcept { return done_; }
  const Task& task() const noexcept { return task_; }

 private:
  Task task_;
  bool poison_;
  PointState point_;
  CartpoleState cart_;
  int steps_ = 0;
  bool done_ = false;
};

nlohmann::json task_to_json(const Task& task);
Task task_from_json(const nlohmann::json& j);

}  // namespace norml
