#include "norml/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "norml/errors.hpp"

namespace norml {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::PointShaped: return "point_shaped";
    case EnvKind::PointSparse: return "point_sparse";
    case EnvKind::Cartpole: return "cartpole";
  }
  return "unknown";
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "point_shaped") return EnvKind::PointShaped;
  if (name == "point_sparse") return EnvKind::PointSparse;
  if (name == "cartpole") return EnvKind::Cartpole;
  throw ContractError("unknown environment '" + name + "'");
}

PointState point_step(PointState s, std::array<double, 2> a, PointTask task) {
  const double dx = std::clamp(a[0], -1.0, 1.0);
  const double dy = std::clamp(a[1], -1.0, 1.0);
  const double c = std::cos(task.phi), sn = std::sin(task.phi);
  PointState next{s.x + c * dx - sn * dy, s.y + sn * dx + c * dy};
  next.x = std::clamp(next.x, -kPointBound, kPointBound);
  next.y = std::clamp(next.y, -kPointBound, kPointBound);
  return next;
}

double point_reward_shaped(PointState s) { return -std::hypot(s.x - 1.0, s.y); }

PointSparseStep point_step_sparse(PointState s, std::array<double, 2> a, PointTask task, int step_count) {
  PointSparseStep out;
  out.next = point_step(s, a, task);
  out.reward = -1.0;
  out.done = std::hypot(out.next.x - 1.0, out.next.y) <= kPointGoalRadius || step_count >= kPointSparseHorizon;
  return out;
}

bool cartpole_failed(const CartpoleState& s, const CartpoleConstants& c) {
  return std::abs(s.theta) > c.theta_limit || std::abs(s.x) > c.x_limit;
}

CartpoleStep cartpole_step(CartpoleState s, double force, int step_count, const CartpoleConstants& c) {
  const double f = std::clamp(force, -c.force_limit, c.force_limit);
  const double total_mass = c.mass_cart + c.mass_pole;
  const double pole_ml = c.mass_pole * c.half_length;
  const double cos_t = std::cos(s.theta), sin_t = std::sin(s.theta);
  const double temp = (f + pole_ml * s.theta_dot * s.theta_dot * sin_t) / total_mass;
  const double theta_acc = (c.gravity * sin_t - cos_t * temp) /
                           (c.half_length * (4.0 / 3.0 - c.mass_pole * cos_t * cos_t / total_mass));
  const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  CartpoleStep out;
  out.next = s;
  out.next.x_dot += c.dt * x_acc;
  out.next.x += c.dt * out.next.x_dot;
  out.next.theta_dot += c.dt * theta_acc;
  out.next.theta += c.dt * out.next.theta_dot;
  const bool failed = cartpole_failed(out.next, c);
  out.reward = failed ? 0.0 : 1.0;
  out.done = failed || step_count >= c.max_steps;
  return out;
}

std::array<double, 4> cartpole_observe(const CartpoleState& s, CartpoleTask task) {
  return {s.x, s.x_dot, s.theta + task.delta, s.theta_dot};
}

int state_dim(EnvKind kind) { return kind == EnvKind::Cartpole ? 4 : 2; }
int action_dim(EnvKind kind) { return kind == EnvKind::Cartpole ? 1 : 2; }

int max_horizon(EnvKind kind) {
  switch (kind) {
    case EnvKind::PointShaped: return kPointShapedHorizon;
    case EnvKind::PointSparse: return kPointSparseHorizon;
    case EnvKind::Cartpole: return CartpoleConstants{}.max_steps;
  }
  return 0;
}

Task sample_task(EnvKind kind, Rng& rng) {
  Task t;
  t.kind = kind;
  if (kind == EnvKind::Cartpole) {
    t.param = rng.uniform(-kMaxSensorBias, kMaxSensorBias);
  } else {
    t.param = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return t;
}

Episode::Episode(Task task, bool poison_rewards) : task_(task), poison_(poison_rewards) {}

std::vector<double> Episode::reset(Rng& rng) {
  steps_ = 0;
  done_ = false;
  point_ = {};
  cart_ = {};
  if (task_.kind == EnvKind::Cartpole) {
    cart_.x = rng.uniform(-0.05, 0.05);
    cart_.x_dot = rng.uniform(-0.05, 0.05);
    cart_.theta = rng.uniform(-0.05, 0.05);
    cart_.theta_dot = rng.uniform(-0.05, 0.05);
  }
  return observation();
}

std::vector<double> Episode::observation() const {
  if (task_.kind == EnvKind::Cartpole) {
    const auto o = cartpole_observe(cart_, CartpoleTask{task_.param});
    return {o.begin(), o.end()};
  }
  return {point_.x, point_.y};
}

StepResult Episode::step(std::span<const double> action) {
  if (done_) throw ContractError("Episode::step: episode already finished");
  if (static_cast<int>(action.size()) != action_dim(task_.kind)) {
    throw ContractError("Episode::step: action has wrong dimension");
  }
  ++steps_;
  StepResult out;
  switch (task_.kind) {
    case EnvKind::PointShaped: {
      point_ = point_step(point_, {action[0], action[1]}, PointTask{task_.param});
      out.reward = point_reward_shaped(point_);
      out.done = steps_ >= kPointShapedHorizon;
      break;
    }
    case EnvKind::PointSparse: {
      const auto r = point_step_sparse(point_, {action[0], action[1]}, PointTask{task_.param}, steps_);
      point_ = r.next;
      out.reward = r.reward;
      out.done = r.done;
      break;
    }
    case EnvKind::Cartpole: {
      const auto r = cartpole_step(cart_, action[0], steps_);
      cart_ = r.next;
      out.reward = r.reward;
      out.done = r.done;
      break;
    }
  }
  if (poison_) out.reward = std::numeric_limits<double>::quiet_NaN();
  done_ = out.done;
  out.observation = observation();
  return out;
}

nlohmann::json task_to_json(const Task& task) {
  return {{"env", to_string(task.kind)}, {"param", task.param}};
}

Task task_from_json(const nlohmann::json& j) {
  Task t;
  t.kind = env_kind_from_string(j.at("env").get<std::string>());
  t.param = j.at("param").get<double>();
  return t;
}

}  // namespace norml
