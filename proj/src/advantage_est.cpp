#include "norml/advantage_est.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace norml {

int value_feature_dim(int state_dim) { return 2 * state_dim + 4; }

std::vector<double> value_features(std::span<const double> s, int t, int horizon) {
  const double u = static_cast<double>(t) / static_cast<double>(horizon);
  std::vector<double> f;
  f.reserve(2 * s.size() + 4);
  f.push_back(1.0);
  f.insert(f.end(), s.begin(), s.end());
  for (double x : s) f.push_back(x * x);
  f.push_back(u);
  f.push_back(u * u);
  f.push_back(u * u * u);
  return f;
}

double ValueFit::predict(std::span<const double> s, int t) const {
  const auto f = value_features(s, t, horizon);
  double v = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) v += f[i] * coefficients[i];
  return v;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("discounted_returns: gamma must be in (0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

ValueFit fit_value(std::span<const Trajectory> trajectories, double gamma, int horizon) {
  if (trajectories.empty()) throw ContractError("fit_value: need at least one trajectory");
  if (horizon < 1) throw ContractError("fit_value: horizon must be >= 1");
  ValueFit fit;
  fit.gamma = gamma;
  fit.horizon = horizon;
  fit.state_dim = trajectories.front().state_dim;
  const int p = value_feature_dim(fit.state_dim);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (const auto& traj : trajectories) {
    if (!traj.has_rewards()) throw ContractError("fit_value: trajectory without rewards");
    const auto returns = discounted_returns(traj.rewards, gamma);
    for (int t = 0; t < traj.steps(); ++t) {
      const auto f = value_features(traj.state(t), t, horizon);
      const Eigen::Map<const Eigen::VectorXd> x(f.data(), p);
      gram.noalias() += x * x.transpose();
      rhs += returns[static_cast<std::size_t>(t)] * x;
    }
  }
  gram.diagonal().array() += kValueRidge;
  const Eigen::VectorXd c = gram.ldlt().solve(rhs);
  fit.coefficients.assign(c.data(), c.data() + p);
  return fit;
}

std::vector<double> observed_advantage(const Trajectory& trajectory, const ValueFit& fit) {
  if (!trajectory.has_rewards()) throw ContractError("observed_advantage: trajectory without rewards");
  auto adv = discounted_returns(trajectory.rewards, fit.gamma);
  for (int t = 0; t < trajectory.steps(); ++t) adv[static_cast<std::size_t>(t)] -= fit.predict(trajectory.state(t), t);
  return adv;
}

std::vector<double> observed_advantages(std::span<const Trajectory> trajectories, const ValueFit& fit) {
  std::vector<double> out;
  for (const auto& t : trajectories) {
    const auto a = observed_advantage(t, fit);
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

std::vector<double> standardize(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  if (out.size() < 2) return out;
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(out.size());
  double var = 0.0;
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(out.size())), 1e-8);
  for (double& v : out) v = (v - mean) / sd;
  return out;
}

}  // namespace norml
