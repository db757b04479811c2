#pragma once

// Observed advantages: discounted returns minus a per-task linear value fit
// on the features [1, s, s*s, t/H, (t/H)^2, (t/H)^3].

#include <span>
#include <vector>

#include "norml/rollout.hpp"

namespace norml {

inline constexpr double kValueRidge = 1e-5;

struct ValueFit {
  std::vector<double> coefficients;
  double gamma = 0.99;
  int horizon = 1;
  int state_dim = 0;

  double predict(std::span<const double> s, int t) const;
};

int value_feature_dim(int state_dim);
std::vector<double> value_features(std::span<const double> s, int t, int horizon);

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// Ridge least squares of discounted returns on the feature map. `horizon`
// normalizes the time features.
ValueFit fit_value(std::span<const Trajectory> trajectories, double gamma, int horizon);

std::vector<double> observed_advantage(const Trajectory& trajectory, const ValueFit& fit);

// Advantages of all trajectories concatenated in transition order.
std::vector<double> observed_advantages(std::span<const Trajectory> trajectories, const ValueFit& fit);

// Zero mean, unit (population) standard deviation with a 1e-8 floor.
// Inputs with fewer than two entries are returned unchanged.
std::vector<double> standardize(std::span<const double> values);

}  // namespace norml
