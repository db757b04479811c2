#pragma once

// Function approximators: fully connected networks, the diagonal-Gaussian
// policy and the learned advantage network.
//
// Flat parameter layout (fixed, relied on by checkpoints and the optimizer):
// layers in order from input to output; for each layer the weight matrix
// (out x in, row-major) followed by its bias vector (out). A policy's full
// parameter vector is [mean-net parameters, log standard deviations].

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "norml/errors.hpp"
#include "norml/rng.hpp"

namespace norml {

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpConfig {
  // [input, hidden..., output]; at least one hidden layer.
  std::vector<int> layer_sizes;
  Activation activation = Activation::Tanh;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  std::size_t param_count() const;
  std::size_t weight_offset(int layer) const;
  std::size_t bias_offset(int layer) const;
  void validate() const;

  bool operator==(const MlpConfig&) const = default;
};

MlpConfig make_mlp(int input_dim, std::vector<int> hidden, int output_dim, Activation act);

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

template <class P>
P activate(Activation act, const P& z) {
  using std::tanh;
  return act == Activation::Tanh ? P(tanh(z)) : P(relu(z));
}

// Straight-line forward pass, generic over the parameter scalar so the same
// code runs on doubles and on tape variables.
template <class P, class X>
std::vector<P> mlp_forward_generic(const MlpConfig& cfg, std::span<const P> params,
                                   std::span<const X> input) {
  if (static_cast<int>(input.size()) != cfg.input_dim()) {
    throw ContractError("mlp_forward: input has " + std::to_string(input.size()) +
                        " entries, network expects " + std::to_string(cfg.input_dim()));
  }
  if (params.size() != cfg.param_count()) {
    throw ContractError("mlp_forward: parameter vector has wrong length");
  }
  std::vector<P> current;
  const int layers = cfg.num_layers();
  for (int l = 0; l < layers; ++l) {
    const int in = cfg.layer_sizes[static_cast<std::size_t>(l)];
    const int out = cfg.layer_sizes[static_cast<std::size_t>(l) + 1];
    const std::size_t w = cfg.weight_offset(l);
    const std::size_t b = cfg.bias_offset(l);
    std::vector<P> next;
    next.reserve(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      P acc = params[b + static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) {
        const P& weight = params[w + static_cast<std::size_t>(o * in + i)];
        if (l == 0) {
          acc = acc + weight * input[static_cast<std::size_t>(i)];
        } else {
          acc = acc + weight * current[static_cast<std::size_t>(i)];
        }
      }
      next.push_back(l + 1 < layers ? activate(cfg.activation, acc) : acc);
    }
    current = std::move(next);
  }
  return current;
}

std::vector<double> mlp_forward(std::span<const double> params, const MlpConfig& cfg,
                                std::span<const double> input);

// ---------------------------------------------------------------------------
// Gaussian policy: N(f(s | mean), diag(exp(log_std))^2).

struct PolicyParams {
  MlpConfig mean_net;
  std::vector<double> mean;
  std::vector<double> log_std;

  int state_dim() const { return mean_net.input_dim(); }
  int action_dim() const { return mean_net.output_dim(); }
  std::size_t size() const { return mean.size() + log_std.size(); }

  std::vector<double> flat() const;
  static PolicyParams from_flat(const MlpConfig& mean_net, std::span<const double> flat);
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Sum over action dimensions of -(a-mu)^2 / (2 exp(2 sigma)) - sigma - log(2 pi)/2.
// `theta` is the flat policy vector.
template <class P>
P log_prob_generic(const MlpConfig& mean_net, std::span<const P> theta,
                   std::span<const double> s, std::span<const double> a) {
  using std::exp;
  const std::size_t nm = mean_net.param_count();
  const auto mu = mlp_forward_generic<P, double>(mean_net, theta.first(nm), s);
  if (a.size() != mu.size() || theta.size() != nm + mu.size()) {
    throw ContractError("log_prob: action or parameter shape mismatch");
  }
  auto term = [&](std::size_t d) -> P {
    const P& sigma = theta[nm + d];
    const P diff = a[d] - mu[d];
    return -((diff * diff) / (2.0 * exp(2.0 * sigma))) - sigma - kHalfLog2Pi;
  };
  P total = term(0);
  for (std::size_t d = 1; d < mu.size(); ++d) total = total + term(d);
  return total;
}

std::vector<double> policy_mean(const PolicyParams& policy, std::span<const double> s);
double log_prob(const PolicyParams& policy, std::span<const double> s, std::span<const double> a);
std::vector<double> sample_action(const PolicyParams& policy, std::span<const double> s, Rng& rng);

// ---------------------------------------------------------------------------
// Learned advantage A(s, a, s') -> scalar.

// Invariant: net.input_dim() == 2 * state_dim + action_dim.
struct AdvantageParams {
  MlpConfig net;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> psi;
};

MlpConfig advantage_config(int state_dim, int action_dim, std::vector<int> hidden);
void validate(const AdvantageParams& adv);

// Concatenates (s, a, s') into the network input.
std::vector<double> advantage_input(std::span<const double> s, std::span<const double> a,
                                    std::span<const double> s_next);
double advantage_forward(const AdvantageParams& adv, std::span<const double> s,
                         std::span<const double> a, std::span<const double> s_next);

// ---------------------------------------------------------------------------
// Initialization: weights ~ U(-b, b) with b = gain * sqrt(3 / fan_in), so the
// weight standard deviation is gain / sqrt(fan_in); biases are zero.

struct InitScheme {
  double hidden_gain = 1.0;
  double output_gain = 1.0;
};

double init_weight_scale(const MlpConfig& cfg, int layer, const InitScheme& scheme);
std::vector<double> init_params(const MlpConfig& cfg, Rng& rng, const InitScheme& scheme = {});
PolicyParams init_policy(const MlpConfig& mean_net, double log_std_init, Rng& rng,
                         const InitScheme& scheme = {});
AdvantageParams init_advantage(int state_dim, int action_dim, std::vector<int> hidden, Rng& rng,
                               const InitScheme& scheme = {});

// ---------------------------------------------------------------------------
// Serialization: {"format": "norml-params", "version": 1, "layer_sizes": [...],
// "activation": "tanh"|"relu", "params": [...]}. Doubles round-trip exactly.

nlohmann::json mlp_config_to_json(const MlpConfig& cfg);
MlpConfig mlp_config_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const MlpConfig& cfg, std::span<const double> params);
std::vector<double> params_from_json(const nlohmann::json& j, MlpConfig* cfg_out);

}  // namespace norml
