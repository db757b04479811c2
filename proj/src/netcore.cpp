#include "norml/netcore.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

namespace norml {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ContractError("unknown activation '" + name + "'");
}

std::size_t MlpConfig::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<std::size_t>(layer_sizes[l + 1]) * (static_cast<std::size_t>(layer_sizes[l]) + 1);
  }
  return n;
}

std::size_t MlpConfig::weight_offset(int layer) const {
  std::size_t n = 0;
  for (int l = 0; l < layer; ++l) {
    const auto i = static_cast<std::size_t>(l);
    n += static_cast<std::size_t>(layer_sizes[i + 1]) * (static_cast<std::size_t>(layer_sizes[i]) + 1);
  }
  return n;
}

std::size_t MlpConfig::bias_offset(int layer) const {
  const auto i = static_cast<std::size_t>(layer);
  return weight_offset(layer) +
         static_cast<std::size_t>(layer_sizes[i + 1]) * static_cast<std::size_t>(layer_sizes[i]);
}

void MlpConfig::validate() const {
  if (layer_sizes.size() < 3) {
    throw ContractError("MlpConfig: need input, at least one hidden layer, and output");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ContractError("MlpConfig: layer sizes must be >= 1");
  }
}

MlpConfig make_mlp(int input_dim, std::vector<int> hidden, int output_dim, Activation act) {
  MlpConfig cfg;
  cfg.layer_sizes.push_back(input_dim);
  cfg.layer_sizes.insert(cfg.layer_sizes.end(), hidden.begin(), hidden.end());
  cfg.layer_sizes.push_back(output_dim);
  cfg.activation = act;
  cfg.validate();
  return cfg;
}

std::vector<double> mlp_forward(std::span<const double> params, const MlpConfig& cfg,
                                std::span<const double> input) {
  return mlp_forward_generic<double, double>(cfg, params, input);
}

std::vector<double> PolicyParams::flat() const {
  std::vector<double> out;
  out.reserve(size());
  out.insert(out.end(), mean.begin(), mean.end());
  out.insert(out.end(), log_std.begin(), log_std.end());
  return out;
}

PolicyParams PolicyParams::from_flat(const MlpConfig& mean_net, std::span<const double> flat) {
  const std::size_t nm = mean_net.param_count();
  const auto na = static_cast<std::size_t>(mean_net.output_dim());
  if (flat.size() != nm + na) {
    throw ContractError("PolicyParams::from_flat: expected " + std::to_string(nm + na) +
                        " values, got " + std::to_string(flat.size()));
  }
  PolicyParams p;
  p.mean_net = mean_net;
  p.mean.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(nm));
  p.log_std.assign(flat.begin() + static_cast<std::ptrdiff_t>(nm), flat.end());
  return p;
}

std::vector<double> policy_mean(const PolicyParams& policy, std::span<const double> s) {
  return mlp_forward(policy.mean, policy.mean_net, s);
}

double log_prob(const PolicyParams& policy, std::span<const double> s, std::span<const double> a) {
  const auto theta = policy.flat();
  return log_prob_generic<double>(policy.mean_net, theta, s, a);
}

std::vector<double> sample_action(const PolicyParams& policy, std::span<const double> s, Rng& rng) {
  auto a = policy_mean(policy, s);
  for (std::size_t d = 0; d < a.size(); ++d) a[d] += std::exp(policy.log_std[d]) * rng.normal();
  return a;
}

MlpConfig advantage_config(int state_dim, int action_dim, std::vector<int> hidden) {
  return make_mlp(2 * state_dim + action_dim, std::move(hidden), 1, Activation::Relu);
}

void validate(const AdvantageParams& adv) {
  adv.net.validate();
  if (adv.net.input_dim() != 2 * adv.state_dim + adv.action_dim || adv.net.output_dim() != 1) {
    throw ContractError("AdvantageParams: network must map 2*state_dim + action_dim inputs to 1 output");
  }
  if (adv.psi.size() != adv.net.param_count()) {
    throw ContractError("AdvantageParams: psi has wrong length");
  }
}

std::vector<double> advantage_input(std::span<const double> s, std::span<const double> a,
                                    std::span<const double> s_next) {
  std::vector<double> x;
  x.reserve(s.size() * 2 + a.size());
  x.insert(x.end(), s.begin(), s.end());
  x.insert(x.end(), a.begin(), a.end());
  x.insert(x.end(), s_next.begin(), s_next.end());
  return x;
}

double advantage_forward(const AdvantageParams& adv, std::span<const double> s,
                         std::span<const double> a, std::span<const double> s_next) {
  if (static_cast<int>(s.size()) != adv.state_dim || static_cast<int>(s_next.size()) != adv.state_dim ||
      static_cast<int>(a.size()) != adv.action_dim) {
    throw ContractError("advantage_forward: (s, a, s') dimensions do not match the network");
  }
  const auto x = advantage_input(s, a, s_next);
  return mlp_forward(adv.psi, adv.net, x)[0];
}

double init_weight_scale(const MlpConfig& cfg, int layer, const InitScheme& scheme) {
  const double gain = layer + 1 == cfg.num_layers() ? scheme.output_gain : scheme.hidden_gain;
  return gain / std::sqrt(static_cast<double>(cfg.layer_sizes[static_cast<std::size_t>(layer)]));
}

std::vector<double> init_params(const MlpConfig& cfg, Rng& rng, const InitScheme& scheme) {
  cfg.validate();
  std::vector<double> p(cfg.param_count(), 0.0);
  for (int l = 0; l < cfg.num_layers(); ++l) {
    const double bound = std::sqrt(3.0) * init_weight_scale(cfg, l, scheme);
    const std::size_t begin = cfg.weight_offset(l);
    const std::size_t end = cfg.bias_offset(l);
    for (std::size_t i = begin; i < end; ++i) p[i] = rng.uniform(-bound, bound);
  }
  return p;
}

PolicyParams init_policy(const MlpConfig& mean_net, double log_std_init, Rng& rng,
                         const InitScheme& scheme) {
  PolicyParams p;
  p.mean_net = mean_net;
  p.mean = init_params(mean_net, rng, scheme);
  p.log_std.assign(static_cast<std::size_t>(mean_net.output_dim()), log_std_init);
  return p;
}

AdvantageParams init_advantage(int state_dim, int action_dim, std::vector<int> hidden, Rng& rng,
                               const InitScheme& scheme) {
  AdvantageParams a;
  a.net = advantage_config(state_dim, action_dim, std::move(hidden));
  a.state_dim = state_dim;
  a.action_dim = action_dim;
  a.psi = init_params(a.net, rng, scheme);
  return a;
}

nlohmann::json mlp_config_to_json(const MlpConfig& cfg) {
  return {{"layer_sizes", cfg.layer_sizes}, {"activation", to_string(cfg.activation)}};
}

MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig cfg;
  cfg.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  cfg.activation = activation_from_string(j.at("activation").get<std::string>());
  cfg.validate();
  return cfg;
}

nlohmann::json params_to_json(const MlpConfig& cfg, std::span<const double> params) {
  if (params.size() != cfg.param_count()) throw ContractError("params_to_json: wrong length");
  nlohmann::json j = mlp_config_to_json(cfg);
  j["format"] = "norml-params";
  j["version"] = 1;
  j["params"] = std::vector<double>(params.begin(), params.end());
  return j;
}

std::vector<double> params_from_json(const nlohmann::json& j, MlpConfig* cfg_out) {
  if (j.value("format", "") != "norml-params" || j.value("version", 0) != 1) {
    throw ContractError("params_from_json: not a version-1 norml-params document");
  }
  MlpConfig cfg = mlp_config_from_json(j);
  auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != cfg.param_count()) {
    throw ContractError("params_from_json: parameter count does not match layer sizes");
  }
  if (cfg_out != nullptr) *cfg_out = cfg;
  return params;
}

}  // namespace norml
