#include "norml/meta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "norml/errors.hpp"
#include "norml/kernels.hpp"

namespace norml {

using kernels::Matrix;
using kernels::Vector;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Maml: return "maml";
    case Variant::Norml: return "norml";
    case Variant::NormlNoOffset: return "norml_no_offset";
    case Variant::NormlNoLaf: return "norml_no_laf";
    case Variant::DomainRandomization: return "dr";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  for (auto v : {Variant::Maml, Variant::Norml, Variant::NormlNoOffset, Variant::NormlNoLaf,
                 Variant::DomainRandomization}) {
    if (to_string(v) == name) return v;
  }
  throw ContractError("unknown variant '" + name + "'");
}

VariantTraits traits(Variant v) {
  switch (v) {
    case Variant::Maml: return {true, false, false, 1.0};
    case Variant::Norml: return {true, true, true, -1.0};
    case Variant::NormlNoOffset: return {true, true, false, -1.0};
    case Variant::NormlNoLaf: return {true, false, true, 1.0};
    case Variant::DomainRandomization: return {false, false, false, 1.0};
  }
  return {};
}

std::vector<double> MetaParams::stack() const {
  std::vector<double> out = theta.flat();
  out.reserve(stack_size());
  out.insert(out.end(), offset.begin(), offset.end());
  out.insert(out.end(), alpha.begin(), alpha.end());
  out.insert(out.end(), psi.psi.begin(), psi.psi.end());
  return out;
}

void MetaParams::set_stack(std::span<const double> stack) {
  if (stack.size() != stack_size()) throw ContractError("MetaParams::set_stack: wrong length");
  const std::size_t n = theta.size();
  theta = PolicyParams::from_flat(theta.mean_net, stack.first(n));
  offset.assign(stack.begin() + static_cast<std::ptrdiff_t>(n), stack.begin() + static_cast<std::ptrdiff_t>(2 * n));
  alpha.assign(stack.begin() + static_cast<std::ptrdiff_t>(2 * n), stack.begin() + static_cast<std::ptrdiff_t>(3 * n));
  psi.psi.assign(stack.begin() + static_cast<std::ptrdiff_t>(3 * n), stack.end());
}

MetaParams init_meta_params(const MetaInit& init, Variant variant, Rng& rng) {
  MetaParams p;
  Rng policy_rng = rng.split(0);
  Rng adv_rng = rng.split(1);
  const int sd = state_dim(init.env), ad = action_dim(init.env);
  p.theta = init_policy(make_mlp(sd, init.policy_hidden, ad, Activation::Tanh), init.log_std_init, policy_rng,
                        init.policy_scheme);
  p.psi = init_advantage(sd, ad, init.advantage_hidden, adv_rng, init.advantage_scheme);
  p.offset.assign(p.theta.size(), 0.0);
  p.alpha.assign(p.theta.size(), traits(variant).adapts ? init.alpha_init : 0.0);
  p.beta = init.beta;
  return p;
}

std::vector<char> trainable_mask(const MetaParams& params, Variant variant) {
  const auto tr = traits(variant);
  const std::size_t n = params.theta_size();
  std::vector<char> mask(params.stack_size(), 0);
  std::fill_n(mask.begin(), n, 1);
  if (tr.offset) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(n), n, 1);
  if (tr.adapts) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(2 * n), n, 1);
  if (tr.learned_advantage) std::fill(mask.begin() + static_cast<std::ptrdiff_t>(3 * n), mask.end(), 1);
  return mask;
}

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw ContractError("ppo.clip must be in (0, 1)");
  if (epochs < 1) throw ContractError("ppo.epochs must be >= 1");
}

void adam_step(std::span<double> stack, std::span<const double> grads, AdamState& state, double beta) {
  if (grads.size() != stack.size()) throw ContractError("adam_step: gradient length mismatch");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(stack.size(), 0.0);
    state.v.assign(stack.size(), 0.0);
  }
  if (state.m.size() != stack.size() || state.v.size() != stack.size()) {
    throw ContractError("adam_step: state length mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < stack.size(); ++i) {
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grads[i];
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    stack[i] -= beta * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
  }
}

// ---------------------------------------------------------------------------

namespace {

// Gaussian policy quantities on a batch of (s, a) columns.
struct GaussianEval {
  kernels::MlpTrace trace;
  Matrix gmu;  // d log pi / d mu = (a - mu) exp(-2 sigma)
  Matrix z2;   // (a - mu)^2 exp(-2 sigma)
  Vector inv_var;
  Vector logp;
};

void eval_gaussian(const PolicyParams& p, const Matrix& states, const Matrix& actions, GaussianEval& g) {
  kernels::forward(p.mean_net, p.mean, states, g.trace);
  const Matrix& mu = g.trace.h.back();
  const Matrix diff = actions - mu;
  const auto ad = static_cast<Eigen::Index>(p.log_std.size());
  g.inv_var.resize(ad);
  for (Eigen::Index d = 0; d < ad; ++d) g.inv_var(d) = std::exp(-2.0 * p.log_std[static_cast<std::size_t>(d)]);
  g.gmu = g.inv_var.asDiagonal() * diff;
  g.z2 = diff.cwiseProduct(g.gmu);
  kernels::gaussian_log_prob(mu, p.log_std, actions, g.logp);
}

Eigen::Map<const Eigen::RowVectorXd> as_row(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// sum_t w_t grad log pi_t from an evaluated batch.
std::vector<double> score_from(const PolicyParams& p, const GaussianEval& g, std::span<const double> w) {
  const std::size_t nm = p.mean.size();
  std::vector<double> u(p.size(), 0.0);
  const auto wr = as_row(w);
  const Matrix d_out = g.gmu.array().rowwise() * wr.array();
  kernels::backward(p.mean_net, p.mean, g.trace, d_out, std::span<double>(u).first(nm));
  for (Eigen::Index d = 0; d < g.z2.rows(); ++d) {
    u[nm + static_cast<std::size_t>(d)] = ((g.z2.row(d).array() - 1.0) * wr.array()).sum();
  }
  return u;
}

Matrix advantage_inputs(const TransitionSet& data) {
  Matrix x(2 * data.state_dim + data.action_dim, data.size());
  x << data.states, data.actions, data.next_states;
  return x;
}

std::vector<double> inner_weights(const MetaParams& params, const VariantTraits& tr, const TaskBatch& batch) {
  if (tr.learned_advantage) return learned_advantages(params.psi, batch.train);
  if (static_cast<Eigen::Index>(batch.train_advantages.size()) != batch.train.size()) {
    throw ContractError("task batch: observed inner advantages missing or misaligned");
  }
  return batch.train_advantages;
}

std::span<const double> offset_or_empty(const MetaParams& params, const VariantTraits& tr) {
  return tr.offset ? std::span<const double>(params.offset) : std::span<const double>();
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::vector<double> score_sum(const PolicyParams& theta, const TransitionSet& data, std::span<const double> weights) {
  if (static_cast<Eigen::Index>(weights.size()) != data.size()) throw ContractError("score_sum: one weight per transition");
  GaussianEval g;
  eval_gaussian(theta, data.states, data.actions, g);
  return score_from(theta, g, weights);
}

std::vector<double> learned_advantages(const AdvantageParams& adv, const TransitionSet& data) {
  if (data.size() == 0) return {};
  kernels::MlpTrace trace;
  kernels::forward(adv.net, adv.psi, advantage_inputs(data), trace);
  const Matrix& out = trace.h.back();
  return {out.data(), out.data() + out.cols()};
}

PolicyParams inner_step(const PolicyParams& theta, std::span<const double> offset, std::span<const double> alpha,
                        double sign, std::span<const double> u) {
  auto flat = theta.flat();
  if (alpha.size() != flat.size() || u.size() != flat.size() || (!offset.empty() && offset.size() != flat.size())) {
    throw ContractError("inner_step: vector lengths do not match theta");
  }
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (!offset.empty()) flat[i] += offset[i];
    flat[i] += sign * alpha[i] * u[i];
  }
  return PolicyParams::from_flat(theta.mean_net, flat);
}

PolicyParams inner_adapt_maml(const PolicyParams& theta, std::span<const double> alpha,
                              std::span<const Trajectory> d_train, const ValueFit& fit) {
  for (const auto& t : d_train) {
    if (!t.has_rewards()) throw ContractError("inner_adapt_maml: trajectories must carry rewards");
  }
  const auto advantages = observed_advantages(d_train, fit);
  const auto u = score_sum(theta, strip_rewards(d_train), advantages);
  return inner_step(theta, {}, alpha, 1.0, u);
}

PolicyParams inner_adapt_norml(const PolicyParams& theta, std::span<const double> offset,
                               std::span<const double> alpha, const AdvantageParams& psi,
                               const TransitionSet& d_train) {
  const auto w = learned_advantages(psi, d_train);
  const auto u = score_sum(theta, d_train, w);
  return inner_step(theta, offset, alpha, -1.0, u);
}

double meta_objective(const PolicyParams& theta_i, const TransitionSet& d_test, std::span<const double> advantages,
                      std::span<const double> behavior_log_probs, const PpoConfig& ppo) {
  const auto n = static_cast<std::size_t>(d_test.size());
  if (advantages.size() != n || behavior_log_probs.size() != n) {
    throw ContractError("meta_objective: advantages and log-probs must align with transitions");
  }
  if (n == 0) return 0.0;
  GaussianEval g;
  eval_gaussian(theta_i, d_test.states, d_test.actions, g);
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double rho = std::exp(g.logp(static_cast<Eigen::Index>(t)) - behavior_log_probs[t]);
    const double clipped = std::clamp(rho, 1.0 - ppo.clip, 1.0 + ppo.clip);
    loss -= std::min(rho * advantages[t], clipped * advantages[t]);
  }
  return loss;
}

PolicyParams adapted_for_batch(const MetaParams& params, Variant variant, const TaskBatch& batch) {
  const auto tr = traits(variant);
  if (!tr.adapts) return params.theta;
  const auto w = inner_weights(params, tr, batch);
  const auto u = score_sum(params.theta, batch.train, w);
  return inner_step(params.theta, offset_or_empty(params, tr), params.alpha, tr.inner_sign, u);
}

MetaGradient task_gradient(const MetaParams& params, Variant variant, const TaskBatch& batch, const PpoConfig& ppo,
                           const GradientOptions& options) {
  const auto tr = traits(variant);
  const PolicyParams& theta = params.theta;
  const std::size_t n = theta.size();
  const std::size_t nm = theta.mean.size();
  const auto ad = static_cast<Eigen::Index>(theta.log_std.size());

  MetaGradient out;
  out.grad.assign(params.stack_size(), 0.0);

  std::vector<double> w, u;
  GaussianEval inner;
  PolicyParams theta_i = theta;
  if (tr.adapts) {
    w = inner_weights(params, tr, batch);
    eval_gaussian(theta, batch.train.states, batch.train.actions, inner);
    u = score_from(theta, inner, w);
    theta_i = inner_step(theta, offset_or_empty(params, tr), params.alpha, tr.inner_sign, u);
  }

  // Outer clipped surrogate at theta_i and its gradient G = dL / d theta_i.
  const auto nt = static_cast<std::size_t>(batch.test.size());
  if (batch.test_advantages.size() != nt || batch.behavior_log_probs.size() != nt) {
    throw ContractError("task batch: test advantages and log-probs must align with transitions");
  }
  std::vector<double> G(n, 0.0);
  if (nt > 0) {
    GaussianEval outer;
    eval_gaussian(theta_i, batch.test.states, batch.test.actions, outer);
    std::vector<double> c(nt, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
      const double a = batch.test_advantages[t];
      const double rho = std::exp(outer.logp(static_cast<Eigen::Index>(t)) - batch.behavior_log_probs[t]);
      const double clipped = std::clamp(rho, 1.0 - ppo.clip, 1.0 + ppo.clip);
      const double plain = rho * a;
      const double capped = clipped * a;
      out.loss -= std::min(plain, capped);
      // The ratio only carries gradient when the unclipped term is selected.
      if (plain <= capped) c[t] = -a * rho;
    }
    const auto cr = as_row(c);
    const Matrix d_out = outer.gmu.array().rowwise() * cr.array();
    kernels::backward(theta_i.mean_net, theta_i.mean, outer.trace, d_out, std::span<double>(G).first(nm));
    for (Eigen::Index d = 0; d < ad; ++d) {
      G[nm + static_cast<std::size_t>(d)] = ((outer.z2.row(d).array() - 1.0) * cr.array()).sum();
    }
  }

  std::copy(G.begin(), G.end(), out.grad.begin());
  if (!tr.adapts || batch.train.size() == 0) return out;

  const double sign = tr.inner_sign;
  if (tr.offset) std::copy(G.begin(), G.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad[2 * n + i] = sign * G[i] * u[i];
    v[i] = params.alpha[i] * G[i];
  }

  // Directional derivatives of the inner batch along v.
  std::vector<Matrix> r_h;
  kernels::rop_forward(theta.mean_net, theta.mean, std::span<const double>(v).first(nm), inner.trace, r_h);
  const Matrix& r_mu = r_h.back();
  const Eigen::Map<const Vector> v_sigma(v.data() + nm, ad);

  if (options.second_order) {
    // H v for J = sum_t w_t log pi_t.
    const auto wr = as_row(w);
    const Matrix r_gmu = -(inner.inv_var.asDiagonal() * r_mu) - 2.0 * (v_sigma.asDiagonal() * inner.gmu);
    const Matrix d_out = inner.gmu.array().rowwise() * wr.array();
    const Matrix r_d_out = r_gmu.array().rowwise() * wr.array();
    std::vector<double> hv(n, 0.0);
    kernels::rop_backward(theta.mean_net, theta.mean, std::span<const double>(v).first(nm), inner.trace, r_h, d_out,
                          r_d_out, {}, std::span<double>(hv).first(nm));
    for (Eigen::Index d = 0; d < ad; ++d) {
      const auto r_gsig = -2.0 * inner.gmu.row(d).array() * r_mu.row(d).array() - 2.0 * v_sigma(d) * inner.z2.row(d).array();
      hv[nm + static_cast<std::size_t>(d)] = (r_gsig * wr.array()).sum();
    }
    for (std::size_t i = 0; i < n; ++i) out.grad[i] += sign * hv[i];
  }

  if (tr.learned_advantage) {
    // dL / dw_t = sign * <v, grad log pi_t>.
    Eigen::RowVectorXd vg = inner.gmu.cwiseProduct(r_mu).colwise().sum();
    for (Eigen::Index d = 0; d < ad; ++d) vg += v_sigma(d) * (inner.z2.row(d).array() - 1.0).matrix();
    vg *= sign;
    kernels::MlpTrace adv_trace;
    kernels::forward(params.psi.net, params.psi.psi, advantage_inputs(batch.train), adv_trace);
    kernels::backward(params.psi.net, params.psi.psi, adv_trace, vg,
                      std::span<double>(out.grad).subspan(3 * n));
  }
  return out;
}

MetaGradient meta_gradient(const MetaParams& params, Variant variant, std::span<const TaskBatch> tasks,
                           const PpoConfig& ppo, const GradientOptions& options) {
  std::vector<MetaGradient> parts(tasks.size());
  std::vector<std::string> errors(tasks.size());
  const auto count = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    try {
      parts[ui] = task_gradient(params, variant, tasks[ui], ppo, options);
    } catch (const std::exception& e) {
      errors[ui] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw ContractError("meta_gradient: task " + std::to_string(i) + ": " + errors[i]);
  }
  MetaGradient total;
  total.grad.assign(params.stack_size(), 0.0);
  for (const auto& p : parts) {
    total.loss += p.loss;
    for (std::size_t k = 0; k < total.grad.size(); ++k) total.grad[k] += p.grad[k];
  }
  const auto mask = trainable_mask(params, variant);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) total.grad[k] = 0.0;
  }
  return total;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (iterations < 0) throw ContractError("iterations must be >= 0");
  if (tasks_per_iteration < 1) throw ContractError("tasks_per_iteration must be >= 1");
  if (rollouts < 1) throw ContractError("rollouts must be >= 1");
  if (horizon < 0) throw ContractError("horizon must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must be in (0, 1]");
  if (eval_tasks < 0) throw ContractError("eval_tasks must be >= 0");
  if (eval_every < 0) throw ContractError("eval_every must be >= 0");
  ppo.validate();
}

PolicyParams adapt(const MetaParams& params, Variant variant, std::span<const Trajectory> meta_rollouts,
                   double gamma, int horizon) {
  const auto tr = traits(variant);
  if (!tr.adapts) return params.theta;
  TaskBatch batch;
  batch.train = strip_rewards(meta_rollouts);
  if (!tr.learned_advantage) {
    const auto fit = fit_value(meta_rollouts, gamma, horizon);
    batch.train_advantages = observed_advantages(meta_rollouts, fit);
  }
  return adapted_for_batch(params, variant, batch);
}

PolicyParams fine_tune(const MetaParams& params, Variant variant, const Task& task, int K, int horizon,
                       double gamma, const Rng& rng, const CollectOptions& options) {
  const auto rollouts = collect(params.theta, task, K, horizon, rng, options);
  return adapt(params, variant, rollouts, gamma, horizon);
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

}  // namespace

EvalSummary evaluate_heldout(const MetaParams& params, Variant variant, EnvKind env, int n_tasks, int K,
                             int horizon, double gamma, const Rng& rng) {
  EvalSummary s;
  if (n_tasks <= 0) return s;
  Rng task_rng = rng.split(0);
  for (int i = 0; i < n_tasks; ++i) s.tasks.push_back(sample_task(env, task_rng));
  s.pre_returns.assign(static_cast<std::size_t>(n_tasks), 0.0);
  s.post_returns.assign(static_cast<std::size_t>(n_tasks), 0.0);
  std::vector<std::string> errors(static_cast<std::size_t>(n_tasks));
  const Rng rollouts = rng.split(1);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_tasks; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    try {
      const Rng r = rollouts.split(ui);
      const auto pre = collect(params.theta, s.tasks[ui], K, horizon, r);
      const auto theta_i = adapt(params, variant, pre, gamma, horizon);
      const auto post = collect(theta_i, s.tasks[ui], K, horizon, r);
      s.pre_returns[ui] = mean_return(pre);
      s.post_returns[ui] = mean_return(post);
    } catch (const std::exception& e) {
      errors[ui] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("evaluate_heldout: task " + std::to_string(i) + ": " + errors[i]);
  }
  mean_std(s.pre_returns, s.pre_mean, s.pre_std);
  mean_std(s.post_returns, s.post_mean, s.post_std);
  return s;
}

TaskBatch build_task_batch(const MetaParams& params, Variant variant, const Task& task, int K, int horizon,
                           double gamma, const Rng& train_rng, const Rng& test_rng) {
  const auto tr = traits(variant);
  TaskBatch batch;
  PolicyParams theta_i = params.theta;
  if (tr.adapts) {
    CollectOptions opts;
    opts.record_rewards = !tr.learned_advantage;
    const auto train = collect(params.theta, task, K, horizon, train_rng, opts);
    batch.train = strip_rewards(train);
    if (!tr.learned_advantage) batch.train_advantages = observed_advantages(train, fit_value(train, gamma, horizon));
    theta_i = adapted_for_batch(params, variant, batch);
  }
  const auto test = collect(theta_i, task, K, horizon, test_rng);
  batch.test = strip_rewards(test);
  batch.test_advantages = standardize(observed_advantages(test, fit_value(test, gamma, horizon)));
  batch.behavior_log_probs = stacked_log_probs(test);
  return batch;
}

namespace {

[[noreturn]] void abort_numeric(const char* what, int iteration, const MetaParams& params) {
  auto norm = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const auto flat = params.theta.flat();
  std::ostringstream msg;
  msg << what << " at iteration " << iteration << "; parameter norms: theta=" << norm(flat)
      << " theta_offset=" << norm(params.offset) << " alpha=" << norm(params.alpha) << " psi=" << norm(params.psi.psi);
  throw NumericAbort(msg.str(), iteration);
}

}  // namespace

TrainResult meta_train_from(const TrainConfig& config, MetaParams params, AdamState adam, int first_iteration,
                            const Rng& rng, const IterationCallback& on_iteration) {
  config.validate();
  const int H = config.effective_horizon();
  const int n_tasks = config.tasks_per_iteration;
  const Rng train_root = rng.split(kTrainStream);
  const Rng eval_root = rng.split(kEvalStream);
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  for (int it = first_iteration; it < config.iterations; ++it) {
    const Rng iter = train_root.split(static_cast<std::uint64_t>(it));
    Rng task_rng = iter.split(0);
    std::vector<Task> tasks;
    for (int i = 0; i < n_tasks; ++i) tasks.push_back(sample_task(config.env, task_rng));

    std::vector<TaskBatch> batches(static_cast<std::size_t>(n_tasks));
    std::vector<std::string> errors(static_cast<std::size_t>(n_tasks));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_tasks; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      try {
        batches[ui] = build_task_batch(params, config.variant, tasks[ui], config.rollouts, H, config.gamma,
                                       iter.split(1).split(ui), iter.split(2).split(ui));
      } catch (const std::exception& e) {
        errors[ui] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) abort_numeric(("rollout failure (" + e + ")").c_str(), it, params);
    }

    for (int epoch = 0; epoch < config.ppo.epochs; ++epoch) {
      const auto g = meta_gradient(params, config.variant, batches, config.ppo, GradientOptions{config.second_order});
      if (!std::isfinite(g.loss) || !all_finite(g.grad)) abort_numeric("non-finite meta-gradient", it, params);
      auto stack = params.stack();
      adam_step(stack, g.grad, adam, params.beta);
      params.set_stack(stack);
      if (!all_finite(stack)) abort_numeric("non-finite parameters", it, params);
    }

    const bool last = it + 1 == config.iterations;
    if (config.eval_every > 0 && ((it + 1) % config.eval_every == 0 || last)) {
      const auto s = evaluate_heldout(params, config.variant, config.env, config.eval_tasks, config.rollouts, H,
                                      config.gamma, eval_root);
      CurveRecord rec;
      rec.iteration = it + 1;
      rec.pre_mean = s.pre_mean;
      rec.pre_std = s.pre_std;
      rec.post_mean = s.post_mean;
      rec.post_std = s.post_std;
      rec.pre_returns = s.pre_returns;
      rec.post_returns = s.post_returns;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.curve.push_back(rec);
      if (on_iteration) on_iteration(rec, params, adam);
    }
  }
  result.params = std::move(params);
  result.adam = std::move(adam);
  return result;
}

TrainResult meta_train(const TrainConfig& config, const Rng& rng, const IterationCallback& on_iteration) {
  config.validate();
  Rng init_rng = rng.split(kInitStream);
  MetaInit init = config.init;
  init.env = config.env;
  auto params = init_meta_params(init, config.variant, init_rng);
  return meta_train_from(config, std::move(params), AdamState{}, 0, rng, on_iteration);
}

// ---------------------------------------------------------------------------

nlohmann::json checkpoint_to_json(const Checkpoint& cp) {
  const auto& p = cp.params;
  nlohmann::json j;
  j["format"] = "norml-checkpoint";
  j["version"] = 1;
  j["variant"] = to_string(cp.variant);
  j["env"] = to_string(cp.env);
  j["iteration"] = cp.iteration;
  j["rollouts"] = cp.rollouts;
  j["horizon"] = cp.horizon;
  j["gamma"] = cp.gamma;
  j["beta"] = p.beta;
  j["policy_net"] = mlp_config_to_json(p.theta.mean_net);
  j["advantage_net"] = mlp_config_to_json(p.psi.net);
  j["arrays"] = {{"theta_mu", p.theta.mean},
                 {"theta_sigma", p.theta.log_std},
                 {"theta_offset", p.offset},
                 {"alpha", p.alpha},
                 {"psi", p.psi.psi}};
  j["adam"] = {{"step", cp.adam.step}, {"m", cp.adam.m}, {"v", cp.adam.v}};
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "norml-checkpoint") throw ContractError("checkpoint: unknown format");
  if (j.value("version", 0) != 1) throw ContractError("checkpoint: unsupported version");
  Checkpoint cp;
  try {
    cp.variant = variant_from_string(j.at("variant").get<std::string>());
    cp.env = env_kind_from_string(j.at("env").get<std::string>());
    cp.iteration = j.at("iteration").get<int>();
    cp.rollouts = j.at("rollouts").get<int>();
    cp.horizon = j.at("horizon").get<int>();
    cp.gamma = j.at("gamma").get<double>();
    auto& p = cp.params;
    p.beta = j.at("beta").get<double>();
    p.theta.mean_net = mlp_config_from_json(j.at("policy_net"));
    p.psi.net = mlp_config_from_json(j.at("advantage_net"));
    p.psi.state_dim = state_dim(cp.env);
    p.psi.action_dim = action_dim(cp.env);
    const auto& a = j.at("arrays");
    p.theta.mean = a.at("theta_mu").get<std::vector<double>>();
    p.theta.log_std = a.at("theta_sigma").get<std::vector<double>>();
    p.offset = a.at("theta_offset").get<std::vector<double>>();
    p.alpha = a.at("alpha").get<std::vector<double>>();
    p.psi.psi = a.at("psi").get<std::vector<double>>();
    cp.adam.step = j.at("adam").at("step").get<long long>();
    cp.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    cp.adam.v = j.at("adam").at("v").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint: ") + e.what());
  }
  const auto& p = cp.params;
  validate(p.psi);
  if (p.theta.mean.size() != p.theta.mean_net.param_count() ||
      static_cast<int>(p.theta.log_std.size()) != p.theta.mean_net.output_dim() ||
      p.theta.state_dim() != state_dim(cp.env) || p.theta.action_dim() != action_dim(cp.env) ||
      p.offset.size() != p.theta.size() || p.alpha.size() != p.theta.size()) {
    throw ContractError("checkpoint: array lengths do not match the networks");
  }
  if (!cp.adam.m.empty() && (cp.adam.m.size() != p.stack_size() || cp.adam.v.size() != p.stack_size())) {
    throw ContractError("checkpoint: optimizer state length mismatch");
  }
  return cp;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(cp).dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("checkpoint '" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace norml
