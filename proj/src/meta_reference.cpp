#include "norml/meta_reference.hpp"

#include <algorithm>

namespace norml::reference {

namespace {

using ad::Var;

std::vector<double> column(const kernels::Matrix& m, Eigen::Index j) {
  return {m.col(j).data(), m.col(j).data() + m.rows()};
}

struct Recorded {
  ad::Tape base;
  ad::Differentiated inner;  // valid when the variant adapts
  std::vector<ad::NodeId> inputs;
  bool adapts = false;
};

// Records J = sum_t w_t log pi_t on `rec.base` (inputs are the full stack),
// differentiates it w.r.t. theta and returns theta_i on the extended tape.
std::vector<Var> record_theta_i(Recorded& rec, const MetaParams& params, Variant variant, const TaskBatch& batch) {
  const auto tr = traits(variant);
  const std::size_t n = params.theta_size();
  const auto stack = params.stack();
  for (double x : stack) rec.inputs.push_back(rec.base.input(x).id());
  rec.adapts = tr.adapts && batch.train.size() > 0;
  if (!rec.adapts) {
    rec.base = rec.base.fork();
    std::vector<Var> theta;
    for (std::size_t i = 0; i < n; ++i) theta.push_back(rec.base.var(rec.inputs[i]));
    return theta;
  }
  ad::Tape& t = rec.base;
  std::vector<Var> theta, psi;
  for (std::size_t i = 0; i < n; ++i) theta.push_back(t.var(rec.inputs[i]));
  for (std::size_t i = 3 * n; i < stack.size(); ++i) psi.push_back(t.var(rec.inputs[i]));
  if (!tr.learned_advantage && static_cast<Eigen::Index>(batch.train_advantages.size()) != batch.train.size()) {
    throw ContractError("reference: observed inner advantages missing");
  }
  std::vector<Var> terms;
  for (Eigen::Index j = 0; j < batch.train.size(); ++j) {
    const auto s = column(batch.train.states, j);
    const auto a = column(batch.train.actions, j);
    Var w;
    if (tr.learned_advantage) {
      const auto sn = column(batch.train.next_states, j);
      const auto x = advantage_input(s, a, sn);
      w = mlp_forward_generic<Var, double>(params.psi.net, psi, x)[0];
    } else {
      w = t.constant(batch.train_advantages[static_cast<std::size_t>(j)]);
    }
    terms.push_back(w * log_prob_generic<Var>(params.theta.mean_net, theta, s, a));
  }
  t.finalize({ad::sum(terms)});
  const std::vector<ad::NodeId> roots(rec.inputs.begin(), rec.inputs.begin() + static_cast<std::ptrdiff_t>(n));
  rec.inner = ad::differentiate(t, roots);
  ad::Tape& d = rec.inner.tape;
  std::vector<Var> theta_i;
  for (std::size_t i = 0; i < n; ++i) {
    Var x = d.var(rec.inputs[i]);
    if (tr.offset) x = x + d.var(rec.inputs[n + i]);
    theta_i.push_back(x + tr.inner_sign * (d.var(rec.inputs[2 * n + i]) * d.var(rec.inner.gradients[i])));
  }
  return theta_i;
}

ad::Tape& working_tape(Recorded& rec) { return rec.adapts ? rec.inner.tape : rec.base; }

}  // namespace

PolicyParams adapted_for_batch(const MetaParams& params, Variant variant, const TaskBatch& batch) {
  Recorded rec;
  const auto theta_i = record_theta_i(rec, params, variant, batch);
  std::vector<double> flat;
  for (const Var& v : theta_i) flat.push_back(v.value());
  return PolicyParams::from_flat(params.theta.mean_net, flat);
}

MetaGradient task_gradient(const MetaParams& params, Variant variant, const TaskBatch& batch, const PpoConfig& ppo) {
  Recorded rec;
  const auto theta_i = record_theta_i(rec, params, variant, batch);
  ad::Tape& t = working_tape(rec);
  std::vector<Var> terms;
  const Var lo = t.constant(1.0 - ppo.clip);
  const Var hi = t.constant(1.0 + ppo.clip);
  for (Eigen::Index j = 0; j < batch.test.size(); ++j) {
    const auto s = column(batch.test.states, j);
    const auto a = column(batch.test.actions, j);
    const double adv = batch.test_advantages[static_cast<std::size_t>(j)];
    const Var lp = log_prob_generic<Var>(params.theta.mean_net, theta_i, s, a);
    const Var rho = ad::exp(lp - batch.behavior_log_probs[static_cast<std::size_t>(j)]);
    const Var clipped = ad::min(ad::max(rho, lo), hi);
    terms.push_back(ad::min(rho * adv, clipped * adv));
  }
  const Var loss = terms.empty() ? t.constant(0.0) : -ad::sum(terms);
  t.finalize({loss});
  const auto g = ad::gradient(t, rec.inputs);
  MetaGradient out;
  out.loss = loss.value();
  out.grad = g.values;
  const auto mask = trainable_mask(params, variant);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) out.grad[k] = 0.0;
  }
  return out;
}

MetaGradient meta_gradient(const MetaParams& params, Variant variant, std::span<const TaskBatch> tasks,
                           const PpoConfig& ppo) {
  MetaGradient total;
  total.grad.assign(params.stack_size(), 0.0);
  for (const auto& batch : tasks) {
    const auto g = reference::task_gradient(params, variant, batch, ppo);
    total.loss += g.loss;
    for (std::size_t k = 0; k < total.grad.size(); ++k) total.grad[k] += g.grad[k];
  }
  return total;
}

}  // namespace norml::reference
