#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include <omp.h>

#include <nlohmann/json.hpp>

#include "meta_oracle.hpp"
#include "norml/meta_reference.hpp"

using namespace norml;
using norml::testing::make_fixture;
using norml::testing::max_relative_error;

namespace {

const Variant kAllVariants[] = {Variant::Maml, Variant::Norml, Variant::NormlNoOffset, Variant::NormlNoLaf,
                                Variant::DomainRandomization};

std::vector<Trajectory> point_rollouts(const PolicyParams& pol, double phi, int K, std::uint64_t seed) {
  return collect(pol, {EnvKind::PointShaped, phi}, K, 10, Rng(seed));
}

MetaParams small_params(Variant v, std::uint64_t seed) {
  MetaInit init;
  init.policy_hidden = {6, 6};
  init.advantage_hidden = {5, 5};
  init.alpha_init = 0.03;
  Rng rng(seed);
  return init_meta_params(init, v, rng);
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (auto v : kAllVariants) EXPECT_EQ(variant_from_string(to_string(v)), v);
  EXPECT_THROW(variant_from_string("reptile"), ContractError);
}

TEST(MetaParams, StackOrderAndRoundTrip) {
  auto p = small_params(Variant::Norml, 1);
  const std::size_t n = p.theta_size();
  EXPECT_EQ(p.stack_size(), 3 * n + p.psi.psi.size());
  for (double x : p.offset) EXPECT_EQ(x, 0.0);
  for (double x : p.alpha) EXPECT_EQ(x, 0.03);
  auto stack = p.stack();
  EXPECT_EQ(stack[p.theta.mean.size()], p.theta.log_std[0]);
  EXPECT_EQ(stack[3 * n], p.psi.psi[0]);
  stack[n] = 0.25;
  stack[2 * n + 1] = 0.5;
  p.set_stack(stack);
  EXPECT_EQ(p.offset[0], 0.25);
  EXPECT_EQ(p.alpha[1], 0.5);
  EXPECT_EQ(p.stack(), stack);
}

TEST(MetaParams, DomainRandomizationHasNoAdaptation) {
  const auto p = small_params(Variant::DomainRandomization, 1);
  for (double x : p.alpha) EXPECT_EQ(x, 0.0);
  const auto mask = trainable_mask(p, Variant::DomainRandomization);
  for (std::size_t k = 0; k < mask.size(); ++k) EXPECT_EQ(mask[k] != 0, k < p.theta_size());
}

TEST(InnerAdaptMaml, ZeroRateOrZeroAdvantageKeepsTheta) {
  const auto p = small_params(Variant::Maml, 2);
  auto trajs = point_rollouts(p.theta, 1.0, 5, 3);
  const auto fit = fit_value(trajs, 0.99, 10);
  const std::vector<double> zero(p.theta_size(), 0.0);
  EXPECT_EQ(inner_adapt_maml(p.theta, zero, trajs, fit).flat(), p.theta.flat());

  for (auto& t : trajs) std::fill(t.rewards.begin(), t.rewards.end(), 0.0);
  const auto zero_fit = fit_value(trajs, 0.99, 10);
  EXPECT_EQ(inner_adapt_maml(p.theta, p.alpha, trajs, zero_fit).flat(), p.theta.flat());
}

TEST(InnerAdaptMaml, SingleTransitionHandComputation) {
  // Zero read-out weights make the mean equal the output bias b, so
  // d log pi / d b = (a - b) e^{-2 sigma} and d log pi / d sigma = z^2 - 1.
  PolicyParams pol;
  pol.mean_net = make_mlp(2, {1}, 2, Activation::Tanh);
  pol.mean.assign(pol.mean_net.param_count(), 0.0);
  pol.mean[0] = 0.3;  // hidden weight, irrelevant for the gradient of b
  const std::size_t b0 = pol.mean_net.bias_offset(1);
  pol.mean[b0] = 0.2;
  pol.mean[b0 + 1] = -0.1;
  pol.log_std = {-0.4, 0.1};

  Trajectory t;
  t.state_dim = 2;
  t.action_dim = 2;
  t.states = {0.0, 0.0, 0.5, 0.5};
  t.actions = {0.7, 0.4};
  t.rewards = {2.0};
  t.log_probs = {0.0};
  ValueFit fit;
  fit.gamma = 0.99;
  fit.horizon = 1;
  fit.state_dim = 2;
  fit.coefficients.assign(6, 0.0);
  fit.coefficients[0] = 0.5;  // V = 0.5, so A = 1.5
  const double A = 1.5;
  std::vector<double> alpha(pol.size(), 0.1);
  alpha[b0] = 0.2;

  const auto out = inner_adapt_maml(pol, alpha, std::vector<Trajectory>{t}, fit).flat();
  const double g_b0 = (0.7 - 0.2) * std::exp(0.8);
  const double g_b1 = (0.4 + 0.1) * std::exp(-0.2);
  EXPECT_NEAR(out[b0], 0.2 + 0.2 * A * g_b0, 1e-14);
  EXPECT_NEAR(out[b0 + 1], -0.1 + 0.1 * A * g_b1, 1e-14);
  const std::size_t ns = pol.mean.size();
  EXPECT_NEAR(out[ns], -0.4 + 0.1 * A * (0.25 * std::exp(0.8) - 1.0), 1e-14);
  EXPECT_NEAR(out[ns + 1], 0.1 + 0.1 * A * (0.25 * std::exp(-0.2) - 1.0), 1e-14);
  EXPECT_EQ(out[0], 0.3);
}

TEST(InnerAdaptMaml, RequiresRewards) {
  const auto p = small_params(Variant::Maml, 2);
  CollectOptions opts;
  opts.record_rewards = false;
  const auto trajs = collect(p.theta, {EnvKind::PointShaped, 0.0}, 2, 10, Rng(1), opts);
  ValueFit fit;
  fit.state_dim = 2;
  fit.coefficients.assign(8, 0.0);
  EXPECT_THROW(inner_adapt_maml(p.theta, p.alpha, trajs, fit), ContractError);
}

TEST(InnerAdaptNorml, ZeroAdvantageNetAndZeroOffsetKeepTheta) {
  auto p = small_params(Variant::Norml, 3);
  std::fill(p.psi.psi.begin(), p.psi.psi.end(), 0.0);
  const auto set = strip_rewards(point_rollouts(p.theta, 0.5, 4, 1));
  EXPECT_EQ(inner_adapt_norml(p.theta, p.offset, p.alpha, p.psi, set).flat(), p.theta.flat());
}

TEST(InnerAdaptNorml, ZeroRateGivesOffsetOnly) {
  auto p = small_params(Variant::Norml, 3);
  Rng rng(5);
  for (auto& x : p.offset) x = rng.uniform(-1, 1);
  const std::vector<double> zero(p.theta_size(), 0.0);
  const auto set = strip_rewards(point_rollouts(p.theta, 0.5, 4, 1));
  const auto out = inner_adapt_norml(p.theta, p.offset, zero, p.psi, set).flat();
  const auto theta = p.theta.flat();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], theta[i] + p.offset[i]);
}

TEST(InnerAdaptNorml, SubstitutedAdvantagesReproduceMaml) {
  const auto p = small_params(Variant::Norml, 4);
  const auto trajs = point_rollouts(p.theta, 2.0, 6, 8);
  const auto fit = fit_value(trajs, 0.99, 10);
  const auto maml = inner_adapt_maml(p.theta, p.alpha, trajs, fit).flat();
  // Learned-advantage step with A_psi replaced by -A_obs and no offset.
  auto w = observed_advantages(trajs, fit);
  for (auto& x : w) x = -x;
  const auto norml = inner_step(p.theta, {}, p.alpha, -1.0, score_sum(p.theta, strip_rewards(trajs), w)).flat();
  for (std::size_t i = 0; i < maml.size(); ++i) EXPECT_NEAR(norml[i], maml[i], 1e-12);
  // The tape-based construction agrees as well.
  TaskBatch b;
  b.train = strip_rewards(trajs);
  b.train_advantages = observed_advantages(trajs, fit);
  const auto tape = reference::adapted_for_batch(p, Variant::Maml, b).flat();
  for (std::size_t i = 0; i < maml.size(); ++i) EXPECT_NEAR(tape[i], maml[i], 1e-12);
}

TEST(InnerAdaptNorml, ScaleAbsorption) {
  auto p = small_params(Variant::Norml, 6);
  const auto set = strip_rewards(point_rollouts(p.theta, 4.0, 5, 2));
  const auto base = inner_adapt_norml(p.theta, p.offset, p.alpha, p.psi, set).flat();
  for (double c : {2.0, -3.5, 0.125}) {
    // Scaling the linear read-out layer scales A_psi by c.
    auto q = p;
    const int last = q.psi.net.num_layers() - 1;
    for (std::size_t i = q.psi.net.weight_offset(last); i < q.psi.psi.size(); ++i) q.psi.psi[i] *= c;
    for (auto& a : q.alpha) a /= c;
    const auto out = inner_adapt_norml(q.theta, q.offset, q.alpha, q.psi, set).flat();
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], base[i], 1e-12);
  }
}

TEST(InnerAdaptNorml, PoisonedRewardsNeverReachAdaptation) {
  const auto p = small_params(Variant::Norml, 7);
  CollectOptions poison;
  poison.poison_rewards = true;
  const Task task{EnvKind::PointShaped, 1.0};
  const auto clean = fine_tune(p, Variant::Norml, task, 5, 10, 0.99, Rng(3));
  const auto dirty = fine_tune(p, Variant::Norml, task, 5, 10, 0.99, Rng(3), poison);
  EXPECT_EQ(clean.flat(), dirty.flat());
  for (double x : dirty.flat()) EXPECT_TRUE(std::isfinite(x));
  // The same poisoning does reach MAML.
  const auto maml = fine_tune(small_params(Variant::Maml, 7), Variant::Maml, task, 5, 10, 0.99, Rng(3), poison);
  EXPECT_TRUE(std::isnan(maml.flat()[0]));
}

TEST(MetaObjective, RatioOneGivesMinusAdvantageSum) {
  const auto p = small_params(Variant::Maml, 8);
  const auto trajs = point_rollouts(p.theta, 1.0, 3, 4);
  const auto set = strip_rewards(trajs);
  const auto lp = stacked_log_probs(trajs);
  std::vector<double> adv(lp.size());
  Rng rng(1);
  double sum = 0.0;
  for (auto& a : adv) sum += (a = rng.uniform(-2, 2));
  EXPECT_NEAR(meta_objective(p.theta, set, adv, lp, {}), -sum, 1e-12);
  std::fill(adv.begin(), adv.end(), 0.0);
  EXPECT_EQ(meta_objective(p.theta, set, adv, lp, {}), 0.0);
}

TEST(MetaObjective, HandBuiltClippingCase) {
  const auto p = small_params(Variant::Maml, 8);
  auto trajs = point_rollouts(p.theta, 1.0, 1, 4);
  const auto set = strip_rewards(trajs);
  const double lp0 = log_prob(p.theta, trajs[0].state(0), trajs[0].action(0));
  const double lp1 = log_prob(p.theta, trajs[0].state(1), trajs[0].action(1));
  TransitionSet two = set;
  two.states.conservativeResize(Eigen::NoChange, 2);
  two.actions.conservativeResize(Eigen::NoChange, 2);
  two.next_states.conservativeResize(Eigen::NoChange, 2);
  // rho = (1.5, 0.5), A = (1, -1): terms min(1.5, 1.2) and min(-0.5, -0.8).
  const std::vector<double> behavior{lp0 - std::log(1.5), lp1 - std::log(0.5)};
  const std::vector<double> adv{1.0, -1.0};
  EXPECT_NEAR(meta_objective(p.theta, two, adv, behavior, {0.2, 1}), -(1.2 - 0.8), 1e-12);
}

class MetaGradientTest : public ::testing::TestWithParam<Variant> {};

TEST_P(MetaGradientTest, MatchesNestedFiniteDifferences) {
  for (std::uint64_t seed : {11, 12}) {
    const auto f = make_fixture(GetParam(), seed);
    EXPECT_LE(f.params.theta_size(), 15u);
    ASSERT_GT(norml::testing::kink_margin(f), norml::testing::kSmoothMargin);
    const auto g = meta_gradient(f.params, f.variant, f.batches, f.ppo);
    const auto fd = norml::testing::fd_meta_gradient(f);
    EXPECT_LE(norml::testing::gradient_error(g.grad, fd), 1e-4) << "seed " << seed;
    EXPECT_NEAR(g.loss, norml::testing::scalar_meta_loss(f.params, f), 1e-9);
  }
}

TEST_P(MetaGradientTest, MatchesTapeReference) {
  const auto f = make_fixture(GetParam(), 21, {4, 3}, {4, 3}, 3, 3, 5);
  const auto g = meta_gradient(f.params, f.variant, f.batches, f.ppo);
  const auto r = reference::meta_gradient(f.params, f.variant, f.batches, f.ppo);
  EXPECT_NEAR(g.loss, r.loss, 1e-12);
  EXPECT_LE(max_relative_error(g.grad, r.grad, 1e-10), 1e-9);
}

TEST_P(MetaGradientTest, BitStableAcrossThreadCounts) {
  const auto f = make_fixture(GetParam(), 31, {8, 8}, {8}, 6, 4, 10);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = meta_gradient(f.params, f.variant, f.batches, f.ppo);
  omp_set_num_threads(3);
  const auto b = meta_gradient(f.params, f.variant, f.batches, f.ppo);
  omp_set_num_threads(saved);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(a.loss, b.loss);
}

INSTANTIATE_TEST_SUITE_P(Variants, MetaGradientTest, ::testing::ValuesIn(kAllVariants),
                         [](const auto& info) { return to_string(info.param); });

TEST(MetaGradient, OffsetGradientIsOuterGradientAtAdaptedParameters) {
  const auto f = make_fixture(Variant::Norml, 41);
  const auto g = meta_gradient(f.params, f.variant, f.batches, f.ppo);
  const std::size_t n = f.params.theta_size();
  // d L / d theta_i by central differences of the outer objective alone.
  for (std::size_t k = 0; k < n; ++k) {
    double direct = 0.0;
    for (const auto& b : f.batches) {
      const auto theta_i = adapted_for_batch(f.params, f.variant, b).flat();
      auto loss_at = [&](double x) {
        auto th = theta_i;
        th[k] = x;
        return meta_objective(PolicyParams::from_flat(f.params.theta.mean_net, th), b.test, b.test_advantages,
                              b.behavior_log_probs, f.ppo);
      };
      direct += norml::testing::five_point(loss_at, theta_i[k], 1e-3);
    }
    EXPECT_LE(norml::testing::relative_error(g.grad[n + k], direct), 1e-6) << k;
  }
}

TEST(MetaGradient, SecondOrderTermIsLive) {
  const auto f = make_fixture(Variant::Maml, 42);
  const auto full = meta_gradient(f.params, f.variant, f.batches, f.ppo);
  const auto first = meta_gradient(f.params, f.variant, f.batches, f.ppo, GradientOptions{false});
  const std::size_t n = f.params.theta_size();
  double diff = 0.0;
  for (std::size_t k = 0; k < n; ++k) diff = std::max(diff, std::abs(full.grad[k] - first.grad[k]));
  EXPECT_GT(diff, 1e-6);
  // Only the theta block changes.
  for (std::size_t k = n; k < full.grad.size(); ++k) EXPECT_EQ(full.grad[k], first.grad[k]);
  EXPECT_GT(max_relative_error(first.grad, norml::testing::fd_meta_gradient(f)), 1e-4);
}

TEST(MetaGradient, DomainRandomizationEqualsMamlWithZeroRate) {
  auto f = make_fixture(Variant::Maml, 43);
  std::fill(f.params.alpha.begin(), f.params.alpha.end(), 0.0);
  const auto maml = meta_gradient(f.params, Variant::Maml, f.batches, f.ppo);
  auto dr_batches = f.batches;
  for (auto& b : dr_batches) {
    b.train = TransitionSet{};
    b.train_advantages.clear();
  }
  const auto dr = meta_gradient(f.params, Variant::DomainRandomization, dr_batches, f.ppo);
  for (const auto& b : f.batches) EXPECT_EQ(adapted_for_batch(f.params, Variant::Maml, b).flat(), f.params.theta.flat());
  const std::size_t n = f.params.theta_size();
  for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(dr.grad[k], maml.grad[k], 1e-14);
  EXPECT_EQ(dr.loss, maml.loss);
}

TEST(MetaGradient, OffsetDoesNotChangeTrainingRollouts) {
  auto p = small_params(Variant::Norml, 9);
  const Task task{EnvKind::PointShaped, 2.5};
  const auto a = build_task_batch(p, Variant::Norml, task, 4, 10, 0.99, Rng(1), Rng(2));
  for (auto& x : p.offset) x = 0.7;
  const auto b = build_task_batch(p, Variant::Norml, task, 4, 10, 0.99, Rng(1), Rng(2));
  EXPECT_EQ(a.train.states, b.train.states);
  EXPECT_EQ(a.train.actions, b.train.actions);
  EXPECT_NE(a.test.actions, b.test.actions);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> x{1.0, -2.0, 3.0};
  const auto before = x;
  AdamState s;
  adam_step(x, std::vector<double>(3, 0.0), s, 0.1);
  EXPECT_EQ(x, before);
}

TEST(Adam, FirstStepHandFormula) {
  std::vector<double> x{1.0, 1.0, 1.0};
  const std::vector<double> g{0.5, -2.0, 1e-9};
  AdamState s;
  adam_step(x, g, s, 0.01);
  for (std::size_t i = 0; i < 3; ++i) {
    // m_hat = g, v_hat = g^2.
    EXPECT_NEAR(x[i], 1.0 - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  }
}

TEST(Adam, TwoStepRecursion) {
  std::vector<double> x{0.3};
  const double g = 0.7, lr = 0.05;
  AdamState s;
  adam_step(x, std::vector<double>{g}, s, lr);
  adam_step(x, std::vector<double>{g}, s, lr);
  // Constant gradient: m_hat = g and v_hat = g^2 at every step.
  const double step = lr * g / (g + 1e-8);
  EXPECT_NEAR(x[0], 0.3 - 2 * step, 1e-15);
  EXPECT_EQ(s.step, 2);
  EXPECT_NEAR(s.m[0], (1 - 0.9 * 0.9) * g, 1e-15);
  EXPECT_NEAR(s.v[0], (1 - 0.999 * 0.999) * g * g, 1e-15);
}

TEST(Adam, LengthMismatchThrows) {
  std::vector<double> x{1.0};
  AdamState s;
  EXPECT_THROW(adam_step(x, std::vector<double>{1.0, 2.0}, s, 0.1), ContractError);
}

namespace {

TrainConfig tiny_config(Variant v) {
  TrainConfig c;
  c.env = EnvKind::PointShaped;
  c.variant = v;
  c.iterations = 2;
  c.tasks_per_iteration = 3;
  c.rollouts = 4;
  c.eval_tasks = 3;
  c.init.policy_hidden = {8, 8};
  c.init.advantage_hidden = {8, 8};
  return c;
}

}  // namespace

TEST(MetaTrain, ZeroIterationsReturnsInitialParameters) {
  auto c = tiny_config(Variant::Norml);
  c.iterations = 0;
  const auto r = meta_train(c, Rng(5));
  EXPECT_TRUE(r.curve.empty());
  Rng init = Rng(5).split(kInitStream);
  EXPECT_EQ(r.params.stack(), init_meta_params(c.init, c.variant, init).stack());
}

TEST(MetaTrain, DomainRandomizationPreEqualsPost) {
  const auto r = meta_train(tiny_config(Variant::DomainRandomization), Rng(6));
  ASSERT_EQ(r.curve.size(), 2u);
  for (const auto& rec : r.curve) {
    EXPECT_EQ(rec.pre_returns, rec.post_returns);
    EXPECT_EQ(rec.pre_mean, rec.post_mean);
  }
  for (double a : r.params.alpha) EXPECT_EQ(a, 0.0);
  for (double o : r.params.offset) EXPECT_EQ(o, 0.0);
}

TEST(MetaTrain, DeterministicAndMasked) {
  const auto c = tiny_config(Variant::NormlNoOffset);
  const auto a = meta_train(c, Rng(7));
  const auto b = meta_train(c, Rng(7));
  EXPECT_EQ(a.params.stack(), b.params.stack());
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].post_returns, b.curve[i].post_returns);
  for (double o : a.params.offset) EXPECT_EQ(o, 0.0);
}

TEST(MetaTrain, NonFiniteParametersAbort) {
  const auto c = tiny_config(Variant::Norml);
  Rng init(1);
  auto p = init_meta_params(c.init, c.variant, init);
  p.theta.mean[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    meta_train_from(c, p, {}, 0, Rng(1));
    FAIL() << "expected NumericAbort";
  } catch (const NumericAbort& e) {
    EXPECT_EQ(e.iteration(), 0);
    EXPECT_NE(std::string(e.what()).find("theta="), std::string::npos);
  }
}

TEST(MetaTrain, InvalidConfigRejected) {
  auto c = tiny_config(Variant::Norml);
  c.rollouts = 0;
  EXPECT_THROW(meta_train(c, Rng(1)), ContractError);
  c = tiny_config(Variant::Norml);
  c.ppo.clip = 1.5;
  EXPECT_THROW(meta_train(c, Rng(1)), ContractError);
}

TEST(FineTune, MamlWithZeroAdvantagesKeepsTheta) {
  const auto p = small_params(Variant::Maml, 10);
  auto trajs = point_rollouts(p.theta, 0.4, 5, 5);
  for (auto& t : trajs) std::fill(t.rewards.begin(), t.rewards.end(), 0.0);
  EXPECT_EQ(adapt(p, Variant::Maml, trajs, 0.99, 10).flat(), p.theta.flat());
}

TEST(FineTune, SingleRolloutIsFinite) {
  for (auto v : kAllVariants) {
    const auto p = small_params(v, 11);
    const auto out = fine_tune(p, v, {EnvKind::PointShaped, 1.2}, 1, 10, 0.99, Rng(4));
    for (double x : out.flat()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(EvaluateHeldout, EmptyAndDomainRandomization) {
  const auto p = small_params(Variant::DomainRandomization, 12);
  EXPECT_TRUE(evaluate_heldout(p, Variant::DomainRandomization, EnvKind::PointShaped, 0, 5, 10, 0.99, Rng(1))
                  .pre_returns.empty());
  const auto s = evaluate_heldout(p, Variant::DomainRandomization, EnvKind::PointShaped, 4, 5, 10, 0.99, Rng(1));
  EXPECT_EQ(s.pre_returns, s.post_returns);
}

TEST(EvaluateHeldout, DoesNotModifyParameters) {
  const auto p = small_params(Variant::Norml, 13);
  const auto before = p.stack();
  evaluate_heldout(p, Variant::Norml, EnvKind::PointShaped, 3, 5, 10, 0.99, Rng(2));
  EXPECT_EQ(p.stack(), before);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto r = meta_train(tiny_config(Variant::Norml), Rng(8));
  Checkpoint cp;
  cp.params = r.params;
  cp.adam = r.adam;
  cp.variant = Variant::Norml;
  cp.env = EnvKind::PointShaped;
  cp.iteration = 2;
  cp.rollouts = 4;
  const auto path = (std::filesystem::temp_directory_path() / "norml_checkpoint_test.json").string();
  save_checkpoint(path, cp);
  const auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.params.stack(), cp.params.stack());
  EXPECT_EQ(back.adam.m, cp.adam.m);
  EXPECT_EQ(back.adam.v, cp.adam.v);
  EXPECT_EQ(back.adam.step, cp.adam.step);
  EXPECT_EQ(back.params.beta, cp.params.beta);
  EXPECT_EQ(back.variant, cp.variant);
  EXPECT_EQ(back.params.theta.mean_net, cp.params.theta.mean_net);

  auto j = checkpoint_to_json(cp);
  j["version"] = 2;
  EXPECT_THROW(checkpoint_from_json(j), ContractError);
  j = checkpoint_to_json(cp);
  j["arrays"]["alpha"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j), ContractError);
}
