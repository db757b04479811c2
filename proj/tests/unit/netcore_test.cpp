#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "norml/diffgraph.hpp"
#include "norml/netcore.hpp"

using namespace norml;

namespace {

// Straight-line matrix oracle with Eigen, independent of the flat-loop code.
Eigen::VectorXd matrix_oracle(const MlpConfig& cfg, const std::vector<double>& p, Eigen::VectorXd x) {
  std::size_t k = 0;
  for (int l = 0; l < cfg.num_layers(); ++l) {
    const int in = cfg.layer_sizes[static_cast<std::size_t>(l)];
    const int out = cfg.layer_sizes[static_cast<std::size_t>(l) + 1];
    Eigen::MatrixXd W(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) W(r, c) = p[k++];
    Eigen::VectorXd b(out);
    for (int r = 0; r < out; ++r) b(r) = p[k++];
    Eigen::VectorXd z = W * x + b;
    if (l + 1 < cfg.num_layers()) {
      x = cfg.activation == Activation::Tanh ? Eigen::VectorXd(z.array().tanh())
                                             : Eigen::VectorXd(z.cwiseMax(0.0));
    } else {
      x = z;
    }
  }
  return x;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST(MlpForward, ZeroWeightsGiveZero) {
  const auto cfg = make_mlp(3, {4, 4}, 2, Activation::Tanh);
  const std::vector<double> p(cfg.param_count(), 0.0);
  const std::vector<double> x{0.4, -2.0, 7.0};
  for (double y : mlp_forward(p, cfg, x)) EXPECT_EQ(y, 0.0);
}

TEST(MlpForward, IdentityLikeNet) {
  // 1 -> 1 (tanh) -> 1 with an identity read-out.
  const auto cfg = make_mlp(1, {1}, 1, Activation::Tanh);
  const std::vector<double> p{1.0, 0.0, 1.0, 0.0};
  const std::vector<double> x{0.5};
  EXPECT_NEAR(mlp_forward(p, cfg, x)[0], 0.46212, 1e-5);
}

TEST(MlpForward, MatchesMatrixOracle) {
  Rng rng(11);
  for (auto act : {Activation::Tanh, Activation::Relu}) {
    const auto cfg = make_mlp(4, {50, 50}, 3, act);
    const auto p = random_vector(cfg.param_count(), rng, 0.3);
    const auto x = random_vector(4, rng, 2.0);
    const auto y = mlp_forward(p, cfg, x);
    const auto ref = matrix_oracle(cfg, p, Eigen::Map<const Eigen::VectorXd>(x.data(), 4));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[static_cast<std::size_t>(i)], ref(i), 1e-12);
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  const auto cfg = make_mlp(2, {3}, 1, Activation::Tanh);
  const std::vector<double> p(cfg.param_count(), 0.1);
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_THROW(mlp_forward(p, cfg, x), ContractError);
}

TEST(MlpConfig, RejectsMissingHiddenLayerAndZeroSizes) {
  EXPECT_THROW(make_mlp(2, {}, 1, Activation::Tanh), ContractError);
  EXPECT_THROW(make_mlp(2, {0}, 1, Activation::Tanh), ContractError);
}

TEST(LogProb, StandardNormalValues) {
  PolicyParams pol;
  pol.mean_net = make_mlp(1, {2}, 1, Activation::Tanh);
  pol.mean.assign(pol.mean_net.param_count(), 0.0);
  pol.log_std = {0.0};
  const std::vector<double> s{0.3};
  EXPECT_NEAR(log_prob(pol, s, std::vector<double>{0.0}), -0.918939, 1e-6);
  EXPECT_NEAR(log_prob(pol, s, std::vector<double>{1.0}), -1.418939, 1e-6);
}

TEST(LogProb, TwoDimensionalDensityIntegratesToOne) {
  Rng rng(3);
  auto pol = init_policy(make_mlp(2, {3}, 2, Activation::Tanh), 0.0, rng);
  pol.log_std = {-0.3, 0.2};
  const std::vector<double> s{0.5, -0.5};
  const auto mu = policy_mean(pol, s);
  // Midpoint rule over +-8 standard deviations per axis.
  const int n = 400;
  const double sd0 = std::exp(pol.log_std[0]), sd1 = std::exp(pol.log_std[1]);
  const double h0 = 16.0 * sd0 / n, h1 = 16.0 * sd1 / n;
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const std::vector<double> a{mu[0] - 8.0 * sd0 + (i + 0.5) * h0, mu[1] - 8.0 * sd1 + (j + 0.5) * h1};
      mass += std::exp(log_prob(pol, s, a)) * h0 * h1;
    }
  }
  EXPECT_NEAR(mass, 1.0, 1e-3);
}

TEST(LogProb, OneDimensionalGaussLegendreMass) {
  PolicyParams pol;
  pol.mean_net = make_mlp(1, {1}, 1, Activation::Tanh);
  pol.mean = {0.7, 0.1, 1.5, -0.2};
  pol.log_std = {0.4};
  const std::vector<double> s{0.9};
  // 5-point Gauss-Legendre on each of 64 panels over [-10, 10] std devs.
  const double nodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  const double weights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                             0.2369268850561891};
  const double mu = policy_mean(pol, s)[0];
  const double sd = std::exp(pol.log_std[0]);
  const double lo = mu - 10 * sd, hi = mu + 10 * sd;
  const int panels = 64;
  const double w = (hi - lo) / panels;
  double mass = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double c = lo + (p + 0.5) * w;
    for (int q = 0; q < 5; ++q) {
      mass += weights[q] * 0.5 * w * std::exp(log_prob(pol, s, std::vector<double>{c + 0.5 * w * nodes[q]}));
    }
  }
  EXPECT_NEAR(mass, 1.0, 1e-3);
}

TEST(LogProb, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const auto cfg = make_mlp(3, {4}, 2, Activation::Tanh);
  for (int trial = 0; trial < 5; ++trial) {
    const auto theta = random_vector(cfg.param_count() + 2, rng, 0.8);
    const auto s = random_vector(3, rng, 1.5);
    const auto a = random_vector(2, rng, 1.5);
    const ad::Program prog = [&](ad::Tape&, std::span<const ad::Var> th) {
      return std::vector<ad::Var>{log_prob_generic<ad::Var>(cfg, th, s, a)};
    };
    EXPECT_LE(ad::fd_check(prog, theta, 1e-5), 1e-6);
  }
}

TEST(SampleAction, DegenerateGaussianReturnsMean) {
  Rng init(1);
  auto pol = init_policy(make_mlp(2, {5}, 2, Activation::Tanh), -20.0, init);
  const std::vector<double> s{0.2, 0.4};
  Rng rng(9);
  const auto a = sample_action(pol, s, rng);
  const auto mu = policy_mean(pol, s);
  for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(a[d], mu[d], 1e-8);
}

TEST(SampleAction, SeedDeterminism) {
  Rng init(1);
  auto pol = init_policy(make_mlp(2, {5}, 2, Activation::Tanh), 0.0, init);
  const std::vector<double> s{0.2, 0.4};
  Rng r1(42), r2(42);
  EXPECT_EQ(sample_action(pol, s, r1), sample_action(pol, s, r2));
}

TEST(SampleAction, MonteCarloMoments) {
  PolicyParams pol;
  pol.mean_net = make_mlp(1, {1}, 1, Activation::Tanh);
  pol.mean.assign(pol.mean_net.param_count(), 0.0);
  pol.log_std = {0.0};
  Rng rng(2024);
  const std::vector<double> s{0.0};
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = sample_action(pol, s, rng)[0];
    sum += a;
    sq += a * a;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sd, 1.0, 0.02);
}

TEST(Advantage, ZeroPsiGivesZero) {
  Rng rng(0);
  auto adv = init_advantage(2, 2, {8, 8}, rng);
  std::fill(adv.psi.begin(), adv.psi.end(), 0.0);
  const std::vector<double> s{1, 2}, a{3, 4}, sn{5, 6};
  EXPECT_EQ(advantage_forward(adv, s, a, sn), 0.0);
}

TEST(Advantage, DeadLastHiddenLayerGivesFinalBias) {
  Rng rng(0);
  auto adv = init_advantage(2, 2, {4, 3}, rng);
  const auto& cfg = adv.net;
  // Force every last-hidden pre-activation negative through its bias.
  const std::size_t b1 = cfg.bias_offset(1);
  for (int o = 0; o < 3; ++o) adv.psi[b1 + static_cast<std::size_t>(o)] = -1e3;
  adv.psi[cfg.bias_offset(2)] = 0.625;
  const std::vector<double> s{0.1, -0.2}, a{0.3, 0.9}, sn{0.0, 0.5};
  EXPECT_EQ(advantage_forward(adv, s, a, sn), 0.625);
}

TEST(Advantage, MatchesMatrixOracle) {
  Rng rng(8);
  auto adv = init_advantage(2, 2, {50, 50}, rng);
  for (auto& v : adv.psi) v += rng.uniform(-0.1, 0.1);
  const std::vector<double> s{0.1, -0.2}, a{0.3, 0.9}, sn{0.0, 0.5};
  Eigen::VectorXd x(6);
  x << 0.1, -0.2, 0.3, 0.9, 0.0, 0.5;
  EXPECT_NEAR(advantage_forward(adv, s, a, sn), matrix_oracle(adv.net, adv.psi, x)(0), 1e-12);
}

TEST(Advantage, DimensionMismatchThrows) {
  Rng rng(0);
  auto adv = init_advantage(2, 2, {4}, rng);
  const std::vector<double> s{0.1, -0.2}, a{0.3}, sn{0.0, 0.5};
  EXPECT_THROW(advantage_forward(adv, s, a, sn), ContractError);
}

TEST(InitParams, ReproducibleUnderSeed) {
  const auto cfg = make_mlp(3, {50, 50}, 2, Activation::Tanh);
  Rng a(77), b(77);
  EXPECT_EQ(init_params(cfg, a), init_params(cfg, b));
}

TEST(InitParams, BiasesAreZero) {
  const auto cfg = make_mlp(3, {7, 5}, 2, Activation::Relu);
  Rng rng(1);
  const auto p = init_params(cfg, rng);
  for (int l = 0; l < cfg.num_layers(); ++l) {
    const int out = cfg.layer_sizes[static_cast<std::size_t>(l) + 1];
    for (int o = 0; o < out; ++o) EXPECT_EQ(p[cfg.bias_offset(l) + static_cast<std::size_t>(o)], 0.0);
  }
}

TEST(InitParams, WeightStdMatchesScale) {
  // One 100 x 100 layer gives 10^4 draws.
  const auto cfg = make_mlp(100, {100}, 1, Activation::Tanh);
  Rng rng(4);
  const auto p = init_params(cfg, rng, InitScheme{2.0, 1.0});
  double sum = 0.0, sq = 0.0;
  const std::size_t n = 100 * 100;
  for (std::size_t i = 0; i < n; ++i) {
    sum += p[i];
    sq += p[i] * p[i];
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const double expected = init_weight_scale(cfg, 0, InitScheme{2.0, 1.0});
  EXPECT_NEAR(expected, 0.2, 1e-15);
  EXPECT_NEAR(sd / expected, 1.0, 0.1);
}

TEST(PolicyParams, FlattenRoundTrip) {
  Rng rng(12);
  auto pol = init_policy(make_mlp(2, {6, 6}, 2, Activation::Tanh), -0.5, rng);
  for (auto& v : pol.mean) v += rng.normal();
  const auto flat = pol.flat();
  const auto back = PolicyParams::from_flat(pol.mean_net, flat);
  EXPECT_EQ(back.mean, pol.mean);
  EXPECT_EQ(back.log_std, pol.log_std);
  EXPECT_EQ(back.flat(), flat);
  EXPECT_THROW(PolicyParams::from_flat(pol.mean_net, std::span<const double>(flat).first(3)), ContractError);
}

TEST(Serialization, JsonRoundTripIsExact) {
  Rng rng(13);
  const auto cfg = make_mlp(3, {5}, 2, Activation::Relu);
  auto p = init_params(cfg, rng);
  p[3] = 0.1 + 0.2;
  const auto text = params_to_json(cfg, p).dump();
  MlpConfig back_cfg;
  const auto back = params_from_json(nlohmann::json::parse(text), &back_cfg);
  EXPECT_EQ(back, p);
  EXPECT_EQ(back_cfg, cfg);
}

TEST(Serialization, RejectsMismatchedCount) {
  const auto cfg = make_mlp(1, {1}, 1, Activation::Tanh);
  auto j = params_to_json(cfg, std::vector<double>(cfg.param_count(), 0.0));
  j["params"].push_back(1.0);
  EXPECT_THROW(params_from_json(j, nullptr), ContractError);
}
