#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "lanerl/error.hpp"
#include "lanerl/ppo.hpp"

namespace lanerl {
namespace {

// Direct double sum of the definition: A_t = sum_l (gamma lambda)^l delta_{t+l}, truncated at the
// first done at or after t.
std::vector<double> brute_force_gae(const std::vector<double> &r, const std::vector<double> &v,
                                    const std::vector<std::uint8_t> &done, double bootstrap,
                                    double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coef = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = done[k] ? 0.0 : (k + 1 < n ? v[k + 1] : bootstrap);
      const double delta = r[k] + gamma * next - v[k];
      out[t] += coef * delta;
      if (done[k]) break;
      coef *= gamma * lambda;
    }
  }
  return out;
}

TEST(Gae, SingleStepExample) {
  const std::vector<double> r{1.0}, v{0.0};
  const std::vector<std::uint8_t> d{1};
  const GaeResult g = compute_gae(r, v, d, 0.0, 1.0, 1.0);
  EXPECT_EQ(g.advantages[0], 1.0);
  EXPECT_EQ(g.returns[0], 1.0);
}

TEST(Gae, LambdaZeroIsTdError) {
  const std::vector<double> r{0.3, -1.0, 2.0, 0.5}, v{0.1, 0.7, -0.2, 0.4};
  const std::vector<std::uint8_t> d{0, 0, 1, 0};
  const double gamma = 0.9, boot = 1.3;
  const GaeResult g = compute_gae(r, v, d, boot, gamma, 0.0);
  EXPECT_DOUBLE_EQ(g.advantages[0], 0.3 + gamma * 0.7 - 0.1);
  EXPECT_DOUBLE_EQ(g.advantages[1], -1.0 + gamma * -0.2 - 0.7);
  EXPECT_DOUBLE_EQ(g.advantages[2], 2.0 - -0.2);
  EXPECT_DOUBLE_EQ(g.advantages[3], 0.5 + gamma * boot - 0.4);
}

TEST(Gae, MatchesBruteForceOnLengthFive) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(5), v(5);
    std::vector<std::uint8_t> d(5);
    for (int i = 0; i < 5; ++i) {
      r[i] = n(rng);
      v[i] = n(rng);
      d[i] = u(rng) < 0.25;
    }
    const double boot = n(rng), gamma = u(rng), lambda = u(rng);
    const GaeResult g = compute_gae(r, v, d, boot, gamma, lambda);
    const auto ref = brute_force_gae(r, v, d, boot, gamma, lambda);
    for (int i = 0; i < 5; ++i) {
      ASSERT_NEAR(g.advantages[i], ref[i], 1e-9);
      ASSERT_NEAR(g.returns[i], ref[i] + v[i], 1e-9);
    }
  }
}

TEST(Gae, UnitLambdaAndGammaGiveRewardToGo) {
  const std::vector<double> r{1.0, -2.0, 0.5, 3.0, 0.25, -1.0};
  const std::vector<double> v(6, 0.0);
  const std::vector<std::uint8_t> d{0, 0, 1, 0, 0, 0};
  const GaeResult g = compute_gae(r, v, d, 0.0, 1.0, 1.0);
  const std::vector<double> expected{-0.5, -1.5, 0.5, 2.25, -0.75, -1.0};
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_DOUBLE_EQ(g.advantages[i], expected[i]);
}

TEST(Gae, NothingLeaksAcrossEpisodeBoundary) {
  std::vector<double> r{0.1, 0.2, 0.3, 1e6, -1e6};
  const std::vector<double> v{0.5, -0.5, 0.25, 1e3, 7.0};
  const std::vector<std::uint8_t> d{0, 0, 1, 0, 0};
  const GaeResult a = compute_gae(r, v, d, 99.0, 0.99, 0.95);
  r[3] = -5.0;
  r[4] = 12.0;
  const GaeResult b = compute_gae(r, v, d, -42.0, 0.99, 0.95);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.advantages[i], b.advantages[i]);
}

TEST(Gae, LengthMismatchRejected) {
  const std::vector<double> r{1.0, 2.0}, v{0.0};
  const std::vector<std::uint8_t> d{0, 0};
  EXPECT_THROW(compute_gae(r, v, d, 0.0, 0.9, 0.9), UsageError);
}

TEST(Clip, HandEvaluations) {
  EXPECT_EQ(clip_surrogate(1.5, 1.0, 0.2), 1.2);
  // min(0.5 * -1, 0.8 * -1): the clipped term is the smaller one here.
  EXPECT_EQ(clip_surrogate(0.5, -1.0, 0.2), (1.0 - 0.2) * -1.0);
  for (double a : {-2.0, -0.3, 0.0, 0.7, 5.0}) EXPECT_EQ(clip_surrogate(1.0, a, 0.2), a);
}

TEST(KlCoefficient, RuleTable) {
  EXPECT_EQ(update_kl_coefficient(2.0, 0.01, 0.01), 2.0);
  EXPECT_EQ(update_kl_coefficient(2.0, 0.03, 0.01), 3.0);
  EXPECT_EQ(update_kl_coefficient(3.0, 0.0025, 0.01), 2.0);
  EXPECT_EQ(update_kl_coefficient(2.0, 0.02, 0.01), 2.0);   // boundary: not above 2x target
  EXPECT_EQ(update_kl_coefficient(3.0, 0.005, 0.01), 3.0);  // boundary: not below target/2
}

TEST(Advantages, NormalizedToZeroMeanUnitStd) {
  TrajectoryBatch b;
  b.advantages = {1.0, 2.0, 3.0, 10.0};
  b.normalize_advantages();
  double m = 0, s = 0;
  for (double a : b.advantages) m += a;
  m /= 4;
  for (double a : b.advantages) s += (a - m) * (a - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(s / 4), 1.0, 1e-7);
}

// Two samples, one action dimension, built by hand.
struct TwoSample {
  TrajectoryBatch batch;
  MatrixX<double> mean{2, 1};
  std::vector<double> log_std{-0.5};
  MatrixX<double> value{2, 1};
  std::vector<std::size_t> idx{0, 1};

  TwoSample() {
    batch.action_dim = 1;
    batch.actions = {0.2, -0.4};
    batch.mean_old = {0.0, -0.1};
    batch.log_std_old = {-0.5, -0.6};
    batch.advantages = {1.0, -1.0};
    batch.returns = {0.5, -0.25};
    batch.rewards = {0, 0};
    batch.value_old = {0, 0};
    batch.dones = {0, 0};
    for (int i = 0; i < 2; ++i) {
      batch.log_prob_old.push_back(
          log_prob({{batch.mean_old[i]}, {batch.log_std_old[i]}}, std::vector<double>{batch.actions[i]}));
    }
    mean << 0.15, -1.0;
    value << 0.4, 0.1;
  }
};

TEST(PpoLoss, HandBuiltTwoSampleOracle) {
  TwoSample s;
  PPOConfig cfg;
  const double beta = 0.8;
  const LossStats st = ppo_loss<double>(s.batch, s.idx, s.mean, s.log_std, s.value, beta, cfg,
                                        nullptr);
  double surr = 0, kl = 0;
  int clipped = 0;
  for (int i = 0; i < 2; ++i) {
    const DistributionParams now{{s.mean(i, 0)}, {s.log_std[0]}};
    const DistributionParams old{{s.batch.mean_old[i]}, {s.batch.log_std_old[i]}};
    const double ratio = std::exp(log_prob(now, std::vector<double>{s.batch.actions[i]}) - s.batch.log_prob_old[i]);
    const double a = s.batch.advantages[i];
    surr += std::min(ratio * a, std::clamp(ratio, 0.8, 1.2) * a);
    clipped += std::abs(ratio - 1) > 0.2;
    kl += kl_divergence(old, now);
  }
  const double vloss = (0.1 * 0.1 + 0.35 * 0.35) / 2;  // value errors 0.4 - 0.5, 0.1 + 0.25
  const double ent = entropy({{0.0}, {-0.5}});
  EXPECT_NEAR(st.policy_loss, -surr / 2, 1e-12);
  EXPECT_NEAR(st.mean_kl, kl / 2, 1e-12);
  EXPECT_NEAR(st.value_loss, vloss, 1e-12);
  EXPECT_NEAR(st.entropy, ent, 1e-12);
  EXPECT_EQ(st.clip_fraction, clipped / 2.0);
  EXPECT_NEAR(st.loss, -surr / 2 + beta * kl / 2 + 0.5 * vloss - 0.003 * ent, 1e-12);
  EXPECT_GT(clipped, 0);  // the second sample sits outside the clip range
}

TEST(PpoLoss, ZeroWeightsLeaveOnlyTheSurrogate) {
  TwoSample s;
  PPOConfig cfg;
  cfg.c_value = 0;
  cfg.c_entropy = 0;
  const LossStats st = ppo_loss<double>(s.batch, s.idx, s.mean, s.log_std, s.value, 0.0, cfg,
                                        nullptr);
  EXPECT_EQ(st.loss, st.policy_loss);
}

TEST(PpoLoss, IdentityAtTheOldPolicy) {
  TwoSample s;
  s.mean << 0.0, -0.1;
  s.batch.log_std_old = {-0.5, -0.5};
  for (int i = 0; i < 2; ++i) {
    s.batch.log_prob_old[i] =
        log_prob({{s.batch.mean_old[i]}, {-0.5}}, std::vector<double>{s.batch.actions[i]});
  }
  PPOConfig cfg;
  const LossStats st = ppo_loss<double>(s.batch, s.idx, s.mean, s.log_std, s.value, 1.0, cfg,
                                        nullptr);
  EXPECT_NEAR(st.policy_loss, 0.0, 1e-15);  // -mean(A) with normalized advantages
  EXPECT_EQ(st.mean_kl, 0.0);
  EXPECT_EQ(st.clip_fraction, 0.0);
}

TEST(PpoLoss, StatsStayInRange) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    TwoSample s;
    s.mean << n(rng), n(rng);
    s.log_std[0] = 0.5 * n(rng);
    const LossStats st = ppo_loss<double>(s.batch, s.idx, s.mean, s.log_std, s.value, 1.0,
                                          PPOConfig{}, nullptr);
    EXPECT_GE(st.mean_kl, 0.0);
    EXPECT_GE(st.clip_fraction, 0.0);
    EXPECT_LE(st.clip_fraction, 1.0);
  }
}

TEST(PpoLoss, GradientAtOldPolicyIsVanillaPolicyGradient) {
  const NetworkSpec spec = gradcheck_spec(2);
  const ActorCritic<double> net(spec);
  auto params = net.init(3, -0.3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double &w : params.policy.at("pi/head.w").values) w = 0.5 * n(rng);
  const int B = 5;
  MatrixX<double> x(B, spec.input_size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::abs(n(rng));

  ActorCritic<double>::Cache cache;
  const auto out = net.forward(params, x, &cache, true);
  TrajectoryBatch batch;
  batch.action_dim = 2;
  for (int i = 0; i < B; ++i) {
    const DistributionParams d{{out.mean(i, 0), out.mean(i, 1)}, {out.log_std[0], out.log_std[1]}};
    const auto [a, lp] = sample_action(d, rng);
    batch.actions.insert(batch.actions.end(), a.begin(), a.end());
    batch.log_prob_old.push_back(lp);
    batch.mean_old.insert(batch.mean_old.end(), d.mean.begin(), d.mean.end());
    batch.log_std_old.insert(batch.log_std_old.end(), d.log_std.begin(), d.log_std.end());
    batch.advantages.push_back(n(rng));
    batch.returns.push_back(0.0);
  }
  std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  PPOConfig cfg;
  cfg.c_value = 0;
  cfg.c_entropy = 0;
  LossGradients<double> lg;
  ppo_loss<double>(batch, idx, out.mean, out.log_std, out.value, 0.0, cfg, &lg);
  const auto grads = net.backward(params, cache, lg.d_mean, lg.d_log_std, lg.d_value);

  // -mean(log pi(a|s) * A) with the advantages held fixed, differentiated numerically.
  auto pg_objective = [&](const ActorCritic<double>::Params &p) {
    const auto o = net.forward(p, x, nullptr, false);
    double sum = 0.0;
    for (int i = 0; i < B; ++i) {
      const DistributionParams d{{o.mean(i, 0), o.mean(i, 1)}, {o.log_std[0], o.log_std[1]}};
      sum += log_prob(d, std::vector<double>{batch.actions[2 * i], batch.actions[2 * i + 1]}) * batch.advantages[i];
    }
    return -sum / B;
  };
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t k = 0; k < params.policy.size(); k += 7) {
    auto p = params;
    p.policy.flat(k) += h;
    const double up = pg_objective(p);
    p.policy.flat(k) -= 2 * h;
    const double down = pg_objective(p);
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads.policy.flat(k);
    EXPECT_NEAR(analytic, numeric, 1e-6 * std::max(1.0, std::abs(numeric))) << k;
    ++checked;
  }
  EXPECT_GT(checked, 20);
  for (std::size_t k = 0; k < grads.value.size(); ++k) ASSERT_EQ(grads.value.flat(k), 0.0);
}

TEST(PpoConfig, Validation) {
  PPOConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip_epsilon = 0.35;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.gamma = 1.01;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta_init = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

EnvConfig small_env() {
  EnvConfig e;
  e.horizon = 3.0;
  return e;
}

TEST(Train, ZeroStepsEmitsOnlyTheInitialCheckpoint) {
  PPOConfig cfg;
  cfg.total_steps = 0;
  const auto dir = test::scratch_dir("train_zero");
  TrainOptions opt;
  opt.out_dir = dir.string();
  const TrainResult r = train(test::shared_map("loop.map"), small_env(), cfg, opt);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.steps, 0);
  int files = 0;
  for (const auto &e : std::filesystem::directory_iterator(dir / "checkpoints")) {
    const Checkpoint c = load_checkpoint(e.path().string());
    EXPECT_EQ(c.step, 0);
    EXPECT_TRUE(c.params == r.params);
    ++files;
  }
  EXPECT_GE(files, 1);
  EXPECT_EQ(std::filesystem::file_size(dir / "train_log.jsonl"), 0u);
}

TEST(Train, TwoWorkerRunIsReproducible) {
  PPOConfig cfg;
  cfg.num_workers = 2;
  cfg.rollout_length = 64;
  cfg.minibatch_size = 32;
  cfg.epochs_per_iteration = 2;
  cfg.total_steps = 256;
  cfg.seed = 7;
  EnvConfig env = small_env();
  env.randomization.enabled = true;
  const auto track = test::shared_map("loop.map");
  const TrainResult a = train(track, env, cfg);
  const TrainResult b = train(track, env, cfg);
  ASSERT_EQ(a.log.size(), 2u);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].to_json_line(), b.log[i].to_json_line());
  }
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.steps, 256);

  cfg.seed = 8;
  const TrainResult c = train(track, env, cfg);
  EXPECT_FALSE(a.params == c.params);
}

}  // namespace
}  // namespace lanerl
