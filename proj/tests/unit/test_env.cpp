#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "lanerl/env.hpp"
#include "lanerl/error.hpp"

namespace lanerl {
namespace {

WheelRates map1(ActionMapping m, double a) {
  const double raw[1] = {a};
  return map_action(m, raw);
}
WheelRates map2(ActionMapping m, double a, double b) {
  const double raw[2] = {a, b};
  return map_action(m, raw);
}

TEST(Actions, PaperExamples) {
  EXPECT_EQ(map1(ActionMapping::Steering, 0.0), (WheelRates{1, 1}));
  EXPECT_EQ(map1(ActionMapping::Steering, 1.0), (WheelRates{1, 0}));
  EXPECT_EQ(map1(ActionMapping::Steering, -1.0), (WheelRates{0, 1}));
  EXPECT_EQ(map2(ActionMapping::WheelVelocityBraking, 0, 0), (WheelRates{1, 1}));
  EXPECT_EQ(map2(ActionMapping::WheelVelocityBraking, 1, 1), (WheelRates{0, 0}));
  EXPECT_EQ(map2(ActionMapping::WheelVelocityBraking, -0.2, 0.5), (WheelRates{1, 0.5}));
  EXPECT_EQ(map2(ActionMapping::WheelVelocityPositiveOnly, -0.3, 1.4), (WheelRates{0, 1}));
  EXPECT_EQ(map2(ActionMapping::WheelVelocity, -1.7, 0.25), (WheelRates{-1, 0.25}));
}

TEST(Actions, DimensionMismatchRejected) {
  const double two[2] = {0, 0};
  const double one[1] = {0};
  EXPECT_THROW(map_action(ActionMapping::Steering, two), UsageError);
  EXPECT_THROW(map_action(ActionMapping::WheelVelocity, one), UsageError);
}

TEST(Actions, TotalClampingAndSteeringInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> wide(-10, 10), unit_a(-1, 1);
  for (auto m : {ActionMapping::WheelVelocity, ActionMapping::WheelVelocityPositiveOnly,
                 ActionMapping::WheelVelocityBraking}) {
    for (int i = 0; i < 1000; ++i) {
      const WheelRates r = map2(m, wide(rng), wide(rng));
      EXPECT_LE(std::abs(r.left), 1.0);
      EXPECT_LE(std::abs(r.right), 1.0);
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const WheelRates r = map1(ActionMapping::Steering, unit_a(rng));
    EXPECT_EQ(std::max(r.left, r.right), 1.0);
    EXPECT_GE(std::min(r.left, r.right), 0.0);
  }
}

TEST(Actions, NamesRoundTrip) {
  for (auto m : {ActionMapping::WheelVelocity, ActionMapping::WheelVelocityPositiveOnly,
                 ActionMapping::WheelVelocityBraking, ActionMapping::Steering}) {
    EXPECT_EQ(parse_action_mapping(to_string(m)), m);
  }
  EXPECT_THROW(parse_action_mapping("tank"), ConfigError);
}

TEST(Rewards, LambdaExamples) {
  const double phi = deg2rad(50), eps = 0.05;
  EXPECT_EQ(lambda_fn(0.0, phi, eps), 1.0);
  EXPECT_NEAR(lambda_fn(phi, phi, eps), 0.0, 1e-15);
  EXPECT_NEAR(lambda_fn(-phi, phi, eps), 0.0, 1e-15);
  EXPECT_NEAR(lambda_fn(phi / 2, phi, eps), 0.5, 1e-15);
  EXPECT_NEAR(lambda_fn(2 * phi, phi, eps), -0.05, 1e-15);
}

TEST(Rewards, LambdaContinuousEvenAndNonPositiveOutside) {
  const double phi = 0.8, eps = 0.03;
  for (double s : {-1.0, 1.0}) {
    const double in = lambda_fn(s * phi * (1 - 1e-13), phi, eps);
    const double out = lambda_fn(s * phi * (1 + 1e-13), phi, eps);
    EXPECT_LT(std::abs(in - out), 1e-12);
  }
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> x(-4, 4);
  for (int i = 0; i < 1000; ++i) {
    const double v = x(rng);
    EXPECT_EQ(lambda_fn(v, phi, eps), lambda_fn(-v, phi, eps));
    EXPECT_LE(lambda_fn(v, phi, eps), 1.0);
    if (std::abs(v) >= phi) EXPECT_LE(lambda_fn(v, phi, eps), 0.0);
  }
}

TEST(Rewards, PsiDesExamples) {
  const double pmax = deg2rad(50), ds = 0.146;
  EXPECT_EQ(psi_des(0.0, pmax, ds), 0.0);
  EXPECT_DOUBLE_EQ(psi_des(ds, pmax, ds), -pmax);
  EXPECT_DOUBLE_EQ(psi_des(-2 * ds, pmax, ds), pmax);
  EXPECT_DOUBLE_EQ(psi_des(ds / 2, pmax, ds), -pmax / 2);
}

TEST(Rewards, OrientationExamples) {
  RewardConfig c;
  c.d_scale = 0.146;
  LanePose p;
  EXPECT_DOUBLE_EQ(reward_orientation(p, {1, 1}, c), 1.0);
  // Velocity term only depends on the faster wheel.
  const double a = reward_orientation(p, {0.3, 0.9}, c) - c.lambda_psi * 1.0;
  EXPECT_DOUBLE_EQ(a, 0.9 * c.lambda_v);
  p.psi = 2 * c.phi;
  EXPECT_NEAR(reward_orientation(p, {0, 0}, c), c.lambda_psi * -0.05, 1e-15);
}

TEST(Rewards, OrientationMaximumAtCenteredFullSpeed) {
  RewardConfig c;
  c.d_scale = 0.146;
  const double best = reward_orientation(LanePose{}, {1, 1}, c);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-0.4, 0.4), psi(-3.1, 3.1), w(-1, 1);
  for (int i = 0; i < 5000; ++i) {
    LanePose p;
    p.d = d(rng);
    p.psi = psi(rng);
    EXPECT_LE(reward_orientation(p, {w(rng), w(rng)}, c), best);
  }
}

TEST(Rewards, DistanceExamples) {
  LanePose in;
  in.in_right_lane = in.on_road = true;
  LanePose out;
  out.on_road = true;
  EXPECT_DOUBLE_EQ(reward_distance(0.01, in, 1.0), 0.01);
  EXPECT_EQ(reward_distance(0.01, out, 1.0), 0.0);
  EXPECT_EQ(reward_distance(-0.01, in, 1.0), 0.0);
}

TEST(Rewards, CollisionTermExamples) {
  EXPECT_NEAR(reward_collision_term(0.30, 0.25, 10), 0.5, 1e-12);
  EXPECT_EQ(reward_collision_term(0.1, 0.2, 10), 0.0);
  EXPECT_EQ(reward_collision_term(0.2, 0.2, 10), 0.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(reward_collision_term(u(rng), u(rng), 10), 0.0);
}

TEST(Rewards, ConfigValidated) {
  RewardConfig c;
  c.epsilon = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.phi = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_reward_kind("distance"), RewardKind::DistanceTraveled);
}

TEST(Env, ResetIsDeterministic) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.randomization.enabled = true;
  Env a(track, cfg), b(track, cfg);
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const ObservationTensor oa = a.reset(seed);
    const ObservationTensor ob = b.reset(seed);
    EXPECT_EQ(oa, ob);
    EXPECT_EQ(a.ego(), b.ego());
    EXPECT_EQ(a.randomization(), b.randomization());
  }
}

TEST(Env, ResetPosesWithinSpawnBounds) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.render = false;
  Env env(track, cfg);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    env.reset(seed);
    const LanePose &p = env.lane_pose();
    EXPECT_TRUE(p.in_right_lane);
    EXPECT_LE(std::abs(p.d), track->lane_width() / 4 + 1e-12);
    EXPECT_LE(std::abs(p.psi), deg2rad(30) + 1e-12);
  }
}

TEST(Env, CollisionModeGapWithinBounds) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.render = false;
  cfg.collision_mode = true;
  Env env(track, cfg);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    env.reset(seed);
    ASSERT_TRUE(env.lead_gap().has_value());
    EXPECT_GE(*env.lead_gap(), 0.5 - 1e-9);
    EXPECT_LE(*env.lead_gap(), 2.0 + 1e-9);
    EXPECT_TRUE(env.lead().has_value());
  }
}

TEST(Env, FullSpeedStraightEarnsUnitReward) {
  const auto track = test::shared_map("straight.map");
  EnvConfig cfg;
  cfg.render = false;
  Env env(track, cfg);
  env.reset(0);
  const auto cp = track->centerline_point(test::mid_straight_station(*track));
  env.place({cp.position, cp.tangent, {}});
  const double a[1] = {0.0};
  for (int i = 0; i < 10; ++i) {
    const StepResult r = env.step(a);
    EXPECT_NEAR(r.reward, 1.0, 1e-12);
    EXPECT_FALSE(r.done);
    EXPECT_NEAR(r.info.progress_delta, 0.5 / 15, 1e-12);
  }
}

TEST(Env, LeavingTheRoadTerminates) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.render = false;
  Env env(track, cfg);
  env.reset(3);
  const double a[1] = {0.3};  // gentle right arc, off the right edge
  StepResult r;
  for (int i = 0; i < 200 && !r.done; ++i) r = env.step(a);
  ASSERT_TRUE(r.done);
  EXPECT_EQ(r.info.termination_reason, TerminationReason::OffRoad);
  EXPECT_FALSE(r.info.lane_pose.on_road);
  EXPECT_THROW(env.step(a), UsageError);
}

TEST(Env, TimeLimitAtHorizon) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.render = false;
  cfg.action_mapping = ActionMapping::WheelVelocityBraking;
  cfg.horizon = 2.0;
  Env env(track, cfg);
  env.reset(0);
  const double brake[2] = {1, 1};
  int steps = 0;
  StepResult r;
  while (!r.done) {
    r = env.step(brake);
    ++steps;
  }
  EXPECT_EQ(steps, 30);
  EXPECT_EQ(r.info.termination_reason, TerminationReason::TimeLimit);
}

TEST(Env, CollisionTerminatesWithoutPenalty) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.render = false;
  cfg.collision_mode = true;
  cfg.reward.collision_term = true;
  Env env(track, cfg);
  env.reset(0);
  // Put the ego on the centerline right behind the lead vehicle and drive straight into it.
  const double lead_s = env.lane_pose().s + *env.lead_gap();
  const auto cp = track->centerline_point(lead_s - 0.25);
  env.place({cp.position, cp.tangent, {}});
  const double a[1] = {0.0};
  StepResult r;
  for (int i = 0; i < 100 && !r.done; ++i) r = env.step(a);
  ASSERT_TRUE(r.done);
  EXPECT_EQ(r.info.termination_reason, TerminationReason::Collision);
  RewardConfig rc = cfg.reward;
  rc.d_scale = track->lane_width() / 2;
  EXPECT_DOUBLE_EQ(r.reward, reward_orientation(r.info.lane_pose, r.info.rates, rc));
}

TEST(Env, EpisodesAreBitExactForEqualActions) {
  const auto track = test::shared_map("loop.map");
  EnvConfig cfg;
  cfg.randomization.enabled = true;
  cfg.horizon = 3.0;
  Env a(track, cfg), b(track, cfg);
  a.reset(17);
  b.reset(17);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  while (!a.done()) {
    const double act[1] = {u(rng)};
    const StepResult ra = a.step(act);
    const StepResult rb = b.step(act);
    EXPECT_EQ(ra.observation, rb.observation);
    EXPECT_EQ(ra.reward, rb.reward);
    EXPECT_EQ(ra.done, rb.done);
    EXPECT_EQ(a.ego(), b.ego());
  }
}

TEST(Env, DistanceRewardPerStepNearOneAtFullSpeed) {
  const auto track = test::shared_map("straight.map");
  EnvConfig cfg;
  cfg.render = false;
  cfg.reward.kind = RewardKind::DistanceTraveled;
  Env env(track, cfg);
  env.reset(0);
  const auto cp = track->centerline_point(test::mid_straight_station(*track));
  env.place({cp.position, cp.tangent, {}});
  const double a[1] = {0.0};
  EXPECT_NEAR(env.step(a).reward, 1.0, 1e-9);
}

TEST(Env, ObservationShapeAndRange) {
  const auto track = test::shared_map("loop.map");
  Env env(track, EnvConfig{});
  const ObservationTensor o = env.reset(5);
  EXPECT_EQ(o.codes.size(), std::size_t(ObservationTensor::kLength));
  // First observation replicates the first frame three times.
  for (int y = 0; y < 84; y += 7) {
    for (int x = 0; x < 84; x += 7) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(o.value(y, x, c), o.value(y, x, c + 3));
        EXPECT_EQ(o.value(y, x, c), o.value(y, x, c + 6));
      }
    }
  }
}

TEST(Env, MapRandomizationChangesMapPerEpisode) {
  EnvConfig cfg;
  cfg.render = false;
  cfg.map_randomization = MapRandomization{};
  Env env(nullptr, cfg);
  env.reset(1);
  const TrackMap first = env.track();
  int differing = 0;
  for (std::uint64_t s = 2; s < 12; ++s) {
    env.reset(s);
    differing += !(env.track() == first);
  }
  EXPECT_GE(differing, 5);
  env.reset(1);
  EXPECT_EQ(env.track(), first);
}

}  // namespace
}  // namespace lanerl
