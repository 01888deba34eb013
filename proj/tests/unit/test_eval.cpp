#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "lanerl/baseline.hpp"
#include "lanerl/error.hpp"
#include "lanerl/eval.hpp"

namespace lanerl {
namespace {

/// The longest run of collinear straight pieces, treated as one line segment.
struct StraightRun {
  Vec2 start;
  double heading;
  double length;
};

StraightRun longest_straight(const TrackMap &m) {
  StraightRun best{{}, 0, 0};
  const auto pieces = m.pieces();
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].curvature != 0.0) continue;
    double len = 0;
    std::size_t j = i;
    while (j < pieces.size() && pieces[j].curvature == 0.0 && pieces[j].heading == pieces[i].heading) {
      len += pieces[j].length;
      ++j;
    }
    if (len > best.length) best = {pieces[i].start, pieces[i].heading, len};
  }
  return best;
}

/// Scripted wandering path along the straight run: forward speed and lateral offset vary smoothly,
/// with occasional reversing. Lane poses come from the track, as in a real log.
EpisodeLog scripted_log(const TrackMap &m, const StraightRun &run, std::mt19937_64 &rng,
                        int steps, double dt) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double lane = m.lane_width();
  const double amp = (0.2 + 0.7 * u(rng)) * lane, offset = (u(rng) - 0.2) * 0.5 * lane;
  const double w = 0.5 + 3 * u(rng), phase = 6.28 * u(rng);
  const double v0 = 0.1 + 0.3 * u(rng), v1 = 0.2 * u(rng);
  EpisodeLog log;
  log.controller = "scripted";
  log.map_id = "straight";
  log.dt = dt;
  log.horizon = steps * dt;
  const Vec2 along = unit(run.heading), left = left_normal(along);
  double x = 0.3;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    x += (v0 + v1 * std::sin(3 * w * t)) * (k ? dt : 0.0) - (u(rng) < 0.1 ? 0.02 : 0.0);
    x = std::clamp(x, 0.05, run.length - 0.05);
    const double d = std::clamp(offset + amp * std::sin(w * t + phase), -0.49 * lane, 1.49 * lane);
    StepRecord r;
    r.t = t;
    r.state.position = run.start + along * x + left * d;
    r.state.heading = wrap_angle(run.heading + 0.3 * std::sin(2 * w * t));
    r.pose = m.lane_pose(r.state.position, r.state.heading);
    log.records.push_back(r);
  }
  return log;
}

/// Re-integrates the metrics from raw positions and the analytic line geometry.
MetricsReport brute_force_metrics(const EpisodeLog &log, const StraightRun &run, double lane) {
  const Vec2 along = unit(run.heading), left = left_normal(along);
  MetricsReport m;
  m.survival_time = log.records.back().t - log.records.front().t;
  for (std::size_t k = 1; k < log.records.size(); ++k) {
    const StepRecord &a = log.records[k - 1], &b = log.records[k];
    const double ds = dot(b.state.position - a.state.position, along);
    const double d = dot(b.state.position - run.start, left);
    const double psi = wrap_angle(b.state.heading - run.heading);
    const double dt = b.t - a.t;
    const bool ego = std::abs(d) <= lane / 2;
    const bool road = d >= -lane / 2 && d <= 1.5 * lane;
    if (ds > 0 && ego) m.distance_ego_lane += ds;
    if (ds > 0 && road) m.distance_both_lanes += ds;
    m.lateral_deviation += std::abs(d) * dt;
    m.orientation_deviation += std::abs(psi) * dt;
  }
  return m;
}

void expect_rel(double a, double b, double tol) {
  EXPECT_LE(std::abs(a - b), tol * std::max(std::abs(b), 1e-3)) << a << " vs " << b;
}

TEST(Metrics, AgreeWithIndependentIntegrator) {
  const TrackMap m = load_map_file(test::map_path("straight.map"));
  const StraightRun run = longest_straight(m);
  ASSERT_GT(run.length, 5.0);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const EpisodeLog log = scripted_log(m, run, rng, 150, 1.0 / 15);
    const MetricsReport got = compute_metrics(log, m);
    const MetricsReport want = brute_force_metrics(log, run, m.lane_width());
    expect_rel(got.survival_time, want.survival_time, 1e-9);
    expect_rel(got.distance_ego_lane, want.distance_ego_lane, 1e-9);
    expect_rel(got.distance_both_lanes, want.distance_both_lanes, 1e-9);
    expect_rel(got.lateral_deviation, want.lateral_deviation, 1e-9);
    expect_rel(got.orientation_deviation, want.orientation_deviation, 1e-9);
    EXPECT_LE(got.distance_ego_lane, got.distance_both_lanes);
  }
}

TEST(Metrics, StraightFullSpeedExample) {
  const TrackMap m = load_map_file(test::map_path("straight.map"));
  const StraightRun run = longest_straight(m);
  EpisodeLog log;
  const double dt = 0.1;
  for (int k = 0; k <= 100; ++k) {
    StepRecord r;
    r.t = k * dt;
    r.state.position = run.start + unit(run.heading) * (0.1 + 0.5 * r.t);
    r.state.heading = run.heading;
    r.pose = m.lane_pose(r.state.position, r.state.heading);
    log.records.push_back(r);
  }
  const MetricsReport got = compute_metrics(log, m);
  EXPECT_NEAR(got.survival_time, 10.0, 1e-12);
  EXPECT_NEAR(got.distance_ego_lane, 5.0, 1e-9);
  EXPECT_NEAR(got.distance_both_lanes, 5.0, 1e-9);
  EXPECT_NEAR(got.lateral_deviation, 0.0, 1e-9);
  EXPECT_NEAR(got.orientation_deviation, 0.0, 1e-9);
}

TEST(Metrics, HalfTimeInOncomingLaneDoublesBothLanes) {
  const TrackMap m = load_map_file(test::map_path("straight.map"));
  const StraightRun run = longest_straight(m);
  EpisodeLog log;
  const Vec2 along = unit(run.heading), left = left_normal(along);
  for (int k = 0; k <= 100; ++k) {
    StepRecord r;
    r.t = k * 0.1;
    const double d = k <= 50 ? 0.0 : m.lane_width();
    r.state.position = run.start + along * (0.1 + 0.05 * k) + left * d;
    r.state.heading = run.heading;
    r.pose = m.lane_pose(r.state.position, r.state.heading);
    log.records.push_back(r);
  }
  const MetricsReport got = compute_metrics(log, m);
  EXPECT_NEAR(got.distance_both_lanes / got.distance_ego_lane, 2.0, 1e-9);
}

TEST(Metrics, AdditiveAtACutPoint) {
  const TrackMap m = load_map_file(test::map_path("straight.map"));
  const StraightRun run = longest_straight(m);
  std::mt19937_64 rng(2);
  const EpisodeLog log = scripted_log(m, run, rng, 120, 1.0 / 15);
  EpisodeLog head = log, tail = log;
  head.records.resize(61);
  tail.records.erase(tail.records.begin(), tail.records.begin() + 60);
  const MetricsReport all = compute_metrics(log, m), a = compute_metrics(head, m),
                      b = compute_metrics(tail, m);
  EXPECT_NEAR(a.survival_time + b.survival_time, all.survival_time, 1e-12);
  EXPECT_NEAR(a.distance_ego_lane + b.distance_ego_lane, all.distance_ego_lane, 1e-12);
  EXPECT_NEAR(a.distance_both_lanes + b.distance_both_lanes, all.distance_both_lanes, 1e-12);
  EXPECT_NEAR(a.lateral_deviation + b.lateral_deviation, all.lateral_deviation, 1e-12);
  EXPECT_NEAR(a.orientation_deviation + b.orientation_deviation, all.orientation_deviation, 1e-12);
}

TEST(Metrics, EmptyLogRejected) {
  const TrackMap m = load_map_file(test::map_path("loop.map"));
  EXPECT_THROW(compute_metrics(EpisodeLog{}, m), UsageError);
}

TEST(Aggregate, Examples) {
  MetricsReport a;
  a.survival_time = 10;
  a.distance_ego_lane = 1;
  MetricsReport b;
  b.survival_time = 20;
  b.distance_ego_lane = 3;
  const MetricsSummary one = aggregate({a});
  EXPECT_EQ(one.episodes, 1);
  EXPECT_EQ(one.mean.survival_time, 10);
  const MetricsSummary two = aggregate({a, b});
  EXPECT_EQ(two.mean.survival_time, 15);
  EXPECT_EQ(two.mean.distance_ego_lane, 2);
  EXPECT_EQ(two.min.survival_time, 10);
  EXPECT_EQ(two.max.survival_time, 20);
  EXPECT_THROW(aggregate({}), UsageError);
}

TEST(RunEpisode, BrakeControllerStaysStillForTheHorizon) {
  EnvConfig cfg;
  cfg.action_mapping = ActionMapping::WheelVelocityBraking;
  cfg.render = false;
  cfg.horizon = 15.0;
  Env env(test::shared_map("loop.map"), cfg);
  BrakeController brake;
  const EpisodeLog log = run_episode(brake, env, 15.0, 4, "loop");
  const MetricsReport r = compute_metrics(log, env.track());
  EXPECT_NEAR(r.survival_time, 15.0, 1e-9);
  EXPECT_EQ(r.distance_ego_lane, 0.0);
  EXPECT_EQ(r.distance_both_lanes, 0.0);
  EXPECT_EQ(log.records.front().state.position, log.records.back().state.position);
  EXPECT_EQ(log.termination_reason, TerminationReason::TimeLimit);
  for (std::size_t k = 1; k < log.records.size(); ++k) {
    EXPECT_NEAR(log.records[k].t - log.records[k - 1].t, log.dt, 1e-12);
  }
}

TEST(RunEpisode, MappingMismatchRejected) {
  EnvConfig cfg;
  cfg.action_mapping = ActionMapping::WheelVelocity;
  cfg.render = false;
  Env env(test::shared_map("loop.map"), cfg);
  PDBaseline pd;
  EXPECT_THROW(run_episode(pd, env, 1.0, 0), UsageError);
}

TEST(RunEpisode, ParallelRunsMatchSerialAndAreDeterministic) {
  EnvConfig cfg;
  cfg.render = false;
  cfg.randomization.enabled = true;
  const auto track = test::shared_map("loop.map");
  auto make = [] { return std::make_unique<PDBaseline>(); };
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  const auto serial = run_episodes(make, track, cfg, 5.0, seeds, 1, "loop");
  const auto parallel = run_episodes(make, track, cfg, 5.0, seeds, 3, "loop");
  ASSERT_EQ(serial.size(), 4u);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    EXPECT_EQ(serial[i].seed, seeds[i]);
    EXPECT_EQ(episode_log_jsonl(serial[i]), episode_log_jsonl(parallel[i]));
  }
}

TEST(Export, EmptyListIsHeaderOnly) {
  const std::string csv = metrics_csv({}, {});
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_EQ(csv.rfind("episode,", 0), 0u);
}

TEST(Export, CsvHasOneRowPerEpisodePlusMean) {
  EnvConfig cfg;
  cfg.render = false;
  const auto track = test::shared_map("loop.map");
  const auto logs = run_episodes([] { return std::make_unique<PDBaseline>(); }, track, cfg, 2.0,
                                 {0, 1}, 1, "loop");
  std::vector<MetricsReport> reports;
  for (const auto &l : logs) reports.push_back(compute_metrics(l, *track));
  const std::string csv = metrics_csv(logs, reports);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
  EXPECT_EQ(csv, metrics_csv(logs, reports));
  EXPECT_THROW(metrics_csv(logs, {}), UsageError);
}

TEST(Export, JsonlRoundTripReproducesMetricsExactly) {
  EnvConfig cfg;
  cfg.render = false;
  cfg.randomization.enabled = true;
  const auto track = test::shared_map("loop.map");
  const auto logs = run_episodes([] { return std::make_unique<PDBaseline>(); }, track, cfg, 3.0,
                                 {5, 6}, 1, "loop");
  const auto path = (test::scratch_dir("jsonl") / "episodes.jsonl").string();
  write_episode_logs(path, logs);
  const auto back = load_episode_logs(path);
  ASSERT_EQ(back.size(), logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    EXPECT_EQ(back[i].controller, logs[i].controller);
    EXPECT_EQ(back[i].seed, logs[i].seed);
    EXPECT_EQ(back[i].termination_reason, logs[i].termination_reason);
    ASSERT_EQ(back[i].records.size(), logs[i].records.size());
    const MetricsReport a = compute_metrics(logs[i], *track), b = compute_metrics(back[i], *track);
    EXPECT_EQ(a.survival_time, b.survival_time);
    EXPECT_EQ(a.distance_ego_lane, b.distance_ego_lane);
    EXPECT_EQ(a.distance_both_lanes, b.distance_both_lanes);
    EXPECT_EQ(a.lateral_deviation, b.lateral_deviation);
    EXPECT_EQ(a.orientation_deviation, b.orientation_deviation);
    EXPECT_EQ(episode_log_jsonl(back[i]), episode_log_jsonl(logs[i]));
  }
}

TEST(Export, MalformedJsonlRejected) {
  EXPECT_THROW(parse_episode_logs("{\"type\":\"step\"}\n"), IoError);
  EXPECT_THROW(parse_episode_logs("not json\n"), IoError);
}

}  // namespace
}  // namespace lanerl
