#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lanerl/env.hpp"

namespace lanerl {

/// Anything that produces raw actions for an Env: policies, baselines, humans, scripts.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string id() const = 0;
  /// Mapping the controller's raw actions are meant for.
  virtual ActionMapping mapping() const = 0;
  /// Whether act() reads camera observations (ground-truth controllers let the env skip rendering).
  virtual bool needs_observation() const { return false; }
  virtual void reset(const Env &env) { (void)env; }
  virtual std::vector<double> act(const Env &env) = 0;
};

struct StepRecord {
  double t = 0.0;
  VehicleState state;
  LanePose pose;
  WheelRates rates;
  double reward = 0.0;
  double p_coll = 0.0;
  std::optional<double> lead_gap;
};

/// Record 0 is the post-reset state at t = 0; record k is the state after step k.
struct EpisodeLog {
  std::string controller;
  std::string map_id;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double horizon = 0.0;
  TerminationReason termination_reason = TerminationReason::None;
  std::vector<StepRecord> records;
};

struct MetricsReport {
  double survival_time = 0.0;          // s
  double distance_ego_lane = 0.0;      // m
  double distance_both_lanes = 0.0;    // m
  double lateral_deviation = 0.0;      // m*s
  double orientation_deviation = 0.0;  // rad*s
};

struct MetricsSummary {
  int episodes = 0;
  MetricsReport mean;
  MetricsReport min;
  MetricsReport max;
};

/// Appends the post-step record for `result` to `log` (shared by eval and teleop).
void append_record(EpisodeLog &log, const Env &env, const StepResult &result);
/// Starts a log at the env's current (just reset) state.
EpisodeLog begin_log(const Env &env, std::string controller, std::string map_id, double horizon);

/// Steps `env` until done or `horizon` seconds. Throws UsageError when the controller's action
/// dimension does not match the env's mapping.
EpisodeLog run_episode(Controller &controller, Env &env, double horizon, std::uint64_t seed,
                       const std::string &map_id = "");

/// Runs one episode per seed on `threads` threads; logs come back in seed order.
std::vector<EpisodeLog> run_episodes(const std::function<std::unique_ptr<Controller>()> &make,
                                     std::shared_ptr<const TrackMap> track,
                                     const EnvConfig &env_config, double horizon,
                                     const std::vector<std::uint64_t> &seeds, int threads = 1,
                                     const std::string &map_id = "");

MetricsReport compute_metrics(const EpisodeLog &log, const TrackMap &track);
MetricsSummary aggregate(const std::vector<MetricsReport> &reports);

/// Per-episode CSV rows plus a trailing mean row. Byte-stable for identical inputs.
std::string metrics_csv(const std::vector<EpisodeLog> &logs,
                        const std::vector<MetricsReport> &reports);
void write_metrics_csv(const std::string &path, const std::vector<EpisodeLog> &logs,
                       const std::vector<MetricsReport> &reports);

/// Line-delimited JSON: an "episode" header line followed by one "step" line per record.
std::string episode_log_jsonl(const EpisodeLog &log);
void write_episode_logs(const std::string &path, const std::vector<EpisodeLog> &logs);
std::vector<EpisodeLog> parse_episode_logs(const std::string &text);
std::vector<EpisodeLog> load_episode_logs(const std::string &path);

}  // namespace lanerl
