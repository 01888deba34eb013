#pragma once

#include <json.hpp>
#include <memory>
#include <optional>
#include <string>

#include "lanerl/baseline.hpp"
#include "lanerl/env.hpp"
#include "lanerl/ppo.hpp"

namespace lanerl {

struct EvalConfig {
  int episodes = 5;
  double horizon = 15.0;  // s
  std::uint64_t seed = 1000;
  int threads = 1;

  void validate() const;
};

struct TeleopConfig {
  int port = 8700;  // 0 picks a free port
  double horizon = 15.0;  // s
  /// Simulated seconds per wall-clock second (1 = real time).
  double speedup = 1.0;
  std::string log_dir = "teleop_logs";

  void validate() const;
};

/// The single run-configuration document.
struct RunConfig {
  /// Map file; ignored when map_randomization is set on the env.
  std::string map = "maps/loop.map";
  EnvConfig env;
  PPOConfig ppo;
  PDConfig pd;
  FollowConfig follow;
  EvalConfig eval;
  TeleopConfig teleop;

  void validate() const;
};

/// Parses and validates a configuration document. Missing fields take defaults; unknown keys and
/// type errors raise ConfigError naming the field path (e.g. "env.reward.phi_deg").
RunConfig parse_run_config(const nlohmann::json &doc);
RunConfig load_run_config(const std::string &path);
/// Every field, defaults included. parse_run_config(to_json(c)) reproduces c.
nlohmann::ordered_json to_json(const RunConfig &cfg);

/// Applies `path.to.field=value` (value parsed as JSON, falling back to a string).
void apply_override(nlohmann::json &doc, const std::string &assignment);

/// Loads the map named by the config, or the first random map when map randomization is on.
std::shared_ptr<const TrackMap> load_config_map(const RunConfig &cfg,
                                                const std::string &base_dir = "");

}  // namespace lanerl
