#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lanerl/config.hpp"
#include "lanerl/eval.hpp"

namespace lanerl {

inline constexpr int kTeleopProtocolVersion = 1;

struct KeyState {
  bool up = false;
  bool down = false;
  bool left = false;
  bool right = false;
};

/// Result of the five-way key table. `steering` is the Steering-mapped raw action when the keys
/// request motion; braking leaves it empty. `rates` is what reaches the wheels either way.
struct KeyAction {
  std::optional<double> steering;
  WheelRates rates;

  /// The same wheel rates expressed as a raw action for the Braking mapping.
  std::array<double, 2> braking_raw() const { return {1.0 - rates.left, 1.0 - rates.right}; }
};

/// up: a = 0; up+left: -0.5; up+right: +0.5; left: -1; right: +1; none or down: brake.
/// Down overrides everything; left and right together cancel.
KeyAction discrete_key_action(const KeyState &keys);

/// Session logic without the transport: parses inbound messages, steps the environment from the
/// latest key state, and produces outbound messages. The environment runs the Braking mapping so
/// that stopping is expressible.
class TeleopSession {
 public:
  TeleopSession(std::shared_ptr<const TrackMap> track, EnvConfig env_config, TeleopConfig cfg,
                std::string map_id);

  /// Greeting sent on connect.
  std::string hello() const;
  /// Handles one inbound text message. Returns immediate replies (errors, acknowledgements).
  std::vector<std::string> handle(const std::string &text);
  /// Advances one control period if an episode is running. Returns the frame message and, when the
  /// episode ends, the episode summary.
  std::vector<std::string> tick(double t_server);
  /// Client went away: a running episode is closed as aborted and logged.
  void disconnect();

  bool running() const { return running_; }
  const KeyState &keys() const { return keys_; }
  int stale_dropped() const { return stale_dropped_; }
  /// Episodes finished in this session, in order.
  const std::vector<EpisodeLog> &episodes() const { return finished_; }
  const std::vector<std::string> &log_paths() const { return log_paths_; }
  const Env &env() const { return *env_; }
  double period() const { return env_->dt() / cfg_.speedup; }
  /// Camera and top-down PNGs are attached to frames; disable for headless tests.
  void set_images(bool on);

 private:
  std::string finish(TerminationReason reason);
  void start(std::uint64_t seed);

  std::shared_ptr<const TrackMap> track_;
  TeleopConfig cfg_;
  std::string map_id_;
  std::unique_ptr<Env> env_;
  KeyState keys_;
  std::optional<double> last_t_client_;
  int stale_dropped_ = 0;
  bool running_ = false;
  bool images_ = true;
  std::uint64_t episode_counter_ = 0;
  std::optional<EpisodeLog> log_;
  std::vector<EpisodeLog> finished_;
  std::vector<std::string> log_paths_;
};

struct TeleopServeOptions {
  /// Called with the bound port once listening (useful with port 0).
  std::function<void(unsigned short)> on_listening;
  /// Return after this many client sessions; 0 serves forever.
  int max_sessions = 0;
  /// Receives human-readable status lines.
  std::function<void(const std::string &)> log;
  /// Filled with the logs of each finished session.
  std::vector<EpisodeLog> *episodes = nullptr;
};

/// Websocket service on `cfg.port`. One client at a time; extra connections receive an error
/// message and are closed. Blocks until max_sessions sessions have ended.
void serve(std::shared_ptr<const TrackMap> track, const EnvConfig &env_config,
           const TeleopConfig &cfg, const std::string &map_id,
           const TeleopServeOptions &options = {});

}  // namespace lanerl
