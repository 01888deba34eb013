#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "lanerl/actions.hpp"
#include "lanerl/camera.hpp"
#include "lanerl/rewards.hpp"
#include "lanerl/track.hpp"
#include "lanerl/vehicle.hpp"

namespace lanerl {

enum class TerminationReason { None, OffRoad, Collision, TimeLimit, Aborted };

std::string_view to_string(TerminationReason reason);
TerminationReason parse_termination_reason(std::string_view name);

struct EnvConfig {
  ActionMapping action_mapping = ActionMapping::Steering;
  RewardConfig reward;
  VehicleParams vehicle;
  CameraParams camera;
  RandomizationConfig randomization;
  /// When set, every reset draws a fresh map from this spec (keyed by the reset seed).
  std::optional<MapRandomization> map_randomization;
  double frame_rate = 15.0;
  double horizon = 15.0;  // seconds
  bool collision_mode = false;
  double lead_speed_fraction = 0.4;
  Range lead_gap{0.5, 2.0};
  double spawn_max_psi = deg2rad(30.0);
  /// Skip camera rendering (ground-truth controllers do not need observations).
  bool render = true;

  void validate() const;
};

struct StepInfo {
  LanePose lane_pose;
  double progress_delta = 0.0;
  double p_coll = 0.0;
  WheelRates rates;
  TerminationReason termination_reason = TerminationReason::None;
};

struct StepResult {
  ObservationTensor observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Gym-style lane-following episode engine. Single-threaded; instances share nothing mutable.
class Env {
 public:
  Env(std::shared_ptr<const TrackMap> track, EnvConfig config);

  ObservationTensor reset(std::uint64_t seed);
  StepResult step(std::span<const double> raw_action);
  /// Moves the ego to `state` at the current step (scripted scenarios); restarts the frame history.
  ObservationTensor place(const VehicleState &state);

  const EnvConfig &config() const { return config_; }
  const TrackMap &track() const { return *track_; }
  std::shared_ptr<const TrackMap> track_ptr() const { return track_; }
  double dt() const { return 1.0 / config_.frame_rate; }
  int horizon_steps() const;
  int step_index() const { return step_; }
  double time() const { return step_ * dt(); }
  bool done() const { return done_; }
  std::uint64_t seed() const { return seed_; }

  const VehicleState &ego() const { return ego_; }
  const LanePose &lane_pose() const { return pose_; }
  const std::optional<VehicleState> &lead() const { return lead_; }
  /// Along-track distance from the ego station to the lead vehicle's station.
  std::optional<double> lead_gap() const;
  double p_coll() const { return p_coll_; }
  const RandomizationState &randomization() const { return rand_; }
  /// Vehicle parameters after dynamics randomization.
  const VehicleParams &vehicle_params() const { return vehicle_; }
  const Image &last_frame() const { return frames_last_; }
  const ObservationTensor &observation() const { return observation_; }

 private:
  void render_frame(bool first);
  VehicleState lead_state() const;

  std::shared_ptr<const TrackMap> track_;
  EnvConfig config_;
  Renderer renderer_;
  FrameStack frames_;
  Image frames_last_;
  ObservationTensor observation_;
  RandomizationState rand_;
  VehicleParams vehicle_;
  VehicleState ego_;
  LanePose pose_;
  std::optional<VehicleState> lead_;
  double lead_s_ = 0.0;
  double p_coll_ = 0.0;
  std::uint64_t seed_ = 0;
  int step_ = 0;
  bool done_ = true;
};

}  // namespace lanerl
