#pragma once

#include <memory>

#include "lanerl/eval.hpp"
#include "lanerl/policy.hpp"

namespace lanerl {

struct PDConfig {
  double lookahead = 0.25;  // m
  double k_p = 2.0;
  double k_d = 0.02;

  void validate() const;
};

/// Steers toward the centerline point `lookahead` ahead of the current station.
class PDController {
 public:
  explicit PDController(PDConfig cfg = {});

  void reset();
  /// Steering action a in [-1, 1]. Off-road poses return the previous action and set lost_track().
  double control(const LanePose &pose, const TrackMap &track, const VehicleState &state, double dt);
  bool lost_track() const { return lost_; }
  /// Heading error used by the last control() call.
  double last_error() const { return e_prev_.value_or(0.0); }

 private:
  PDConfig cfg_;
  std::optional<double> e_prev_;
  double last_action_ = 0.0;
  bool lost_ = false;
};

class PDBaseline final : public Controller {
 public:
  explicit PDBaseline(PDConfig cfg = {}) : pd_(cfg) {}
  std::string id() const override { return "pd"; }
  ActionMapping mapping() const override { return ActionMapping::Steering; }
  void reset(const Env &) override { pd_.reset(); }
  std::vector<double> act(const Env &env) override;

 private:
  PDController pd_;
};

/// Full brake through the Braking mapping: raw (1, 1) -> wheel rates (0, 0).
class BrakeController final : public Controller {
 public:
  std::string id() const override { return "scripted-brake"; }
  ActionMapping mapping() const override { return ActionMapping::WheelVelocityBraking; }
  std::vector<double> act(const Env &) override { return {1.0, 1.0}; }
};

struct FollowConfig {
  double target_gap = 0.5;  // m, along-track
  double k_gap = 2.0;       // speed fraction per metre of gap error
  PDConfig pd;

  void validate() const;
};

/// Ground-truth car follower: PD steering, speed from a proportional gap controller. Acts
/// through the Braking mapping so it can slow down.
class FollowController final : public Controller {
 public:
  explicit FollowController(FollowConfig cfg = {});
  std::string id() const override { return "scripted-follow"; }
  ActionMapping mapping() const override { return ActionMapping::WheelVelocityBraking; }
  void reset(const Env &) override { pd_.reset(); }
  std::vector<double> act(const Env &env) override;

 private:
  FollowConfig cfg_;
  PDController pd_;
};

/// Trained policy; acts with the distribution mean.
class PolicyController final : public Controller {
 public:
  PolicyController(NetworkSpec spec, ActorCritic<float>::Params params, ActionMapping mapping,
                   std::string id = "policy");
  std::string id() const override { return id_; }
  ActionMapping mapping() const override { return mapping_; }
  bool needs_observation() const override { return true; }
  std::vector<double> act(const Env &env) override;

 private:
  ActorCritic<float> net_;
  ActorCritic<float>::Params params_;
  ActionMapping mapping_;
  std::string id_;
};

}  // namespace lanerl
