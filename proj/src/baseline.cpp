#include "lanerl/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "lanerl/error.hpp"

namespace lanerl {

void PDConfig::validate() const {
  if (!(lookahead > 0.0)) throw ConfigError("pd.lookahead must be positive");
  if (!std::isfinite(k_p) || !std::isfinite(k_d)) throw ConfigError("pd gains must be finite");
}

PDController::PDController(PDConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void PDController::reset() {
  e_prev_.reset();
  last_action_ = 0.0;
  lost_ = false;
}

double PDController::control(const LanePose &pose, const TrackMap &track, const VehicleState &state,
                             double dt) {
  if (!pose.on_road) {
    lost_ = true;
    return last_action_;
  }
  const Vec2 target = track.centerline_point(pose.s + cfg_.lookahead).position;
  const Vec2 to = target - state.position;
  const double e = wrap_angle(std::atan2(to.y, to.x) - state.heading);
  const double de = e_prev_ ? (e - *e_prev_) / dt : 0.0;
  e_prev_ = e;
  last_action_ = std::clamp(-(cfg_.k_p * e + cfg_.k_d * de), -1.0, 1.0);
  return last_action_;
}

std::vector<double> PDBaseline::act(const Env &env) {
  return {pd_.control(env.lane_pose(), env.track(), env.ego(), env.dt())};
}

void FollowConfig::validate() const {
  pd.validate();
  if (!(target_gap > 0.0)) throw ConfigError("follow.target_gap must be positive");
  if (!(k_gap > 0.0)) throw ConfigError("follow.k_gap must be positive");
}

FollowController::FollowController(FollowConfig cfg) : cfg_(cfg), pd_(cfg.pd) { cfg_.validate(); }

std::vector<double> FollowController::act(const Env &env) {
  const double a = pd_.control(env.lane_pose(), env.track(), env.ego(), env.dt());
  const auto gap = env.lead_gap();
  const double f = gap ? std::clamp(cfg_.k_gap * (*gap - cfg_.target_gap), 0.0, 1.0) : 1.0;
  const double left = a >= 0.0 ? f : f * (1.0 + a);
  const double right = a >= 0.0 ? f * (1.0 - a) : f;
  return {1.0 - left, 1.0 - right};
}

PolicyController::PolicyController(NetworkSpec spec, ActorCritic<float>::Params params,
                                   ActionMapping mapping, std::string id)
    : net_(spec), params_(std::move(params)), mapping_(mapping), id_(std::move(id)) {
  if (spec.action_dim != action_dim(mapping)) {
    throw UsageError("policy outputs " + std::to_string(spec.action_dim) +
                     " action values but mapping '" + std::string(to_string(mapping)) +
                     "' expects " + std::to_string(action_dim(mapping)));
  }
}

std::vector<double> PolicyController::act(const Env &env) {
  return forward_policy(net_, params_, env.observation()).mean;
}

}  // namespace lanerl
