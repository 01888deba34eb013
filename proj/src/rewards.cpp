#include "lanerl/rewards.hpp"

#include <algorithm>
#include <cmath>

#include "lanerl/error.hpp"

namespace lanerl {

std::string_view to_string(RewardKind kind) {
  return kind == RewardKind::Orientation ? "orientation" : "distance";
}

RewardKind parse_reward_kind(std::string_view name) {
  if (name == "orientation") return RewardKind::Orientation;
  if (name == "distance") return RewardKind::DistanceTraveled;
  throw ConfigError("unknown reward kind '" + std::string(name) +
                    "' (expected orientation or distance)");
}

void RewardConfig::validate() const {
  if (!(phi > 0.0)) throw ConfigError("reward.phi must be positive");
  if (!(epsilon >= 0.01 && epsilon <= 0.1)) {
    throw ConfigError("reward.epsilon must lie in [0.01, 0.1]");
  }
  if (!(lambda_psi >= 0.0 && lambda_v >= 0.0)) {
    throw ConfigError("reward.lambda_psi and reward.lambda_v must be non-negative");
  }
  if (!(d_scale >= 0.0)) throw ConfigError("reward.d_scale must be positive (or 0 for auto)");
  if (!(k_dist >= 0.0)) throw ConfigError("reward.k_dist must be positive (or 0 for auto)");
  if (!(lambda_coll >= 0.0)) throw ConfigError("reward.lambda_coll must be non-negative");
}

double lambda_fn(double x, double phi, double epsilon) {
  const double ratio = std::abs(x / phi);
  if (ratio <= 1.0) return 0.5 + 0.5 * std::cos(std::numbers::pi * ratio);
  return epsilon * (1.0 - ratio);
}

double psi_des(double d, double psi_max, double d_scale) {
  return -psi_max * std::clamp(d / d_scale, -1.0, 1.0);
}

double reward_orientation(const LanePose &pose, WheelRates rates, const RewardConfig &cfg) {
  const double psi_err = wrap_angle(pose.psi - psi_des(pose.d, cfg.psi_max, cfg.d_scale));
  return cfg.lambda_psi * lambda_fn(psi_err, cfg.phi, cfg.epsilon) +
         cfg.lambda_v * std::max(rates.left, rates.right);
}

double reward_distance(double progress_delta, const LanePose &pose, double k_dist) {
  return pose.in_right_lane ? k_dist * std::max(0.0, progress_delta) : 0.0;
}

double reward_collision_term(double p_prev, double p_now, double lambda_coll) {
  const double delta = p_now - p_prev;
  return delta < 0.0 ? -lambda_coll * delta : 0.0;
}

}  // namespace lanerl
