#pragma once

#include <string_view>

#include "lanerl/geometry.hpp"
#include "lanerl/track.hpp"
#include "lanerl/vehicle.hpp"

namespace lanerl {

enum class RewardKind { DistanceTraveled, Orientation };

std::string_view to_string(RewardKind kind);
RewardKind parse_reward_kind(std::string_view name);

struct RewardConfig {
  RewardKind kind = RewardKind::Orientation;
  double lambda_psi = 0.5;
  double lambda_v = 0.5;
  double phi = deg2rad(50.0);
  double epsilon = 0.05;
  double psi_max = deg2rad(50.0);
  double d_scale = 0.0;  // 0 = lane_width / 2 of the track (resolved by Env)
  double k_dist = 0.0;   // 0 = 1 / (top speed * dt), about 1 per step at full speed
  double lambda_coll = 10.0;
  bool collision_term = false;

  void validate() const;
};

/// Raised cosine on |x| <= phi, small negative linear slope beyond it.
double lambda_fn(double x, double phi, double epsilon);

/// Desired heading for a lateral offset: turn back toward the centerline, saturating at psi_max.
double psi_des(double d, double psi_max, double d_scale);

double reward_orientation(const LanePose &pose, WheelRates rates, const RewardConfig &cfg);

double reward_distance(double progress_delta, const LanePose &pose, double k_dist);

/// Rewards only a decreasing safety-circle penalty; never negative.
double reward_collision_term(double p_prev, double p_now, double lambda_coll);

}  // namespace lanerl
