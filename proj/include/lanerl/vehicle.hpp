#pragma once

#include "lanerl/geometry.hpp"

namespace lanerl {

struct VehicleParams {
  double wheel_radius = 0.0318;
  double baseline = 0.102;
  double max_wheel_rate = 0.5 / 0.0318;  // rad/s at a commanded rate of 1 (0.5 m/s top speed)
  double safety_radius = 0.15;
  double body_length = 0.18;

  double top_speed() const { return max_wheel_rate * wheel_radius; }
  void validate() const;
};

/// Dimensionless commanded wheel rates in [-1, 1].
struct WheelRates {
  double left = 0.0;
  double right = 0.0;
  bool operator==(const WheelRates &) const = default;
};

struct VehicleState {
  Vec2 position;
  double heading = 0.0;
  WheelRates rates;
  bool operator==(const VehicleState &) const = default;
};

/// Exact constant-twist integration of the differential-drive model over dt.
VehicleState step_kinematics(const VehicleState &state, WheelRates rates,
                             const VehicleParams &params, double dt);

/// Safety-circle overlap depth normalized by the circle diameter: 0 when disjoint, 1 when the
/// centers coincide.
double collision_penalty(const VehicleState &a, const VehicleState &b, const VehicleParams &params);

/// True when the centers are closer than one body length.
bool check_body_collision(const VehicleState &a, const VehicleState &b,
                          const VehicleParams &params);

}  // namespace lanerl
