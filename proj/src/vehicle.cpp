#include "lanerl/vehicle.hpp"

#include <algorithm>
#include <cmath>

#include "lanerl/error.hpp"

namespace lanerl {

void VehicleParams::validate() const {
  if (!(wheel_radius > 0 && baseline > 0 && max_wheel_rate > 0 && safety_radius > 0 &&
        body_length > 0)) {
    throw ConfigError("vehicle parameters must be strictly positive");
  }
  if (safety_radius < body_length / 2) {
    throw ConfigError("vehicle.safety_radius must be at least body_length / 2");
  }
}

VehicleState step_kinematics(const VehicleState &state, WheelRates rates,
                             const VehicleParams &params, double dt) {
  const double v_left = rates.left * params.max_wheel_rate * params.wheel_radius;
  const double v_right = rates.right * params.max_wheel_rate * params.wheel_radius;
  const double v = 0.5 * (v_left + v_right);
  const double omega = (v_right - v_left) / params.baseline;

  VehicleState next = state;
  next.rates = rates;
  const double turn = omega * dt;
  if (std::abs(omega) < 1e-9) {
    next.position += unit(state.heading) * (v * dt);
  } else {
    // Chord of the circular arc of radius v/omega, taken along the mid-arc heading.
    const double chord = 2.0 * (v / omega) * std::sin(0.5 * turn);
    next.position += unit(state.heading + 0.5 * turn) * chord;
  }
  next.heading = wrap_angle(state.heading + turn);
  return next;
}

double collision_penalty(const VehicleState &a, const VehicleState &b,
                         const VehicleParams &params) {
  const double diameter = 2.0 * params.safety_radius;
  return std::max(0.0, (diameter - distance(a.position, b.position)) / diameter);
}

bool check_body_collision(const VehicleState &a, const VehicleState &b,
                          const VehicleParams &params) {
  return distance(a.position, b.position) < params.body_length;
}

}  // namespace lanerl
