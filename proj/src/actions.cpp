#include "lanerl/actions.hpp"

#include <algorithm>

#include "lanerl/error.hpp"

namespace lanerl {

int action_dim(ActionMapping mapping) { return mapping == ActionMapping::Steering ? 1 : 2; }

std::string_view to_string(ActionMapping mapping) {
  switch (mapping) {
    case ActionMapping::WheelVelocity: return "wheel_velocity";
    case ActionMapping::WheelVelocityPositiveOnly: return "wheel_velocity_positive";
    case ActionMapping::WheelVelocityBraking: return "wheel_velocity_braking";
    case ActionMapping::Steering: return "steering";
  }
  return "?";
}

ActionMapping parse_action_mapping(std::string_view name) {
  for (auto m : {ActionMapping::WheelVelocity, ActionMapping::WheelVelocityPositiveOnly,
                 ActionMapping::WheelVelocityBraking, ActionMapping::Steering}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown action mapping '" + std::string(name) +
                    "' (expected wheel_velocity, wheel_velocity_positive, "
                    "wheel_velocity_braking or steering)");
}

WheelRates map_action(ActionMapping mapping, std::span<const double> raw) {
  if (static_cast<int>(raw.size()) != action_dim(mapping)) {
    throw UsageError("action mapping " + std::string(to_string(mapping)) + " expects " +
                     std::to_string(action_dim(mapping)) + " values, got " +
                     std::to_string(raw.size()));
  }
  switch (mapping) {
    case ActionMapping::WheelVelocity:
      return {std::clamp(raw[0], -1.0, 1.0), std::clamp(raw[1], -1.0, 1.0)};
    case ActionMapping::WheelVelocityPositiveOnly:
      return {std::clamp(raw[0], 0.0, 1.0), std::clamp(raw[1], 0.0, 1.0)};
    case ActionMapping::WheelVelocityBraking:
      return {1.0 - std::clamp(raw[0], 0.0, 1.0), 1.0 - std::clamp(raw[1], 0.0, 1.0)};
    case ActionMapping::Steering: {
      const double a = std::clamp(raw[0], -1.0, 1.0);
      return a >= 0.0 ? WheelRates{1.0, 1.0 - a} : WheelRates{1.0 + a, 1.0};
    }
  }
  throw UsageError("unhandled action mapping");
}

}  // namespace lanerl
