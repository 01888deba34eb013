#pragma once

#include <span>
#include <string>
#include <string_view>

#include "lanerl/vehicle.hpp"

namespace lanerl {

/// How raw policy outputs become wheel rates.
enum class ActionMapping {
  WheelVelocity,              // clamp to [-1, 1]
  WheelVelocityPositiveOnly,  // clamp to [0, 1]
  WheelVelocityBraking,       // 1 - clamp(raw, 0, 1)
  Steering,                   // scalar; the faster wheel always runs at full speed
};

int action_dim(ActionMapping mapping);
std::string_view to_string(ActionMapping mapping);
ActionMapping parse_action_mapping(std::string_view name);

/// Throws UsageError when raw.size() does not match the mapping's dimension.
WheelRates map_action(ActionMapping mapping, std::span<const double> raw);

}  // namespace lanerl
