#include "lanerl/env.hpp"

#include <cmath>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::None: return "none";
    case TerminationReason::OffRoad: return "off_road";
    case TerminationReason::Collision: return "collision";
    case TerminationReason::TimeLimit: return "time_limit";
    case TerminationReason::Aborted: return "aborted";
  }
  return "?";
}

TerminationReason parse_termination_reason(std::string_view name) {
  for (auto r : {TerminationReason::None, TerminationReason::OffRoad, TerminationReason::Collision,
                 TerminationReason::TimeLimit, TerminationReason::Aborted}) {
    if (to_string(r) == name) return r;
  }
  throw IoError("unknown termination reason '" + std::string(name) + "'");
}

void EnvConfig::validate() const {
  reward.validate();
  vehicle.validate();
  camera.validate();
  randomization.validate();
  if (map_randomization) map_randomization->validate();
  if (!(frame_rate > 0.0)) throw ConfigError("env.frame_rate must be positive");
  if (!(horizon > 0.0)) throw ConfigError("env.horizon must be positive");
  if (!(lead_speed_fraction >= 0.0 && lead_speed_fraction <= 1.0)) {
    throw ConfigError("env.lead_speed_fraction must lie in [0, 1]");
  }
  if (!(lead_gap.min > 0.0 && lead_gap.min <= lead_gap.max)) {
    throw ConfigError("env.lead_gap must satisfy 0 < min <= max");
  }
}

Env::Env(std::shared_ptr<const TrackMap> track, EnvConfig config)
    : track_(std::move(track)), config_(std::move(config)) {
  if (!track_ && !config_.map_randomization) throw UsageError("Env needs a map");
  if (!track_) track_ = std::make_shared<TrackMap>(generate_random_map(0, *config_.map_randomization));
  config_.validate();
  if (config_.reward.d_scale == 0.0) config_.reward.d_scale = track_->lane_width() / 2;
  if (config_.reward.k_dist == 0.0) {
    config_.reward.k_dist = config_.frame_rate / config_.vehicle.top_speed();
  }
}

int Env::horizon_steps() const {
  return static_cast<int>(std::lround(config_.horizon * config_.frame_rate));
}

std::optional<double> Env::lead_gap() const {
  if (!lead_) return std::nullopt;
  double gap = std::fmod(lead_s_ - pose_.s, track_->total_length());
  if (gap < 0.0) gap += track_->total_length();
  return gap;
}

VehicleState Env::lead_state() const {
  const auto cp = track_->centerline_point(lead_s_);
  return {cp.position, cp.tangent, {config_.lead_speed_fraction, config_.lead_speed_fraction}};
}

void Env::render_frame(bool first) {
  if (!config_.render) return;
  std::vector<VehicleState> others;
  if (lead_) others.push_back(*lead_);
  frames_last_ = renderer_.render(*track_, others, ego_, config_.camera, rand_,
                                  static_cast<std::uint64_t>(step_), vehicle_);
  if (first) {
    frames_.reset(frames_last_);
  } else {
    frames_.push(frames_last_);
  }
  observation_ = frames_.observation();
}

ObservationTensor Env::reset(std::uint64_t seed) {
  seed_ = seed;
  std::mt19937_64 rng(mix(seed));
  if (config_.map_randomization) {
    track_ = std::make_shared<TrackMap>(generate_random_map(mix(seed ^ 0x6d6170ull),
                                                            *config_.map_randomization));
    config_.reward.d_scale = track_->lane_width() / 2;
  }
  rand_ = sample_randomization(config_.randomization.seed, seed, config_.randomization);
  vehicle_ = rand_.apply(config_.vehicle);

  const double lane = track_->lane_width();
  std::uniform_real_distribution<double> s_dist(0.0, track_->total_length());
  std::uniform_real_distribution<double> d_dist(-lane / 4, lane / 4);
  std::uniform_real_distribution<double> psi_dist(-config_.spawn_max_psi, config_.spawn_max_psi);
  const double s = s_dist(rng);
  const double d = d_dist(rng);
  const double psi = psi_dist(rng);
  const auto cp = track_->centerline_point(s);
  ego_ = {cp.position + left_normal(unit(cp.tangent)) * d, wrap_angle(cp.tangent + psi), {}};
  pose_ = track_->lane_pose(ego_.position, ego_.heading);

  lead_.reset();
  p_coll_ = 0.0;
  if (config_.collision_mode) {
    std::uniform_real_distribution<double> gap_dist(config_.lead_gap.min, config_.lead_gap.max);
    lead_s_ = std::fmod(pose_.s + gap_dist(rng), track_->total_length());
    lead_ = lead_state();
    p_coll_ = collision_penalty(ego_, *lead_, vehicle_);
  }
  step_ = 0;
  done_ = false;
  render_frame(true);
  return observation_;
}

ObservationTensor Env::place(const VehicleState &state) {
  if (done_) throw UsageError("place() called on a finished episode; call reset()");
  ego_ = state;
  ego_.heading = wrap_angle(ego_.heading);
  pose_ = track_->lane_pose(ego_.position, ego_.heading);
  if (lead_) p_coll_ = collision_penalty(ego_, *lead_, vehicle_);
  render_frame(true);
  return observation_;
}

StepResult Env::step(std::span<const double> raw_action) {
  if (done_) throw UsageError("step() called on a finished episode; call reset()");
  const WheelRates rates = map_action(config_.action_mapping, raw_action);
  const double h = dt();
  ego_ = step_kinematics(ego_, rates, vehicle_, h);
  if (lead_) {
    lead_s_ = std::fmod(lead_s_ + config_.lead_speed_fraction * config_.vehicle.top_speed() * h,
                        track_->total_length());
    lead_ = lead_state();
  }
  ++step_;

  const double prev_s = pose_.s;
  pose_ = track_->lane_pose(ego_.position, ego_.heading);
  StepResult result;
  result.info.lane_pose = pose_;
  result.info.rates = rates;
  result.info.progress_delta = track_->wrap_station_delta(prev_s, pose_.s);

  const double p_prev = p_coll_;
  p_coll_ = lead_ ? collision_penalty(ego_, *lead_, vehicle_) : 0.0;
  result.info.p_coll = p_coll_;

  const RewardConfig &rc = config_.reward;
  result.reward = rc.kind == RewardKind::Orientation
                      ? reward_orientation(pose_, rates, rc)
                      : reward_distance(result.info.progress_delta, pose_, rc.k_dist);
  if (rc.collision_term) result.reward += reward_collision_term(p_prev, p_coll_, rc.lambda_coll);

  // Collisions end the episode without any penalty.
  if (lead_ && check_body_collision(ego_, *lead_, vehicle_)) {
    result.info.termination_reason = TerminationReason::Collision;
  } else if (!pose_.on_road) {
    result.info.termination_reason = TerminationReason::OffRoad;
  } else if (step_ >= horizon_steps()) {
    result.info.termination_reason = TerminationReason::TimeLimit;
  }
  result.done = result.info.termination_reason != TerminationReason::None;
  done_ = result.done;

  render_frame(false);
  result.observation = observation_;
  return result;
}

}  // namespace lanerl
