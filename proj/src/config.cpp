#include "lanerl/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Degree values are written with 12 significant digits so that 30 stays 30.
double rad2deg(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", r * 180.0 / std::numbers::pi);
  return std::strtod(buf, nullptr);
}

/// Typed reader over one JSON object that remembers which keys were consumed.
class Reader {
 public:
  Reader(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string field(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json *find(const std::string &key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string &key, double &out) {
    if (const json *v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void degrees(const std::string &key, double &radians) {
    if (const json *v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number (degrees)");
      radians = deg2rad(v->get<double>());
    }
  }
  template <typename I>
  void integer(const std::string &key, I &out) {
    if (const json *v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      if (std::is_unsigned_v<I> && v->is_number_integer() && !v->is_number_unsigned() &&
          v->get<std::int64_t>() < 0) {
        throw ConfigError(field(key) + ": expected a non-negative integer");
      }
      out = v->get<I>();
    }
  }
  void boolean(const std::string &key, bool &out) {
    if (const json *v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string &key, std::string &out) {
    if (const json *v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void range(const std::string &key, Range &out, bool degrees = false) {
    if (const json *v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw ConfigError(field(key) + ": expected [min, max]");
      }
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
      if (degrees) out = {deg2rad(out.min), deg2rad(out.max)};
      if (!(out.min <= out.max)) throw ConfigError(field(key) + ": min exceeds max");
    }
  }
  template <typename F>
  void section(const std::string &key, F &&fn) {
    if (const json *v = find(key)) {
      Reader sub(*v, field(key));
      fn(sub);
      sub.finish();
    }
  }
  template <typename E, typename P>
  void enumeration(const std::string &key, E &out, P parse) {
    if (const json *v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      try {
        out = parse(v->get<std::string>());
      } catch (const Error &e) {
        throw ConfigError(field(key) + ": " + e.what());
      }
    }
  }

  void finish() const {
    for (const auto &[k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError(field(k) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "configuration" : path_; }

  const json &j_;
  std::string path_;
  std::set<std::string> used_;
};

// Validation errors from the module structs already carry dotted field names; section() adds
// nothing, so run them after the whole document is read.

void read_reward(Reader &r, RewardConfig &c) {
  r.enumeration("kind", c.kind, parse_reward_kind);
  r.number("lambda_psi", c.lambda_psi);
  r.number("lambda_v", c.lambda_v);
  r.degrees("phi_deg", c.phi);
  r.number("epsilon", c.epsilon);
  r.degrees("psi_max_deg", c.psi_max);
  r.number("d_scale", c.d_scale);
  r.number("k_dist", c.k_dist);
  r.number("lambda_coll", c.lambda_coll);
  r.boolean("collision_term", c.collision_term);
}

void read_vehicle(Reader &r, VehicleParams &v) {
  r.number("wheel_radius", v.wheel_radius);
  r.number("baseline", v.baseline);
  r.number("max_wheel_rate", v.max_wheel_rate);
  r.number("safety_radius", v.safety_radius);
  r.number("body_length", v.body_length);
}

void read_camera(Reader &r, CameraParams &c) {
  r.integer("image_width", c.image_width);
  r.integer("image_height", c.image_height);
  r.degrees("horizontal_fov_deg", c.horizontal_fov);
  r.number("mount_height", c.mount_height);
  r.degrees("pitch_deg", c.pitch);
  r.number("forward_offset", c.forward_offset);
}

void read_randomization(Reader &r, RandomizationConfig &c) {
  r.boolean("enabled", c.enabled);
  r.integer("seed", c.seed);
  r.range("ambient_gain", c.ambient_gain);
  r.range("road_tint", c.road_tint);
  r.range("lane_mark_tint", c.lane_mark_tint);
  r.range("off_road_tint", c.off_road_tint);
  r.range("sky_tint", c.sky_tint);
  r.range("noise_sigma", c.noise_sigma);
  r.range("camera_height", c.camera_height);
  r.range("camera_pitch_deg", c.camera_pitch, true);
  r.range("camera_fov_deg", c.camera_fov, true);
  r.range("wheel_radius_scale", c.wheel_radius_scale);
  r.range("baseline_scale", c.baseline_scale);
  r.range("wheel_rate_scale", c.wheel_rate_scale);
}

void read_map_randomization(Reader &r, MapRandomization &m) {
  r.integer("min_size", m.min_size);
  r.integer("max_size", m.max_size);
  r.number("min_curve_fraction", m.min_curve_fraction);
  r.number("max_curve_fraction", m.max_curve_fraction);
  r.number("tile_size", m.tile_size);
  r.integer("max_attempts", m.max_attempts);
}

void read_env(Reader &r, EnvConfig &e) {
  r.enumeration("action_mapping", e.action_mapping, parse_action_mapping);
  r.number("frame_rate", e.frame_rate);
  r.number("horizon", e.horizon);
  r.boolean("collision_mode", e.collision_mode);
  r.number("lead_speed_fraction", e.lead_speed_fraction);
  r.range("lead_gap", e.lead_gap);
  r.degrees("spawn_max_psi_deg", e.spawn_max_psi);
  r.boolean("render", e.render);
  r.section("reward", [&](Reader &s) { read_reward(s, e.reward); });
  r.section("vehicle", [&](Reader &s) { read_vehicle(s, e.vehicle); });
  r.section("camera", [&](Reader &s) { read_camera(s, e.camera); });
  r.section("randomization", [&](Reader &s) { read_randomization(s, e.randomization); });
  if (const json *m = r.find("map_randomization"); m && !m->is_null()) {
    MapRandomization spec;
    Reader s(*m, r.field("map_randomization"));
    read_map_randomization(s, spec);
    s.finish();
    e.map_randomization = spec;
  }
}

void read_ppo(Reader &r, PPOConfig &p) {
  r.number("gamma", p.gamma);
  r.number("lambda_gae", p.lambda_gae);
  r.number("clip_epsilon", p.clip_epsilon);
  r.number("beta_init", p.beta_init);
  r.number("kl_target", p.kl_target);
  r.number("c_value", p.c_value);
  r.number("c_entropy", p.c_entropy);
  r.number("learning_rate", p.learning_rate);
  r.integer("rollout_length", p.rollout_length);
  r.integer("num_workers", p.num_workers);
  r.integer("minibatch_size", p.minibatch_size);
  r.integer("epochs_per_iteration", p.epochs_per_iteration);
  r.integer("total_steps", p.total_steps);
  r.integer("seed", p.seed);
  r.number("max_grad_norm", p.max_grad_norm);
  r.number("log_std_init", p.log_std_init);
  r.integer("checkpoint_every", p.checkpoint_every);
}

void read_pd(Reader &r, PDConfig &p) {
  r.number("lookahead", p.lookahead);
  r.number("k_p", p.k_p);
  r.number("k_d", p.k_d);
}

ojson range_json(const Range &r, bool degrees = false) {
  return degrees ? ojson::array({rad2deg(r.min), rad2deg(r.max)}) : ojson::array({r.min, r.max});
}

std::string read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void EvalConfig::validate() const {
  if (episodes < 0) throw ConfigError("eval.episodes must be non-negative");
  if (!(horizon > 0.0)) throw ConfigError("eval.horizon must be positive");
  if (threads <= 0) throw ConfigError("eval.threads must be positive");
}

void TeleopConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigError("teleop.port must lie in [0, 65535]");
  if (!(horizon > 0.0)) throw ConfigError("teleop.horizon must be positive");
  if (!(speedup > 0.0)) throw ConfigError("teleop.speedup must be positive");
}

void RunConfig::validate() const {
  env.validate();
  ppo.validate();
  pd.validate();
  follow.validate();
  eval.validate();
  teleop.validate();
}

RunConfig parse_run_config(const json &doc) {
  RunConfig c;
  Reader r(doc, "");
  r.string("map", c.map);
  r.section("env", [&](Reader &s) { read_env(s, c.env); });
  r.section("ppo", [&](Reader &s) { read_ppo(s, c.ppo); });
  r.section("pd", [&](Reader &s) { read_pd(s, c.pd); });
  r.section("follow", [&](Reader &s) {
    s.number("target_gap", c.follow.target_gap);
    s.number("k_gap", c.follow.k_gap);
    s.section("pd", [&](Reader &p) { read_pd(p, c.follow.pd); });
  });
  r.section("eval", [&](Reader &s) {
    s.integer("episodes", c.eval.episodes);
    s.number("horizon", c.eval.horizon);
    s.integer("seed", c.eval.seed);
    s.integer("threads", c.eval.threads);
  });
  r.section("teleop", [&](Reader &s) {
    s.integer("port", c.teleop.port);
    s.number("horizon", c.teleop.horizon);
    s.number("speedup", c.teleop.speedup);
    s.string("log_dir", c.teleop.log_dir);
  });
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string &path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error &e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc);
}

ojson to_json(const RunConfig &c) {
  const EnvConfig &e = c.env;
  const RewardConfig &rw = e.reward;
  const RandomizationConfig &rz = e.randomization;
  ojson j;
  j["map"] = c.map;
  ojson env;
  env["action_mapping"] = std::string(to_string(e.action_mapping));
  env["frame_rate"] = e.frame_rate;
  env["horizon"] = e.horizon;
  env["collision_mode"] = e.collision_mode;
  env["lead_speed_fraction"] = e.lead_speed_fraction;
  env["lead_gap"] = range_json(e.lead_gap);
  env["spawn_max_psi_deg"] = rad2deg(e.spawn_max_psi);
  env["render"] = e.render;
  env["reward"] = {{"kind", std::string(to_string(rw.kind))},
                   {"lambda_psi", rw.lambda_psi},
                   {"lambda_v", rw.lambda_v},
                   {"phi_deg", rad2deg(rw.phi)},
                   {"epsilon", rw.epsilon},
                   {"psi_max_deg", rad2deg(rw.psi_max)},
                   {"d_scale", rw.d_scale},
                   {"k_dist", rw.k_dist},
                   {"lambda_coll", rw.lambda_coll},
                   {"collision_term", rw.collision_term}};
  env["vehicle"] = {{"wheel_radius", e.vehicle.wheel_radius},
                    {"baseline", e.vehicle.baseline},
                    {"max_wheel_rate", e.vehicle.max_wheel_rate},
                    {"safety_radius", e.vehicle.safety_radius},
                    {"body_length", e.vehicle.body_length}};
  env["camera"] = {{"image_width", e.camera.image_width},
                   {"image_height", e.camera.image_height},
                   {"horizontal_fov_deg", rad2deg(e.camera.horizontal_fov)},
                   {"mount_height", e.camera.mount_height},
                   {"pitch_deg", rad2deg(e.camera.pitch)},
                   {"forward_offset", e.camera.forward_offset}};
  env["randomization"] = {{"enabled", rz.enabled},
                          {"seed", rz.seed},
                          {"ambient_gain", range_json(rz.ambient_gain)},
                          {"road_tint", range_json(rz.road_tint)},
                          {"lane_mark_tint", range_json(rz.lane_mark_tint)},
                          {"off_road_tint", range_json(rz.off_road_tint)},
                          {"sky_tint", range_json(rz.sky_tint)},
                          {"noise_sigma", range_json(rz.noise_sigma)},
                          {"camera_height", range_json(rz.camera_height)},
                          {"camera_pitch_deg", range_json(rz.camera_pitch, true)},
                          {"camera_fov_deg", range_json(rz.camera_fov, true)},
                          {"wheel_radius_scale", range_json(rz.wheel_radius_scale)},
                          {"baseline_scale", range_json(rz.baseline_scale)},
                          {"wheel_rate_scale", range_json(rz.wheel_rate_scale)}};
  if (e.map_randomization) {
    const auto &m = *e.map_randomization;
    env["map_randomization"] = {{"min_size", m.min_size},
                                {"max_size", m.max_size},
                                {"min_curve_fraction", m.min_curve_fraction},
                                {"max_curve_fraction", m.max_curve_fraction},
                                {"tile_size", m.tile_size},
                                {"max_attempts", m.max_attempts}};
  } else {
    env["map_randomization"] = nullptr;
  }
  j["env"] = env;
  const PPOConfig &p = c.ppo;
  j["ppo"] = {{"gamma", p.gamma},
              {"lambda_gae", p.lambda_gae},
              {"clip_epsilon", p.clip_epsilon},
              {"beta_init", p.beta_init},
              {"kl_target", p.kl_target},
              {"c_value", p.c_value},
              {"c_entropy", p.c_entropy},
              {"learning_rate", p.learning_rate},
              {"rollout_length", p.rollout_length},
              {"num_workers", p.num_workers},
              {"minibatch_size", p.minibatch_size},
              {"epochs_per_iteration", p.epochs_per_iteration},
              {"total_steps", p.total_steps},
              {"seed", p.seed},
              {"max_grad_norm", p.max_grad_norm},
              {"log_std_init", p.log_std_init},
              {"checkpoint_every", p.checkpoint_every}};
  auto pd_json = [](const PDConfig &d) {
    return ojson{{"lookahead", d.lookahead}, {"k_p", d.k_p}, {"k_d", d.k_d}};
  };
  j["pd"] = pd_json(c.pd);
  j["follow"] = {{"target_gap", c.follow.target_gap},
                 {"k_gap", c.follow.k_gap},
                 {"pd", pd_json(c.follow.pd)}};
  j["eval"] = {{"episodes", c.eval.episodes},
               {"horizon", c.eval.horizon},
               {"seed", c.eval.seed},
               {"threads", c.eval.threads}};
  j["teleop"] = {{"port", c.teleop.port},
                 {"horizon", c.teleop.horizon},
                 {"speedup", c.teleop.speedup},
                 {"log_dir", c.teleop.log_dir}};
  return j;
}

void apply_override(json &doc, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form path.to.field=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error &) {
    value = text;
  }
  std::string pointer;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) pointer += "/" + part;
  doc[json::json_pointer(pointer)] = value;
}

std::shared_ptr<const TrackMap> load_config_map(const RunConfig &cfg, const std::string &base_dir) {
  if (cfg.env.map_randomization) {
    return std::make_shared<TrackMap>(generate_random_map(0, *cfg.env.map_randomization));
  }
  namespace fs = std::filesystem;
  fs::path p(cfg.map);
  if (p.is_relative() && !fs::exists(p) && !base_dir.empty()) p = fs::path(base_dir) / p;
  return std::make_shared<TrackMap>(load_map_file(p.string()));
}

}  // namespace lanerl
