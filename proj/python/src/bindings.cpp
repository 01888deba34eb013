#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "lanerl/baseline.hpp"
#include "lanerl/config.hpp"
#include "lanerl/error.hpp"
#include "lanerl/eval.hpp"
#include "lanerl/ppo.hpp"
#include "lanerl/rewards.hpp"

namespace py = pybind11;
using namespace lanerl;

namespace {

RunConfig config_from(const std::string &config_json) {
  return parse_run_config(nlohmann::json::parse(config_json));
}

py::dict pose_dict(const LanePose &p) {
  py::dict d;
  d["d"] = p.d;
  d["psi"] = p.psi;
  d["s"] = p.s;
  d["in_right_lane"] = p.in_right_lane;
  d["on_road"] = p.on_road;
  return d;
}

py::dict metrics_dict(const MetricsReport &m) {
  py::dict d;
  d["survival_time"] = m.survival_time;
  d["distance_ego_lane"] = m.distance_ego_lane;
  d["distance_both_lanes"] = m.distance_both_lanes;
  d["lateral_deviation"] = m.lateral_deviation;
  d["orientation_deviation"] = m.orientation_deviation;
  return d;
}

py::array_t<float> observation_array(const ObservationTensor &obs) {
  constexpr int n = ObservationTensor::kSize, c = ObservationTensor::kChannels;
  py::array_t<float> out({n, n, c});
  float *dst = out.mutable_data();
  for (int i = 0; i < ObservationTensor::kLength; ++i) dst[i] = obs.codes[i] * (1.0f / 255.0f);
  return out;
}

class PyEnv {
 public:
  PyEnv(const std::string &map_path, const std::string &config_json)
      : env_(std::make_shared<TrackMap>(load_map_file(map_path)), config_from(config_json).env) {}

  py::array_t<float> reset(std::uint64_t seed) { return observation_array(env_.reset(seed)); }

  py::tuple step(const std::vector<double> &action) {
    const StepResult r = env_.step(action);
    py::dict info;
    info["lane_pose"] = pose_dict(r.info.lane_pose);
    info["progress_delta"] = r.info.progress_delta;
    info["p_coll"] = r.info.p_coll;
    info["rates"] = py::make_tuple(r.info.rates.left, r.info.rates.right);
    info["termination_reason"] = std::string(to_string(r.info.termination_reason));
    return py::make_tuple(observation_array(r.observation), r.reward, r.done, info);
  }

  py::tuple ego() const {
    const VehicleState &s = env_.ego();
    return py::make_tuple(s.position.x, s.position.y, s.heading);
  }
  double dt() const { return env_.dt(); }
  int action_dim() const { return lanerl::action_dim(env_.config().action_mapping); }

 private:
  Env env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lane-following RL workbench core";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<TrackMap>(m, "Track")
      .def_property_readonly("rows", &TrackMap::rows)
      .def_property_readonly("cols", &TrackMap::cols)
      .def_property_readonly("tile_size", &TrackMap::tile_size)
      .def_property_readonly("lane_width", &TrackMap::lane_width)
      .def_property_readonly("total_length", &TrackMap::total_length)
      .def("lane_pose",
           [](const TrackMap &t, double x, double y, double heading) {
             return pose_dict(t.lane_pose({x, y}, heading));
           },
           py::arg("x"), py::arg("y"), py::arg("heading"))
      .def("serialize", &TrackMap::serialize);

  m.def("load_map", &load_map_file, py::arg("path"), "Load a map file");
  m.def("generate_random_map",
        [](std::uint64_t seed) { return generate_random_map(seed, MapRandomization{}); },
        py::arg("seed"));

  m.def("map_action",
        [](const std::string &mapping, const std::vector<double> &raw) {
          const WheelRates w = lanerl::map_action(parse_action_mapping(mapping), raw);
          return py::make_tuple(w.left, w.right);
        },
        py::arg("mapping"), py::arg("raw"));
  m.def("lambda_fn", &lambda_fn, py::arg("x"), py::arg("phi"), py::arg("epsilon"));
  m.def("step_kinematics",
        [](double x, double y, double heading, double left, double right, double dt) {
          const VehicleState s = lanerl::step_kinematics({{x, y}, heading, {}}, {left, right},
                                                         VehicleParams{}, dt);
          return py::make_tuple(s.position.x, s.position.y, s.heading);
        },
        py::arg("x"), py::arg("y"), py::arg("heading"), py::arg("left"), py::arg("right"),
        py::arg("dt"));

  m.def("compute_gae",
        [](const std::vector<double> &rewards, const std::vector<double> &values,
           const std::vector<std::uint8_t> &dones, double bootstrap, double gamma, double lam) {
          GaeResult g = lanerl::compute_gae(rewards, values, dones, bootstrap, gamma, lam);
          return py::make_tuple(g.advantages, g.returns);
        },
        py::arg("rewards"), py::arg("values"), py::arg("dones"), py::arg("bootstrap_value"),
        py::arg("gamma"), py::arg("lambda_gae"));
  m.def("clip_surrogate", &clip_surrogate, py::arg("ratio"), py::arg("advantage"),
        py::arg("clip_epsilon"));
  m.def("update_kl_coefficient", &update_kl_coefficient, py::arg("beta"), py::arg("measured_kl"),
        py::arg("kl_target"));

  m.def("gradcheck",
        [](int coords, std::uint64_t seed) {
          const GradcheckResult r = lanerl::gradcheck(coords, seed);
          py::dict d;
          d["max_rel_error"] = r.max_rel_error;
          d["checked"] = r.checked;
          d["skipped"] = r.skipped;
          d["seconds"] = r.seconds;
          return d;
        },
        py::arg("coordinates") = 200, py::arg("seed") = 0);

  m.def("evaluate_pd",
        [](const std::string &map_path, int episodes, double horizon, std::uint64_t seed) {
          const auto track = std::make_shared<TrackMap>(load_map_file(map_path));
          EnvConfig cfg;
          cfg.render = false;
          cfg.horizon = horizon;
          std::vector<std::uint64_t> seeds;
          for (int i = 0; i < episodes; ++i) seeds.push_back(seed + i);
          py::list out;
          for (const auto &log : run_episodes([] { return std::make_unique<PDBaseline>(); }, track,
                                              cfg, horizon, seeds)) {
            out.append(metrics_dict(compute_metrics(log, *track)));
          }
          return out;
        },
        py::arg("map_path"), py::arg("episodes") = 5, py::arg("horizon") = 15.0,
        py::arg("seed") = 1000);

  m.def("train",
        [](const std::string &map_path, const std::string &config_json,
           const std::string &out_dir) {
          const RunConfig cfg = config_from(config_json);
          const auto track = std::make_shared<TrackMap>(load_map_file(map_path));
          TrainOptions opt;
          opt.out_dir = out_dir;
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = lanerl::train(track, cfg.env, cfg.ppo, opt);
          }
          const py::object loads = py::module_::import("json").attr("loads");
          py::list out;
          for (const auto &it : r.log) out.append(loads(it.to_json_line()));
          return out;
        },
        py::arg("map_path"), py::arg("config_json") = "{}", py::arg("out_dir") = "");

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string &, const std::string &>(), py::arg("map_path"),
           py::arg("config_json") = "{}")
      .def("reset", &PyEnv::reset, py::arg("seed"))
      .def("step", &PyEnv::step, py::arg("action"))
      .def_property_readonly("ego", &PyEnv::ego)
      .def_property_readonly("dt", &PyEnv::dt)
      .def_property_readonly("action_dim", &PyEnv::action_dim);
}
