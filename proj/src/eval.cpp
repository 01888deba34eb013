#include "lanerl/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

using json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

constexpr int kLogVersion = 1;

}  // namespace

EpisodeLog begin_log(const Env &env, std::string controller, std::string map_id, double horizon) {
  EpisodeLog log;
  log.controller = std::move(controller);
  log.map_id = std::move(map_id);
  log.seed = env.seed();
  log.dt = env.dt();
  log.horizon = horizon;
  StepRecord r;
  r.t = env.time();
  r.state = env.ego();
  r.pose = env.lane_pose();
  r.rates = env.ego().rates;
  r.p_coll = env.p_coll();
  r.lead_gap = env.lead_gap();
  log.records.push_back(r);
  return log;
}

void append_record(EpisodeLog &log, const Env &env, const StepResult &result) {
  StepRecord r;
  r.t = env.time();
  r.state = env.ego();
  r.pose = result.info.lane_pose;
  r.rates = result.info.rates;
  r.reward = result.reward;
  r.p_coll = result.info.p_coll;
  r.lead_gap = env.lead_gap();
  log.records.push_back(r);
  log.termination_reason = result.info.termination_reason;
}

EpisodeLog run_episode(Controller &controller, Env &env, double horizon, std::uint64_t seed,
                       const std::string &map_id) {
  const ActionMapping m = env.config().action_mapping;
  if (action_dim(controller.mapping()) != action_dim(m)) {
    throw UsageError("controller '" + controller.id() + "' produces " +
                     std::to_string(action_dim(controller.mapping())) +
                     "-dimensional actions but the environment mapping '" +
                     std::string(to_string(m)) + "' expects " + std::to_string(action_dim(m)));
  }
  env.reset(seed);
  controller.reset(env);
  EpisodeLog log = begin_log(env, controller.id(), map_id, horizon);
  const int max_steps = static_cast<int>(std::lround(horizon / env.dt()));
  while (env.step_index() < max_steps) {
    const std::vector<double> action = controller.act(env);
    const StepResult r = env.step(action);
    append_record(log, env, r);
    if (r.done) break;
  }
  if (log.termination_reason == TerminationReason::None) {
    log.termination_reason = TerminationReason::TimeLimit;
  }
  return log;
}

std::vector<EpisodeLog> run_episodes(const std::function<std::unique_ptr<Controller>()> &make,
                                     std::shared_ptr<const TrackMap> track,
                                     const EnvConfig &env_config, double horizon,
                                     const std::vector<std::uint64_t> &seeds, int threads,
                                     const std::string &map_id) {
  std::vector<EpisodeLog> logs(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(seeds.size())));
  auto work = [&](int worker) {
    auto controller = make();
    EnvConfig cfg = env_config;
    cfg.render = controller->needs_observation();
    if (cfg.horizon < horizon) cfg.horizon = horizon;
    Env env(track, cfg);
    for (std::size_t i = worker; i < seeds.size(); i += n) {
      try {
        logs[i] = run_episode(*controller, env, horizon, seeds[i], map_id);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (n == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(work, w);
    for (auto &t : pool) t.join();
  }
  for (auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return logs;
}

MetricsReport compute_metrics(const EpisodeLog &log, const TrackMap &track) {
  if (log.records.empty()) throw UsageError("compute_metrics: empty episode log");
  MetricsReport m;
  const auto &rec = log.records;
  m.survival_time = rec.back().t - rec.front().t;
  for (std::size_t k = 1; k < rec.size(); ++k) {
    const double dt = rec[k].t - rec[k - 1].t;
    const double ds = std::max(0.0, track.wrap_station_delta(rec[k - 1].pose.s, rec[k].pose.s));
    if (rec[k].pose.in_right_lane) m.distance_ego_lane += ds;
    if (rec[k].pose.on_road) m.distance_both_lanes += ds;
    m.lateral_deviation += std::abs(rec[k].pose.d) * dt;
    m.orientation_deviation += std::abs(rec[k].pose.psi) * dt;
  }
  return m;
}

MetricsSummary aggregate(const std::vector<MetricsReport> &reports) {
  if (reports.empty()) throw UsageError("aggregate: no reports");
  MetricsSummary s;
  s.episodes = static_cast<int>(reports.size());
  s.min = s.max = reports.front();
  auto fields = [](MetricsReport &r) {
    return std::array<double *, 5>{&r.survival_time, &r.distance_ego_lane, &r.distance_both_lanes,
                                   &r.lateral_deviation, &r.orientation_deviation};
  };
  const auto mean = fields(s.mean);
  const auto lo = fields(s.min);
  const auto hi = fields(s.max);
  for (MetricsReport r : reports) {
    const auto v = fields(r);
    for (std::size_t i = 0; i < v.size(); ++i) {
      *mean[i] += *v[i];
      *lo[i] = std::min(*lo[i], *v[i]);
      *hi[i] = std::max(*hi[i], *v[i]);
    }
  }
  for (double *p : mean) *p /= s.episodes;
  return s;
}

std::string metrics_csv(const std::vector<EpisodeLog> &logs,
                        const std::vector<MetricsReport> &reports) {
  if (logs.size() != reports.size()) throw UsageError("metrics_csv: logs/reports size mismatch");
  std::ostringstream out;
  out << "episode,controller,map,seed,termination,survival_time,distance_ego_lane,"
         "distance_both_lanes,lateral_deviation,orientation_deviation\n";
  auto row = [&](const MetricsReport &r) {
    out << fmt(r.survival_time) << ',' << fmt(r.distance_ego_lane) << ','
        << fmt(r.distance_both_lanes) << ',' << fmt(r.lateral_deviation) << ','
        << fmt(r.orientation_deviation) << '\n';
  };
  for (std::size_t i = 0; i < logs.size(); ++i) {
    out << i << ',' << logs[i].controller << ',' << logs[i].map_id << ',' << logs[i].seed << ','
        << to_string(logs[i].termination_reason) << ',';
    row(reports[i]);
  }
  if (!reports.empty()) {
    out << "mean,,,,,";
    row(aggregate(reports).mean);
  }
  return out.str();
}

void write_metrics_csv(const std::string &path, const std::vector<EpisodeLog> &logs,
                       const std::vector<MetricsReport> &reports) {
  const std::string text = metrics_csv(logs, reports);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path + "'");
}

std::string episode_log_jsonl(const EpisodeLog &log) {
  std::string out;
  json head;
  head["type"] = "episode";
  head["version"] = kLogVersion;
  head["controller"] = log.controller;
  head["map"] = log.map_id;
  head["seed"] = log.seed;
  head["dt"] = log.dt;
  head["horizon"] = log.horizon;
  head["termination_reason"] = std::string(to_string(log.termination_reason));
  head["records"] = log.records.size();
  out += head.dump() + '\n';
  for (const auto &r : log.records) {
    json j;
    j["type"] = "step";
    j["t"] = r.t;
    j["x"] = r.state.position.x;
    j["y"] = r.state.position.y;
    j["heading"] = r.state.heading;
    j["omega_l"] = r.rates.left;
    j["omega_r"] = r.rates.right;
    j["d"] = r.pose.d;
    j["psi"] = r.pose.psi;
    j["s"] = r.pose.s;
    j["in_right_lane"] = r.pose.in_right_lane;
    j["on_road"] = r.pose.on_road;
    j["reward"] = r.reward;
    j["p_coll"] = r.p_coll;
    j["lead_gap"] = r.lead_gap ? json(*r.lead_gap) : json(nullptr);
    out += j.dump() + '\n';
  }
  return out;
}

void write_episode_logs(const std::string &path, const std::vector<EpisodeLog> &logs) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  for (const auto &l : logs) f << episode_log_jsonl(l);
  if (!f) throw IoError("failed writing '" + path + "'");
}

std::vector<EpisodeLog> parse_episode_logs(const std::string &text) {
  std::vector<EpisodeLog> logs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "episode") {
        if (j.at("version").get<int>() != kLogVersion) {
          throw IoError("unsupported episode log version on line " + std::to_string(lineno));
        }
        EpisodeLog l;
        l.controller = j.at("controller").get<std::string>();
        l.map_id = j.at("map").get<std::string>();
        l.seed = j.at("seed").get<std::uint64_t>();
        l.dt = j.at("dt").get<double>();
        l.horizon = j.at("horizon").get<double>();
        l.termination_reason =
            parse_termination_reason(j.at("termination_reason").get<std::string>());
        logs.push_back(std::move(l));
      } else if (type == "step") {
        if (logs.empty()) throw IoError("step record before episode header");
        StepRecord r;
        r.t = j.at("t").get<double>();
        r.state.position = {j.at("x").get<double>(), j.at("y").get<double>()};
        r.state.heading = j.at("heading").get<double>();
        r.rates = {j.at("omega_l").get<double>(), j.at("omega_r").get<double>()};
        r.state.rates = r.rates;
        r.pose.d = j.at("d").get<double>();
        r.pose.psi = j.at("psi").get<double>();
        r.pose.s = j.at("s").get<double>();
        r.pose.in_right_lane = j.at("in_right_lane").get<bool>();
        r.pose.on_road = j.at("on_road").get<bool>();
        r.reward = j.at("reward").get<double>();
        r.p_coll = j.at("p_coll").get<double>();
        if (!j.at("lead_gap").is_null()) r.lead_gap = j.at("lead_gap").get<double>();
        logs.back().records.push_back(r);
      } else {
        throw IoError("unknown record type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception &e) {
    throw IoError("malformed episode log line " + std::to_string(lineno) + ": " + e.what());
  }
  return logs;
}

std::vector<EpisodeLog> load_episode_logs(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_episode_logs(ss.str());
}

}  // namespace lanerl
