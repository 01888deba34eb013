#include "lanerl/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lanerl/baseline.hpp"
#include "lanerl/config.hpp"
#include "lanerl/error.hpp"
#include "lanerl/teleop.hpp"

namespace lanerl {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Options shared by every subcommand that reads a run configuration.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string map;

  void attach(CLI::App *app) {
    app->add_option("-c,--config", config_path, "Run-configuration JSON document");
    app->add_option("--set", overrides, "Override a field: path.to.field=value (repeatable)");
    app->add_option("--map", map, "Map file (overrides the config's map)");
  }

  /// Document, then --set overrides, then typed flags (applied by the caller) on top.
  RunConfig load() const {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw IoError("cannot open config '" + config_path + "'");
      try {
        doc = json::parse(f);
      } catch (const json::parse_error &e) {
        throw ConfigError("'" + config_path + "' is not valid JSON: " + e.what());
      }
    }
    for (const auto &o : overrides) {
      try {
        apply_override(doc, o);
      } catch (const json::exception &e) {
        throw ConfigError("override '" + o + "': " + e.what());
      }
    }
    RunConfig cfg = parse_run_config(doc);
    if (!map.empty()) cfg.map = map;
    return cfg;
  }

  std::string base_dir() const {
    return config_path.empty() ? std::string() : fs::path(config_path).parent_path().string();
  }
};

/// Materializes defaults and re-reads them, so the written document reproduces `cfg` exactly.
RunConfig resolve(const RunConfig &cfg, std::string *text) {
  cfg.validate();
  const std::string dumped = to_json(cfg).dump(2);
  if (text) *text = dumped + "\n";
  return parse_run_config(json::parse(dumped));
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

void make_dir(const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string map_id_of(const RunConfig &cfg) {
  if (cfg.env.map_randomization) return "random";
  return fs::path(cfg.map).stem().string();
}

std::string opt(const std::optional<double> &v, int precision = 2) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

// ---------------------------------------------------------------------------------------------

struct TrainArgs {
  ConfigArgs config;
  std::string out = "runs/train";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> total_steps;
  std::optional<int> workers;
  std::string mapping;
  std::string reward;
  bool quiet = false;
};

int cmd_train(const TrainArgs &a, std::ostream &out) {
  RunConfig cfg = a.config.load();
  if (a.seed) cfg.ppo.seed = *a.seed;
  if (a.total_steps) cfg.ppo.total_steps = *a.total_steps;
  if (a.workers) cfg.ppo.num_workers = *a.workers;
  if (!a.mapping.empty()) cfg.env.action_mapping = parse_action_mapping(a.mapping);
  if (!a.reward.empty()) cfg.env.reward.kind = parse_reward_kind(a.reward);
  std::string text;
  cfg = resolve(cfg, &text);

  const auto track = load_config_map(cfg, a.config.base_dir());
  const fs::path dir(a.out);
  make_dir(dir);
  write_text(dir / "config.json", text);
  write_text(dir / "map.map", track->serialize());

  TrainOptions opts;
  opts.out_dir = dir.string();
  nlohmann::ordered_json meta;
  meta["action_mapping"] = std::string(to_string(cfg.env.action_mapping));
  meta["reward"] = std::string(to_string(cfg.env.reward.kind));
  meta["map"] = map_id_of(cfg);
  opts.metadata_json = meta.dump();
  if (!a.quiet) {
    opts.on_iteration = [&out](const IterationLog &l, const ActorCritic<float>::Params &) {
      out << "iter " << l.iteration << "  steps " << l.steps << "  episodes " << l.episodes
          << "  reward " << opt(l.mean_episode_reward) << "  length "
          << opt(l.mean_episode_length, 1) << "  kl " << std::setprecision(4) << l.mean_kl
          << "  beta " << l.beta << "  clip " << l.clip_fraction << std::endl;
    };
  }
  const TrainResult r = train(track, cfg.env, cfg.ppo, opts);
  out << "trained " << r.steps << " steps; run directory " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct EvalArgs {
  ConfigArgs config;
  std::string controller = "pd";
  std::optional<int> episodes;
  std::optional<double> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out = "eval_out";
};

void print_summary(std::ostream &out, const std::string &controller, const std::string &map_id,
                   const MetricsSummary &s, double horizon) {
  out << "controller " << controller << " on " << map_id << ": " << s.episodes << " episodes, "
      << horizon << " s horizon\n";
  out << std::left << std::setw(34) << "metric" << std::right << std::setw(10) << "mean"
      << std::setw(10) << "min" << std::setw(10) << "max" << "\n";
  const auto row = [&](const char *name, double MetricsReport::*f) {
    out << std::left << std::setw(34) << name << std::right << std::fixed << std::setprecision(3)
        << std::setw(10) << s.mean.*f << std::setw(10) << s.min.*f << std::setw(10) << s.max.*f
        << "\n";
  };
  row("survival time [s]", &MetricsReport::survival_time);
  row("distance, ego lane [m]", &MetricsReport::distance_ego_lane);
  row("distance, both lanes [m]", &MetricsReport::distance_both_lanes);
  row("lateral deviation [m*s]", &MetricsReport::lateral_deviation);
  row("orientation deviation [rad*s]", &MetricsReport::orientation_deviation);
  out << std::defaultfloat;
}

int cmd_eval(const EvalArgs &a, std::ostream &out) {
  RunConfig cfg = a.config.load();
  if (a.episodes) cfg.eval.episodes = *a.episodes;
  if (a.horizon) cfg.eval.horizon = *a.horizon;
  if (a.seed) cfg.eval.seed = *a.seed;
  if (a.threads) cfg.eval.threads = *a.threads;

  std::function<std::unique_ptr<Controller>()> make;
  std::string name = a.controller;
  if (name == "pd") {
    cfg.env.action_mapping = ActionMapping::Steering;
    const PDConfig pd = cfg.pd;
    make = [pd] { return std::make_unique<PDBaseline>(pd); };
  } else if (name == "scripted" || name == "scripted-follow") {
    name = "scripted-follow";
    cfg.env.action_mapping = ActionMapping::WheelVelocityBraking;
    const FollowConfig f = cfg.follow;
    make = [f] { return std::make_unique<FollowController>(f); };
  } else if (name == "scripted-brake") {
    cfg.env.action_mapping = ActionMapping::WheelVelocityBraking;
    make = [] { return std::make_unique<BrakeController>(); };
  } else {
    if (!fs::exists(name)) {
      throw IoError("controller '" + name +
                    "' is neither pd, scripted, scripted-follow, scripted-brake nor a checkpoint "
                    "file");
    }
    auto ckpt = std::make_shared<Checkpoint>(load_checkpoint(name));
    ActionMapping mapping = cfg.env.action_mapping;
    try {
      const json meta = json::parse(ckpt->metadata_json);
      if (meta.contains("action_mapping")) {
        mapping = parse_action_mapping(meta["action_mapping"].get<std::string>());
      }
    } catch (const json::exception &) {
      throw IoError("checkpoint '" + name + "' has malformed metadata");
    }
    if (action_dim(mapping) != ckpt->spec.action_dim) {
      throw UsageError("checkpoint action dimension " + std::to_string(ckpt->spec.action_dim) +
                       " does not fit mapping " + std::string(to_string(mapping)));
    }
    cfg.env.action_mapping = mapping;
    const std::string id = fs::path(name).stem().string();
    make = [ckpt, mapping, id] {
      return std::make_unique<PolicyController>(ckpt->spec, ckpt->params, mapping, id);
    };
  }
  std::string text;
  cfg = resolve(cfg, &text);

  const auto track = load_config_map(cfg, a.config.base_dir());
  const std::string map_id = map_id_of(cfg);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.eval.episodes; ++i) seeds.push_back(cfg.eval.seed + i);
  const auto logs =
      run_episodes(make, track, cfg.env, cfg.eval.horizon, seeds, cfg.eval.threads, map_id);
  std::vector<MetricsReport> reports;
  for (const auto &l : logs) reports.push_back(compute_metrics(l, *track));

  const fs::path dir(a.out);
  make_dir(dir);
  write_text(dir / "config.json", text);
  write_metrics_csv((dir / "metrics.csv").string(), logs, reports);
  write_episode_logs((dir / "episodes.jsonl").string(), logs);
  if (!reports.empty()) {
    print_summary(out, logs.front().controller, map_id, aggregate(reports), cfg.eval.horizon);
  }
  out << "wrote " << (dir / "metrics.csv").string() << " and " << (dir / "episodes.jsonl").string()
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct TeleopArgs {
  ConfigArgs config;
  std::optional<int> port;
  std::optional<double> horizon;
  std::optional<double> speedup;
  std::string log_dir;
  int sessions = 0;
};

int cmd_teleop(const TeleopArgs &a, std::ostream &out) {
  RunConfig cfg = a.config.load();
  if (a.port) cfg.teleop.port = *a.port;
  if (a.horizon) cfg.teleop.horizon = *a.horizon;
  if (a.speedup) cfg.teleop.speedup = *a.speedup;
  if (!a.log_dir.empty()) cfg.teleop.log_dir = a.log_dir;
  cfg = resolve(cfg, nullptr);
  const auto track = load_config_map(cfg, a.config.base_dir());
  TeleopServeOptions opts;
  opts.max_sessions = a.sessions;
  opts.log = [&out](const std::string &s) { out << s << std::endl; };
  serve(track, cfg.env, cfg.teleop, map_id_of(cfg), opts);
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct PreviewArgs {
  ConfigArgs config;
  int frames = 8;
  std::uint64_t seed = 0;
  std::string out = "preview";
};

int cmd_render_preview(const PreviewArgs &a, std::ostream &out) {
  if (a.frames < 0) throw ConfigError("--frames must be non-negative");
  RunConfig cfg = a.config.load();
  cfg = resolve(cfg, nullptr);
  const auto track = load_config_map(cfg, a.config.base_dir());
  const fs::path dir(a.out);
  make_dir(dir);

  for (const bool randomized : {false, true}) {
    EnvConfig ec = cfg.env;
    ec.action_mapping = ActionMapping::Steering;
    ec.render = true;
    ec.randomization.enabled = randomized;
    Env env(track, ec);
    PDBaseline pd(cfg.pd);
    std::uint64_t episode = a.seed;
    env.reset(episode);
    pd.reset(env);
    for (int k = 0; k < a.frames; ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d.png", randomized ? "randomized" : "plain", k);
      write_png(env.last_frame(), (dir / name).string());
      // Several steps between dumps so frames show different track sections.
      for (int s = 0; s < 5; ++s) {
        if (env.done()) {
          env.reset(++episode);
          pd.reset(env);
        }
        env.step(pd.act(env));
      }
    }
  }
  std::vector<VehicleState> none;
  write_png(Renderer::render_top_down(*track, none, 256), (dir / "top_down.png").string());
  out << "wrote " << 2 * a.frames + 1 << " images to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

int cmd_gradcheck(int coords, std::uint64_t seed, std::ostream &out) {
  const GradcheckResult r = gradcheck(coords, seed);
  out << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
      << std::defaultfloat << " over " << r.checked << " coordinates (" << r.skipped
      << " skipped at ReLU kinks) in " << std::setprecision(3) << r.seconds << " s\n";
  if (!(r.max_rel_error <= 1e-3)) {
    out << "gradient check FAILED (tolerance 1e-3)\n";
    return kExitNumerical;
  }
  out << "gradient check passed (tolerance 1e-3)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct MapGenArgs {
  ConfigArgs config;
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<int> min_size;
  std::optional<int> max_size;
  std::optional<double> min_curve;
  std::optional<double> max_curve;
  std::optional<double> tile_size;
};

int cmd_map_gen(const MapGenArgs &a, std::ostream &out) {
  if (a.count < 1) throw ConfigError("--count must be positive");
  const RunConfig cfg = a.config.load();
  MapRandomization spec = cfg.env.map_randomization.value_or(MapRandomization{});
  if (a.min_size) spec.min_size = *a.min_size;
  if (a.max_size) spec.max_size = *a.max_size;
  if (a.min_curve) spec.min_curve_fraction = *a.min_curve;
  if (a.max_curve) spec.max_curve_fraction = *a.max_curve;
  if (a.tile_size) spec.tile_size = *a.tile_size;
  spec.validate();
  if (a.out.empty()) {
    for (int i = 0; i < a.count; ++i) {
      if (i) out << "\n";
      out << generate_random_map(a.seed + i, spec).serialize();
    }
    return kExitOk;
  }
  const fs::path dir(a.out);
  make_dir(dir);
  for (int i = 0; i < a.count; ++i) {
    const fs::path p = dir / ("random_" + std::to_string(a.seed + i) + ".map");
    write_text(p, generate_random_map(a.seed + i, spec).serialize());
    out << p.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Lane-following reinforcement-learning workbench", "lanerl"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto *train_cmd = app.add_subcommand("train", "Train a PPO policy into a run directory");
  train_args.config.attach(train_cmd);
  train_cmd->add_option("-o,--out", train_args.out, "Run directory")->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "Training seed");
  train_cmd->add_option("--total-steps", train_args.total_steps, "Environment steps");
  train_cmd->add_option("--workers", train_args.workers, "Rollout workers");
  train_cmd->add_option("--mapping", train_args.mapping,
                        "wheel_velocity | wheel_velocity_positive | wheel_velocity_braking | "
                        "steering");
  train_cmd->add_option("--reward", train_args.reward, "orientation | distance");
  train_cmd->add_flag("-q,--quiet", train_args.quiet, "No per-iteration output");

  EvalArgs eval_args;
  auto *eval_cmd = app.add_subcommand("eval", "Evaluate a controller on the five metrics");
  eval_args.config.attach(eval_cmd);
  eval_cmd
      ->add_option("--controller", eval_args.controller,
                   "pd | scripted | scripted-follow | scripted-brake | <checkpoint file>")
      ->capture_default_str();
  eval_cmd->add_option("--episodes", eval_args.episodes, "Episode count");
  eval_cmd->add_option("--horizon", eval_args.horizon, "Episode horizon in seconds");
  eval_cmd->add_option("--seed", eval_args.seed, "First episode seed");
  eval_cmd->add_option("--threads", eval_args.threads, "Parallel episodes");
  eval_cmd->add_option("-o,--out", eval_args.out, "Output directory")->capture_default_str();

  TeleopArgs teleop_args;
  auto *teleop_cmd = app.add_subcommand("teleop", "Serve keyboard teleoperation over a websocket");
  teleop_args.config.attach(teleop_cmd);
  teleop_cmd->add_option("--port", teleop_args.port, "TCP port (0: any free port)");
  teleop_cmd->add_option("--horizon", teleop_args.horizon, "Episode horizon in seconds");
  teleop_cmd->add_option("--speedup", teleop_args.speedup, "Simulated seconds per wall second");
  teleop_cmd->add_option("--log-dir", teleop_args.log_dir, "Episode log directory");
  teleop_cmd->add_option("--sessions", teleop_args.sessions, "Exit after N sessions (0: never)");

  PreviewArgs preview_args;
  auto *preview_cmd =
      app.add_subcommand("render-preview", "Dump camera frames with and without randomization");
  preview_args.config.attach(preview_cmd);
  preview_cmd->add_option("-k,--frames", preview_args.frames, "Frames per variant")
      ->capture_default_str();
  preview_cmd->add_option("--seed", preview_args.seed, "Episode seed")->capture_default_str();
  preview_cmd->add_option("-o,--out", preview_args.out, "Output directory")->capture_default_str();

  int gc_coords = 200;
  std::uint64_t gc_seed = 0;
  auto *gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  gc_cmd->add_option("--coords", gc_coords, "Coordinates to check")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed, "Seed")->capture_default_str();

  MapGenArgs map_args;
  auto *map_cmd = app.add_subcommand("map-gen", "Generate random closed-loop maps");
  map_args.config.attach(map_cmd);
  map_cmd->add_option("-n,--count", map_args.count, "Number of maps")->capture_default_str();
  map_cmd->add_option("--seed", map_args.seed, "First seed")->capture_default_str();
  map_cmd->add_option("-o,--out", map_args.out, "Output directory (default: print)");
  map_cmd->add_option("--min-size", map_args.min_size, "Minimum grid side");
  map_cmd->add_option("--max-size", map_args.max_size, "Maximum grid side");
  map_cmd->add_option("--min-curve", map_args.min_curve, "Minimum curve-tile fraction");
  map_cmd->add_option("--max-curve", map_args.max_curve, "Maximum curve-tile fraction");
  map_cmd->add_option("--tile-size", map_args.tile_size, "Tile size in metres");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*teleop_cmd) return cmd_teleop(teleop_args, out);
    if (*preview_cmd) return cmd_render_preview(preview_args, out);
    if (*gc_cmd) return cmd_gradcheck(gc_coords, gc_seed, out);
    if (*map_cmd) return cmd_map_gen(map_args, out);
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError &e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError &e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}

}  // namespace lanerl
