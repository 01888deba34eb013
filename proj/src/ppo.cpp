#include "lanerl/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <thread>

#include "lanerl/error.hpp"

namespace lanerl {
namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

void PPOConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in [0, 1]");
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) {
    throw ConfigError("ppo.lambda_gae must lie in [0, 1]");
  }
  if (!(clip_epsilon >= 0.1 && clip_epsilon <= 0.3)) {
    throw ConfigError("ppo.clip_epsilon must lie in [0.1, 0.3]");
  }
  if (!(beta_init > 0.0)) throw ConfigError("ppo.beta_init must be positive");
  if (!(kl_target > 0.0)) throw ConfigError("ppo.kl_target must be positive");
  if (!(c_value >= 0.0 && c_entropy >= 0.0)) {
    throw ConfigError("ppo.c_value and ppo.c_entropy must be non-negative");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("ppo.learning_rate must be positive");
  if (rollout_length <= 0) throw ConfigError("ppo.rollout_length must be positive");
  if (num_workers <= 0) throw ConfigError("ppo.num_workers must be positive");
  if (minibatch_size <= 0) throw ConfigError("ppo.minibatch_size must be positive");
  if (epochs_per_iteration <= 0) throw ConfigError("ppo.epochs_per_iteration must be positive");
  if (total_steps < 0) throw ConfigError("ppo.total_steps must be non-negative");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("ppo.max_grad_norm must be non-negative");
  if (!(log_std_init >= kLogStdMin && log_std_init <= kLogStdMax)) {
    throw ConfigError("ppo.log_std_init must lie in [-5, 2]");
  }
  if (checkpoint_every < 0) throw ConfigError("ppo.checkpoint_every must be non-negative");
}

void TrajectoryBatch::append(const TrajectoryBatch &o) {
  auto cat = [](auto &dst, const auto &src) { dst.insert(dst.end(), src.begin(), src.end()); };
  cat(observations, o.observations);
  cat(actions, o.actions);
  cat(log_prob_old, o.log_prob_old);
  cat(mean_old, o.mean_old);
  cat(log_std_old, o.log_std_old);
  cat(value_old, o.value_old);
  cat(rewards, o.rewards);
  cat(dones, o.dones);
  cat(advantages, o.advantages);
  cat(returns, o.returns);
}

void TrajectoryBatch::normalize_advantages() {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n) + 1e-8;
  for (double &a : advantages) a = (a - mean) / sd;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                      double lambda_gae) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw UsageError("compute_gae: rewards, values and dones must have equal length");
  }
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    running = delta + gamma * lambda_gae * live * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
    next_value = values[k];
  }
  return out;
}

double clip_surrogate(double ratio, double advantage, double clip_epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double update_kl_coefficient(double beta, double measured_kl, double kl_target) {
  if (measured_kl > 2.0 * kl_target) return beta * 1.5;
  if (measured_kl < kl_target / 2.0) return beta / 1.5;
  return beta;
}

template <typename T>
LossStats ppo_loss(const TrajectoryBatch &batch, std::span<const std::size_t> indices,
                   const MatrixX<T> &mean, std::span<const T> log_std, const MatrixX<T> &value,
                   double beta, const PPOConfig &cfg, LossGradients<T> *grads) {
  const int A = batch.action_dim;
  const Eigen::Index B = static_cast<Eigen::Index>(indices.size());
  if (B == 0) throw UsageError("ppo_loss: empty minibatch");
  if (mean.rows() != B || mean.cols() != A || value.rows() != B ||
      log_std.size() != std::size_t(A)) {
    throw UsageError("ppo_loss: output shapes do not match the minibatch");
  }
  if (grads) {
    grads->d_mean.setZero(B, A);
    grads->d_log_std.setZero(B, A);
    grads->d_value.setZero(B, 1);
  }
  const T ent = gaussian_entropy<T>(log_std);
  LossStats st;
  double surr_sum = 0.0;
  double kl_sum = 0.0;
  double vloss_sum = 0.0;
  int clipped = 0;
  std::vector<T> mu(A), act(A), mu_old(A), ls_old(A);
  for (Eigen::Index i = 0; i < B; ++i) {
    const std::size_t k = indices[i];
    for (int j = 0; j < A; ++j) {
      mu[j] = mean(i, j);
      act[j] = static_cast<T>(batch.actions[k * A + j]);
      mu_old[j] = static_cast<T>(batch.mean_old[k * A + j]);
      ls_old[j] = static_cast<T>(batch.log_std_old[k * A + j]);
    }
    const T logp = gaussian_log_prob<T>(mu, log_std, act);
    const T ratio = std::exp(logp - static_cast<T>(batch.log_prob_old[k]));
    const T adv = static_cast<T>(batch.advantages[k]);
    const T eps = static_cast<T>(cfg.clip_epsilon);
    const T surr = static_cast<T>(clip_surrogate(double(ratio), double(adv), cfg.clip_epsilon));
    if (std::abs(ratio - T(1)) > eps) ++clipped;
    const T kl = gaussian_kl<T>(mu_old, ls_old, mu, log_std);
    const T verr = value(i, 0) - static_cast<T>(batch.returns[k]);
    surr_sum += double(surr);
    kl_sum += double(kl);
    vloss_sum += double(verr * verr);
    if (!grads) continue;

    // Unclipped branch is the active one of the min when ratio*A <= clip(ratio)*A.
    const T clipped_ratio = std::clamp(ratio, T(1) - eps, T(1) + eps);
    const T d_surr_d_logp = ratio * adv <= clipped_ratio * adv ? adv * ratio : T(0);
    for (int j = 0; j < A; ++j) {
      const T inv_var = std::exp(T(-2) * log_std[j]);
      const T diff = act[j] - mu[j];
      const T z2 = diff * diff * inv_var;
      const T dlogp_dmu = diff * inv_var;
      const T dlogp_dls = z2 - T(1);
      const T dm = mu[j] - mu_old[j];
      const T var_old = std::exp(T(2) * ls_old[j]);
      const T dkl_dmu = dm * inv_var;
      const T dkl_dls = T(1) - (var_old + dm * dm) * inv_var;
      grads->d_mean(i, j) = -d_surr_d_logp * dlogp_dmu + T(beta) * dkl_dmu;
      grads->d_log_std(i, j) =
          -d_surr_d_logp * dlogp_dls + T(beta) * dkl_dls - static_cast<T>(cfg.c_entropy);
    }
    grads->d_value(i, 0) = T(2 * cfg.c_value) * verr;
  }
  const double n = static_cast<double>(B);
  st.policy_loss = -surr_sum / n;
  st.mean_kl = kl_sum / n;
  st.value_loss = vloss_sum / n;
  st.entropy = double(ent);
  st.clip_fraction = clipped / n;
  st.loss = st.policy_loss + beta * st.mean_kl + cfg.c_value * st.value_loss -
            cfg.c_entropy * st.entropy;
  return st;
}

template LossStats ppo_loss<float>(const TrajectoryBatch &, std::span<const std::size_t>,
                                   const MatrixX<float> &, std::span<const float>,
                                   const MatrixX<float> &, double, const PPOConfig &,
                                   LossGradients<float> *);
template LossStats ppo_loss<double>(const TrajectoryBatch &, std::span<const std::size_t>,
                                    const MatrixX<double> &, std::span<const double>,
                                    const MatrixX<double> &, double, const PPOConfig &,
                                    LossGradients<double> *);

std::string IterationLog::to_json_line() const {
  auto opt = [](const std::optional<double> &v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["steps"] = steps;
  j["episodes"] = episodes;
  j["mean_episode_reward"] = opt(mean_episode_reward);
  j["min_episode_reward"] = opt(min_episode_reward);
  j["max_episode_reward"] = opt(max_episode_reward);
  j["mean_episode_length"] = opt(mean_episode_length);
  j["mean_kl"] = mean_kl;
  j["clip_fraction"] = clip_fraction;
  j["beta"] = beta;
  j["loss"] = loss;
  j["policy_loss"] = policy_loss;
  j["value_loss"] = value_loss;
  j["entropy"] = entropy;
  return j.dump();
}

// ---------------------------------------------------------------------------------------------
// Training

namespace {

struct EpisodeStat {
  double reward;
  int length;
};

class RolloutWorker {
 public:
  RolloutWorker(std::shared_ptr<const TrackMap> track, const EnvConfig &cfg, std::uint64_t seed,
                int index)
      : env_(std::move(track), cfg),
        rng_(splitmix(seed ^ splitmix(0x726f6c6cull + std::uint64_t(index)))),
        seed_base_(splitmix(seed + 0x1000ull * std::uint64_t(index + 1))) {}

  void collect(const ActorCritic<float> &net, const ActorCritic<float>::Params &params, int steps,
               TrajectoryBatch &out, std::vector<EpisodeStat> &episodes, double &bootstrap) {
    const int A = net.spec().action_dim;
    out = TrajectoryBatch{};
    out.action_dim = A;
    episodes.clear();
    if (!started_) start_episode();
    MatrixX<float> input(1, ObservationTensor::kLength);
    for (int t = 0; t < steps; ++t) {
      load_observation(env_.observation(), input, 0);
      const auto o = net.forward(params, input, nullptr, true);
      DistributionParams dist;
      for (int j = 0; j < A; ++j) {
        dist.mean.push_back(o.mean(0, j));
        dist.log_std.push_back(o.log_std[j]);
      }
      auto [action, logp] = sample_action(dist, rng_);
      out.observations.push_back(env_.observation());
      const StepResult r = env_.step(action);
      out.actions.insert(out.actions.end(), action.begin(), action.end());
      out.log_prob_old.push_back(logp);
      out.mean_old.insert(out.mean_old.end(), dist.mean.begin(), dist.mean.end());
      out.log_std_old.insert(out.log_std_old.end(), dist.log_std.begin(), dist.log_std.end());
      out.value_old.push_back(o.value(0, 0));
      out.rewards.push_back(r.reward);
      out.dones.push_back(r.done ? 1 : 0);
      ep_reward_ += r.reward;
      ++ep_length_;
      if (r.done) {
        episodes.push_back({ep_reward_, ep_length_});
        start_episode();
      }
    }
    load_observation(env_.observation(), input, 0);
    bootstrap = net.forward(params, input, nullptr, true).value(0, 0);
  }

 private:
  void start_episode() {
    env_.reset(splitmix(seed_base_ + episode_counter_++));
    ep_reward_ = 0.0;
    ep_length_ = 0;
    started_ = true;
  }

  Env env_;
  std::mt19937_64 rng_;
  std::uint64_t seed_base_;
  std::uint64_t episode_counter_ = 0;
  double ep_reward_ = 0.0;
  int ep_length_ = 0;
  bool started_ = false;
};

double global_norm(const ParameterSet<float> &g) {
  double s = 0.0;
  for (const auto &a : g.arrays()) {
    for (float v : a.values) s += double(v) * v;
  }
  return std::sqrt(s);
}

void clip_norm(ParameterSet<float> &g, double max_norm) {
  const double n = global_norm(g);
  if (max_norm <= 0.0 || n <= max_norm) return;
  const float scale = static_cast<float>(max_norm / n);
  for (auto &a : g.arrays()) {
    for (float &v : a.values) v *= scale;
  }
}

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%09lld.bin", static_cast<long long>(step));
  return buf;
}

}  // namespace

TrainResult train(std::shared_ptr<const TrackMap> track, const EnvConfig &env_config,
                  const PPOConfig &cfg, const TrainOptions &options) {
  cfg.validate();
  env_config.validate();
  const NetworkSpec spec = NetworkSpec::standard(action_dim(env_config.action_mapping));
  const ActorCritic<float> net(spec);
  TrainResult result;
  result.spec = spec;
  result.params = net.init(splitmix(cfg.seed ^ 0x696e6974ull), cfg.log_std_init);
  Adam<float> adam(cfg.learning_rate);
  double beta = cfg.beta_init;

  const bool files = !options.out_dir.empty();
  fs::path ckpt_dir;
  std::ofstream log_file;
  if (files) {
    ckpt_dir = fs::path(options.out_dir) / "checkpoints";
    std::error_code ec;
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw IoError("cannot create '" + ckpt_dir.string() + "': " + ec.message());
    log_file.open(fs::path(options.out_dir) / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write training log in '" + options.out_dir + "'");
  }
  auto save = [&](const fs::path &path, std::int64_t step) {
    if (!files) return;
    save_checkpoint({spec, result.params, step, options.metadata_json}, path.string());
  };
  save(ckpt_dir / checkpoint_name(0), 0);

  std::vector<std::unique_ptr<RolloutWorker>> workers;
  for (int w = 0; w < cfg.num_workers; ++w) {
    workers.push_back(std::make_unique<RolloutWorker>(track, env_config, cfg.seed, w));
  }
  std::mt19937_64 shuffle_rng(splitmix(cfg.seed ^ 0x73687566ull));
  const std::int64_t per_iter = std::int64_t(cfg.rollout_length) * cfg.num_workers;
  const int iterations = static_cast<int>((cfg.total_steps + per_iter - 1) / per_iter);

  for (int it = 0; it < iterations; ++it) {
    // Rollouts: one thread per worker, each on its own env and RNG; gathered in worker order.
    std::vector<TrajectoryBatch> parts(workers.size());
    std::vector<std::vector<EpisodeStat>> stats(workers.size());
    std::vector<double> bootstrap(workers.size(), 0.0);
    std::vector<std::exception_ptr> errors(workers.size());
    auto run = [&](std::size_t w) {
      try {
        workers[w]->collect(net, result.params, cfg.rollout_length, parts[w], stats[w],
                            bootstrap[w]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (workers.size() == 1) {
      run(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers.size(); ++w) threads.emplace_back(run, w);
      for (auto &t : threads) t.join();
    }
    for (auto &e : errors) {
      if (e) std::rethrow_exception(e);
    }

    TrajectoryBatch batch;
    batch.action_dim = spec.action_dim;
    IterationLog log;
    std::vector<double> ep_rewards;
    double ep_len_sum = 0.0;
    for (std::size_t w = 0; w < workers.size(); ++w) {
      auto gae = compute_gae(parts[w].rewards, parts[w].value_old, parts[w].dones, bootstrap[w],
                             cfg.gamma, cfg.lambda_gae);
      parts[w].advantages = std::move(gae.advantages);
      parts[w].returns = std::move(gae.returns);
      batch.append(parts[w]);
      for (const auto &e : stats[w]) {
        ep_rewards.push_back(e.reward);
        ep_len_sum += e.length;
      }
    }
    batch.normalize_advantages();
    result.steps += std::int64_t(batch.size());

    log.iteration = it + 1;
    log.steps = result.steps;
    log.episodes = static_cast<int>(ep_rewards.size());
    if (!ep_rewards.empty()) {
      const double n = double(ep_rewards.size());
      log.mean_episode_reward = std::accumulate(ep_rewards.begin(), ep_rewards.end(), 0.0) / n;
      log.min_episode_reward = *std::min_element(ep_rewards.begin(), ep_rewards.end());
      log.max_episode_reward = *std::max_element(ep_rewards.begin(), ep_rewards.end());
      log.mean_episode_length = ep_len_sum / n;
    }

    // Optimisation: single-threaded minibatch Adam over shuffled epochs.
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double kl_sum = 0.0, clip_sum = 0.0, loss_sum = 0.0, pl_sum = 0.0, vl_sum = 0.0, ent_sum = 0.0;
    int updates = 0;
    ActorCritic<float>::Cache cache;
    MatrixX<float> input;
    LossGradients<float> lg;
    for (int epoch = 0; epoch < cfg.epochs_per_iteration; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.minibatch_size) {
        const std::size_t end = std::min(order.size(), start + std::size_t(cfg.minibatch_size));
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        input.resize(Eigen::Index(idx.size()), ObservationTensor::kLength);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          load_observation(batch.observations[idx[i]], input, Eigen::Index(i));
        }
        const auto out = net.forward(result.params, input, &cache, true);
        const LossStats st =
            ppo_loss<float>(batch, idx, out.mean, out.log_std, out.value, beta, cfg, &lg);
        auto grads = net.backward(result.params, cache, lg.d_mean, lg.d_log_std, lg.d_value);
        if (!std::isfinite(st.loss) || !grads.policy.all_finite() || !grads.value.all_finite()) {
          save(ckpt_dir / "last_good.bin", result.steps);
          throw NumericalError("non-finite loss or gradient at iteration " +
                               std::to_string(it + 1) + " (loss=" + std::to_string(st.loss) +
                               ")" + (files ? "; last good parameters in checkpoints/last_good.bin"
                                            : ""));
        }
        clip_norm(grads.policy, cfg.max_grad_norm);
        clip_norm(grads.value, cfg.max_grad_norm);
        adam.step(result.params, grads);
        kl_sum += st.mean_kl;
        clip_sum += st.clip_fraction;
        loss_sum += st.loss;
        pl_sum += st.policy_loss;
        vl_sum += st.value_loss;
        ent_sum += st.entropy;
        ++updates;
      }
    }
    const double u = std::max(1, updates);
    log.mean_kl = kl_sum / u;
    log.clip_fraction = clip_sum / u;
    log.loss = loss_sum / u;
    log.policy_loss = pl_sum / u;
    log.value_loss = vl_sum / u;
    log.entropy = ent_sum / u;
    log.beta = beta;
    beta = update_kl_coefficient(beta, log.mean_kl, cfg.kl_target);

    if (files) {
      log_file << log.to_json_line() << '\n';
      log_file.flush();
      if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
        save(ckpt_dir / checkpoint_name(result.steps), result.steps);
      }
    }
    result.log.push_back(log);
    if (options.on_iteration) options.on_iteration(log, result.params);
  }
  save(ckpt_dir / "final.bin", result.steps);
  return result;
}

// ---------------------------------------------------------------------------------------------
// Gradient check

NetworkSpec gradcheck_spec(int action_dim) {
  NetworkSpec spec;
  spec.input_height = 8;
  spec.input_width = 8;
  spec.input_channels = 9;
  spec.conv = {{4, 4, 2}, {4, 2, 1}};
  spec.dense_units = 8;
  spec.action_dim = action_dim;
  return spec;
}

namespace {

using Params64 = ActorCritic<double>::Params;

struct Probe {
  double loss;
  std::vector<bool> mask;
};

Probe evaluate(const ActorCritic<double> &net, const Params64 &params, const MatrixX<double> &input,
               const TrajectoryBatch &batch, std::span<const std::size_t> idx, double beta,
               const PPOConfig &cfg, LossGradients<double> *lg, ActorCritic<double>::Cache *keep) {
  ActorCritic<double>::Cache local;
  ActorCritic<double>::Cache &cache = keep ? *keep : local;
  const auto out = net.forward(params, input, &cache, true);
  Probe p;
  p.loss = ppo_loss<double>(batch, idx, out.mean, out.log_std, out.value, beta, cfg, lg).loss;
  for (const auto *c : {&cache.policy, &cache.value}) {
    for (const auto &a : c->acts) {
      for (Eigen::Index i = 0; i < a.size(); ++i) p.mask.push_back(a.data()[i] > 0.0);
    }
    for (Eigen::Index i = 0; i < c->dense.size(); ++i) p.mask.push_back(c->dense.data()[i] > 0.0);
  }
  return p;
}

double &param_at(Params64 &p, std::size_t k) {
  const std::size_t np = p.policy.size();
  return k < np ? p.policy.flat(k) : p.value.flat(k - np);
}

}  // namespace

GradcheckResult gradcheck(int coordinates, std::uint64_t seed, double h) {
  const auto t0 = std::chrono::steady_clock::now();
  const int A = 2;
  const int B = 6;
  const NetworkSpec spec = gradcheck_spec(A);
  const ActorCritic<double> net(spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Larger head gain than training init so the check exercises non-trivial outputs.
  Params64 params = net.init(seed, -0.3);
  for (const char *name : {"pi/head.w", "vf/head.w"}) {
    const bool is_pi = name[0] == 'p';
    for (double &w : (is_pi ? params.policy : params.value).at(name).values) w = 0.5 * normal(rng);
  }
  for (auto *set : {&params.policy, &params.value}) {
    for (auto &a : set->arrays()) {
      if (a.shape.size() == 1 && a.name != "pi/log_std") {
        for (double &b : a.values) b = 0.1 * normal(rng);
      }
    }
  }

  MatrixX<double> input(B, spec.input_size());
  for (Eigen::Index i = 0; i < input.size(); ++i) input.data()[i] = unit(rng);

  // Old policy: the current one with a small perturbation of its outputs.
  const auto out = net.forward(params, input, nullptr, true);
  TrajectoryBatch batch;
  batch.action_dim = A;
  for (int i = 0; i < B; ++i) {
    DistributionParams old;
    for (int j = 0; j < A; ++j) {
      old.mean.push_back(out.mean(i, j) + 0.05 * normal(rng));
      old.log_std.push_back(out.log_std[j] + 0.05 * normal(rng));
    }
    const auto [action, logp] = sample_action(old, rng);
    batch.actions.insert(batch.actions.end(), action.begin(), action.end());
    batch.log_prob_old.push_back(logp);
    batch.mean_old.insert(batch.mean_old.end(), old.mean.begin(), old.mean.end());
    batch.log_std_old.insert(batch.log_std_old.end(), old.log_std.begin(), old.log_std.end());
    batch.advantages.push_back(normal(rng));
    batch.returns.push_back(normal(rng));
    batch.rewards.push_back(0.0);
    batch.value_old.push_back(0.0);
    batch.dones.push_back(0);
  }
  std::vector<std::size_t> idx(B);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  PPOConfig cfg;
  cfg.c_entropy = 0.01;
  const double beta = 0.7;

  LossGradients<double> lg;
  ActorCritic<double>::Cache cache;
  const Probe base = evaluate(net, params, input, batch, idx, beta, cfg, &lg, &cache);
  auto grads = net.backward(params, cache, lg.d_mean, lg.d_log_std, lg.d_value);

  const std::size_t total = params.policy.size() + params.value.size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  GradcheckResult res;
  int attempts = 0;
  while (res.checked < coordinates && attempts < 50 * coordinates) {
    ++attempts;
    const std::size_t k = pick(rng);
    double &theta = param_at(params, k);
    const double saved = theta;
    theta = saved + h;
    const Probe plus = evaluate(net, params, input, batch, idx, beta, cfg, nullptr, nullptr);
    theta = saved - h;
    const Probe minus = evaluate(net, params, input, batch, idx, beta, cfg, nullptr, nullptr);
    theta = saved;
    if (plus.mask != base.mask || minus.mask != base.mask) {
      ++res.skipped;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * h);
    const double analytic = param_at(grads, k);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic) / denom);
    ++res.checked;
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace lanerl
