#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lanerl/env.hpp"
#include "lanerl/policy.hpp"

namespace lanerl {

struct PPOConfig {
  double gamma = 0.99;
  double lambda_gae = 0.95;
  double clip_epsilon = 0.2;
  double beta_init = 1.0;
  double kl_target = 0.01;
  double c_value = 0.5;
  double c_entropy = 0.003;
  double learning_rate = 3e-4;
  int rollout_length = 512;  // steps per worker per iteration
  int num_workers = 1;
  int minibatch_size = 64;
  int epochs_per_iteration = 4;
  std::int64_t total_steps = 300000;
  std::uint64_t seed = 0;
  /// Per-network global gradient-norm clip; 0 disables.
  double max_grad_norm = 0.5;
  double log_std_init = -0.7;
  /// Checkpoint every N iterations (0: only initial and final).
  int checkpoint_every = 10;

  void validate() const;
};

/// Rollout storage. Per-step vectors are flat; action-shaped fields hold action_dim values per step.
struct TrajectoryBatch {
  int action_dim = 1;
  std::vector<ObservationTensor> observations;
  std::vector<double> actions;
  std::vector<double> log_prob_old;
  std::vector<double> mean_old;
  std::vector<double> log_std_old;
  std::vector<double> value_old;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return rewards.size(); }
  void append(const TrajectoryBatch &other);
  /// Shifts advantages to mean 0 and scales them to unit (population) std.
  void normalize_advantages();
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// dones[t] marks that step t ended an episode; `bootstrap_value` is V of the state after the last
/// step (ignored when the last step is done).
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                      double lambda_gae);

double clip_surrogate(double ratio, double advantage, double clip_epsilon);

double update_kl_coefficient(double beta, double measured_kl, double kl_target);

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;  // -mean clipped surrogate
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

/// Per-sample derivatives of the sample loss with respect to the network outputs.
template <typename T>
struct LossGradients {
  MatrixX<T> d_mean;
  MatrixX<T> d_log_std;
  MatrixX<T> d_value;
};

/// Combined clipped-surrogate + adaptive-KL + value + entropy loss over the samples `indices` of
/// `batch`. Row i of `mean` / `value` belongs to batch sample indices[i]. Fills `grads` if given.
template <typename T>
LossStats ppo_loss(const TrajectoryBatch &batch, std::span<const std::size_t> indices,
                   const MatrixX<T> &mean, std::span<const T> log_std, const MatrixX<T> &value,
                   double beta, const PPOConfig &cfg, LossGradients<T> *grads);

struct IterationLog {
  int iteration = 0;
  std::int64_t steps = 0;
  int episodes = 0;
  std::optional<double> mean_episode_reward;
  std::optional<double> min_episode_reward;
  std::optional<double> max_episode_reward;
  std::optional<double> mean_episode_length;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double beta = 0.0;
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;

  std::string to_json_line() const;
};

struct TrainOptions {
  /// Directory receiving train_log.jsonl and checkpoints/; empty disables file output.
  std::string out_dir;
  /// Called after each iteration with the updated parameters.
  std::function<void(const IterationLog &, const ActorCritic<float>::Params &)> on_iteration;
  /// Free-form JSON stored in checkpoint headers.
  std::string metadata_json = "{}";
};

struct TrainResult {
  NetworkSpec spec;
  ActorCritic<float>::Params params;
  std::vector<IterationLog> log;
  std::int64_t steps = 0;
};

/// Runs PPO. Deterministic for fixed (config, worker count). Throws NumericalError on a
/// non-finite loss after writing checkpoints/last_good.bin.
TrainResult train(std::shared_ptr<const TrackMap> track, const EnvConfig &env_config,
                  const PPOConfig &cfg, const TrainOptions &options = {});

struct GradcheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates whose ReLU pattern changes within +-h
  double seconds = 0.0;
};

/// Central-difference check of the full PPO loss gradient on a downsized network in double.
GradcheckResult gradcheck(int coordinates = 200, std::uint64_t seed = 0, double h = 1e-3);

/// Small network used by gradcheck (8x8x9 input).
NetworkSpec gradcheck_spec(int action_dim);

}  // namespace lanerl
