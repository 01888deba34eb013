#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>
#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lanerl/camera.hpp"

namespace lanerl {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvLayerSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  bool operator==(const ConvLayerSpec &) const = default;
};

/// Convolutional trunk (ReLU convs, one ReLU dense layer) with a linear head. The policy and the
/// value function each get their own copy; nothing is shared.
struct NetworkSpec {
  int input_height = ObservationTensor::kSize;
  int input_width = ObservationTensor::kSize;
  int input_channels = ObservationTensor::kChannels;
  std::vector<ConvLayerSpec> conv = {{16, 8, 4}, {32, 4, 2}};
  int dense_units = 256;
  int action_dim = 1;

  static NetworkSpec standard(int action_dim);

  int input_size() const { return input_height * input_width * input_channels; }
  /// (height, width, channels) of the input to layer i; index conv.size() is the trunk output.
  std::array<int, 3> layer_input_shape(std::size_t i) const;
  int flat_size() const;
  void validate() const;
  bool operator==(const NetworkSpec &) const = default;
};

/// Storage aligned like Eigen's own so that vectorized reductions sum in the same order for every
/// allocation.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct NamedArray {
  std::string name;
  std::vector<int> shape;
  AlignedVector<T> values;
};

/// Flat list of named weight arrays for one network.
template <typename T>
class ParameterSet {
 public:
  NamedArray<T> &add(std::string name, std::vector<int> shape);
  NamedArray<T> &at(std::string_view name);
  const NamedArray<T> &at(std::string_view name) const;
  std::vector<NamedArray<T>> &arrays() { return arrays_; }
  const std::vector<NamedArray<T>> &arrays() const { return arrays_; }

  std::size_t size() const;
  /// Scalar at a global index across all arrays (in array order).
  T &flat(std::size_t index);
  T flat(std::size_t index) const;

  ParameterSet zeros_like() const;
  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto &a : arrays_) {
      auto &b = out.add(a.name, a.shape);
      for (std::size_t i = 0; i < a.values.size(); ++i) b.values[i] = static_cast<U>(a.values[i]);
    }
    return out;
  }
  bool all_finite() const;
  bool same_layout(const ParameterSet &o) const;
  bool operator==(const ParameterSet &o) const;

 private:
  std::vector<NamedArray<T>> arrays_;
};

/// im2col for a batch of HWC inputs stored one sample per row.
template <typename T>
MatrixX<T> im2col(const MatrixX<T> &input, std::array<int, 3> in_shape, const ConvLayerSpec &layer);

/// Trunk plus linear head over one ParameterSet (arrays named `<prefix>conv0.w`, ...).
/// The first convolution's input product is supplied by the caller so that the policy and value
/// networks can evaluate it in one fused pass over the shared input.
template <typename T>
class ConvNet {
 public:
  struct Cache {
    int batch = 0;
    std::vector<MatrixX<T>> cols;  // cols[0] unused: the first layer is driven by the caller
    std::vector<MatrixX<T>> acts;  // post-ReLU conv outputs
    MatrixX<T> dense;              // post-ReLU dense output
  };

  ConvNet(NetworkSpec spec, int outputs, std::string prefix);

  void init(ParameterSet<T> &params, std::mt19937_64 &rng, double head_gain) const;
  /// `z0` = im2col(input) * conv0.w, without bias (rows = batch * out_h * out_w).
  MatrixX<T> forward(const ParameterSet<T> &params, const MatrixX<T> &z0, int batch,
                     Cache *cache) const;
  /// Accumulates gradients of mean_i(loss_i) given d loss_i / d output_i (one row per sample)
  /// for every array except conv0.w, and returns d loss / d z0 for the caller to finish conv0.w.
  MatrixX<T> backward(const ParameterSet<T> &params, const Cache &cache, const MatrixX<T> &d_out,
                      ParameterSet<T> &grads) const;

  int outputs() const { return outputs_; }

 private:
  NetworkSpec spec_;
  int outputs_;
  std::string prefix_;
};

/// Diagonal Gaussian parameters for one state.
struct DistributionParams {
  std::vector<double> mean;
  std::vector<double> log_std;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

template <typename T>
T gaussian_log_prob(std::span<const T> mean, std::span<const T> log_std, std::span<const T> action);
template <typename T>
T gaussian_kl(std::span<const T> mean_old, std::span<const T> log_std_old,
              std::span<const T> mean_new, std::span<const T> log_std_new);
template <typename T>
T gaussian_entropy(std::span<const T> log_std);

double log_prob(const DistributionParams &dist, std::span<const double> action);
double kl_divergence(const DistributionParams &old_dist, const DistributionParams &new_dist);
double entropy(const DistributionParams &dist);
/// action = mean + exp(log_std) * N(0, I); returns (action, log density at the action).
std::pair<std::vector<double>, double> sample_action(const DistributionParams &dist,
                                                     std::mt19937_64 &rng);

/// Separate policy and value networks plus the state-independent log-std vector
/// (stored in the policy set as `pi/log_std`).
template <typename T>
class ActorCritic {
 public:
  struct Params {
    ParameterSet<T> policy;
    ParameterSet<T> value;
    bool operator==(const Params &) const = default;
  };
  struct Output {
    MatrixX<T> mean;           // batch x action_dim
    std::vector<T> log_std;    // clamped, action_dim
    MatrixX<T> value;          // batch x 1 (empty when not requested)
  };
  struct Cache {
    const MatrixX<T> *input = nullptr;  // must outlive the cache's use in backward()
    bool with_value = false;
    typename ConvNet<T>::Cache policy;
    typename ConvNet<T>::Cache value;
  };

  explicit ActorCritic(NetworkSpec spec);

  const NetworkSpec &spec() const { return spec_; }
  Params init(std::uint64_t seed, double log_std_init = -0.7) const;

  /// `input` holds one flattened HWC observation per row.
  Output forward(const Params &params, const MatrixX<T> &input, Cache *cache,
                 bool with_value = true) const;
  /// Gradients of mean_i(loss_i). d_log_std holds per-sample derivatives w.r.t. the clamped
  /// log-std; d_value may be empty when the value head is not part of the loss.
  Params backward(const Params &params, const Cache &cache, const MatrixX<T> &d_mean,
                  const MatrixX<T> &d_log_std, const MatrixX<T> &d_value) const;

 private:
  MatrixX<T> first_layer_weights(const Params &params, bool with_value) const;

  NetworkSpec spec_;
  ConvNet<T> policy_net_;
  ConvNet<T> value_net_;
};

/// Writes observations into consecutive rows of `input` starting at `row`.
template <typename T>
void load_observation(const ObservationTensor &obs, MatrixX<T> &input, Eigen::Index row);

/// Single-observation policy evaluation.
DistributionParams forward_policy(const ActorCritic<float> &net,
                                  const ActorCritic<float>::Params &params,
                                  const ObservationTensor &obs);

/// Adam with bias correction, applied jointly to the policy and value sets.
template <typename T>
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(typename ActorCritic<T>::Params &params, const typename ActorCritic<T>::Params &grads);
  std::int64_t steps() const { return t_; }

 private:
  void update(ParameterSet<T> &p, const ParameterSet<T> &g, ParameterSet<T> &m,
              ParameterSet<T> &v) const;

  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t t_ = 0;
  typename ActorCritic<T>::Params m_;
  typename ActorCritic<T>::Params v_;
};

/// Versioned binary checkpoint: magic, version, JSON header (spec, step, array table), then
/// little-endian float32 payload.
struct Checkpoint {
  NetworkSpec spec;
  ActorCritic<float>::Params params;
  std::int64_t step = 0;
  std::string metadata_json = "{}";
};

void save_checkpoint(const Checkpoint &ckpt, const std::string &path);
/// Throws IoError on malformed files and when array shapes disagree with the stored spec
/// (or with `expected` when given).
Checkpoint load_checkpoint(const std::string &path, const NetworkSpec *expected = nullptr);

}  // namespace lanerl
