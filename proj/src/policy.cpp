#include "lanerl/policy.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "lanerl/error.hpp"

namespace lanerl {
namespace {

template <typename T>
using CMap = Eigen::Map<const MatrixX<T>>;
template <typename T>
using Map = Eigen::Map<MatrixX<T>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
CMap<T> as_matrix(const NamedArray<T> &a) {
  return CMap<T>(a.values.data(), a.shape[0], a.shape[1]);
}
template <typename T>
Map<T> as_matrix(NamedArray<T> &a) {
  return Map<T>(a.values.data(), a.shape[0], a.shape[1]);
}
template <typename T>
Eigen::Map<const RowVec<T>> as_row(const NamedArray<T> &a) {
  return Eigen::Map<const RowVec<T>>(a.values.data(), Eigen::Index(a.values.size()));
}
template <typename T>
Eigen::Map<RowVec<T>> as_row(NamedArray<T> &a) {
  return Eigen::Map<RowVec<T>>(a.values.data(), Eigen::Index(a.values.size()));
}

template <typename T>
void relu_inplace(MatrixX<T> &m) {
  m = m.cwiseMax(T(0));
}

// Rows of `d` where the matching activation is not positive are zeroed.
template <typename T, typename A>
void relu_mask(Eigen::Ref<MatrixX<T>> d, const A &act) {
  d = (act.array() > T(0)).select(d, T(0));
}

template <typename T>
void orthogonal_init(NamedArray<T> &a, std::mt19937_64 &rng, double gain) {
  const int rows = a.shape[0];
  const int cols = a.shape[1];
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(big, small);
  for (int i = 0; i < big; ++i) {
    for (int j = 0; j < small; ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  for (int j = 0; j < small; ++j) {
    if (qr.matrixQR()(j, j) < 0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) a.values[std::size_t(i) * cols + j] = static_cast<T>(gain * w(i, j));
  }
}

// Writes into `col`, reusing its allocation when the shape is unchanged.
template <typename T>
void im2col_into(const T *data, int batch, std::array<int, 3> in, const ConvLayerSpec &layer,
                 MatrixX<T> &col) {
  const auto [h, w, c] = in;
  const int k = layer.kernel;
  const int s = layer.stride;
  const int ho = (h - k) / s + 1;
  const int wo = (w - k) / s + 1;
  const int span = k * c;
  col.resize(Eigen::Index(batch) * ho * wo, k * span);
  const std::size_t sample = std::size_t(h) * w * c;
  for (int b = 0; b < batch; ++b) {
    const T *src_b = data + b * sample;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T *dst = col.row((Eigen::Index(b) * ho + oy) * wo + ox).data();
        for (int ky = 0; ky < k; ++ky) {
          const T *src = src_b + (std::size_t(oy * s + ky) * w + ox * s) * c;
          std::memcpy(dst + ky * span, src, sizeof(T) * span);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add column gradients back onto the HWC input (one sample per row).
template <typename T>
MatrixX<T> col2im(const MatrixX<T> &dcol, int batch, std::array<int, 3> in,
                  const ConvLayerSpec &layer) {
  const auto [h, w, c] = in;
  const int k = layer.kernel;
  const int s = layer.stride;
  const int ho = (h - k) / s + 1;
  const int wo = (w - k) / s + 1;
  const int span = k * c;
  MatrixX<T> out = MatrixX<T>::Zero(batch, Eigen::Index(h) * w * c);
  for (int b = 0; b < batch; ++b) {
    T *dst_b = out.row(b).data();
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const T *src = dcol.row((Eigen::Index(b) * ho + oy) * wo + ox).data();
        for (int ky = 0; ky < k; ++ky) {
          T *dst = dst_b + (std::size_t(oy * s + ky) * w + ox * s) * c;
          const T *row = src + ky * span;
          for (int j = 0; j < span; ++j) dst[j] += row[j];
        }
      }
    }
  }
  return out;
}

nlohmann::json spec_to_json(const NetworkSpec &spec) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto &l : spec.conv) {
    conv.push_back({{"filters", l.filters}, {"kernel", l.kernel}, {"stride", l.stride}});
  }
  return {{"input", {spec.input_height, spec.input_width, spec.input_channels}},
          {"conv", conv},
          {"dense_units", spec.dense_units},
          {"action_dim", spec.action_dim}};
}

NetworkSpec spec_from_json(const nlohmann::json &j) {
  NetworkSpec spec;
  const auto &in = j.at("input");
  spec.input_height = in.at(0).get<int>();
  spec.input_width = in.at(1).get<int>();
  spec.input_channels = in.at(2).get<int>();
  spec.conv.clear();
  for (const auto &l : j.at("conv")) {
    spec.conv.push_back({l.at("filters").get<int>(), l.at("kernel").get<int>(),
                         l.at("stride").get<int>()});
  }
  spec.dense_units = j.at("dense_units").get<int>();
  spec.action_dim = j.at("action_dim").get<int>();
  return spec;
}

}  // namespace

NetworkSpec NetworkSpec::standard(int action_dim) {
  NetworkSpec spec;
  spec.action_dim = action_dim;
  return spec;
}

std::array<int, 3> NetworkSpec::layer_input_shape(std::size_t i) const {
  std::array<int, 3> shape{input_height, input_width, input_channels};
  for (std::size_t l = 0; l < i; ++l) {
    shape = {(shape[0] - conv[l].kernel) / conv[l].stride + 1,
             (shape[1] - conv[l].kernel) / conv[l].stride + 1, conv[l].filters};
  }
  return shape;
}

int NetworkSpec::flat_size() const {
  const auto s = layer_input_shape(conv.size());
  return s[0] * s[1] * s[2];
}

void NetworkSpec::validate() const {
  if (input_height <= 0 || input_width <= 0 || input_channels <= 0 || dense_units <= 0 ||
      action_dim <= 0) {
    throw ConfigError("network dimensions must be positive");
  }
  std::array<int, 3> shape{input_height, input_width, input_channels};
  for (const auto &l : conv) {
    if (l.filters <= 0 || l.kernel <= 0 || l.stride <= 0 || l.kernel > shape[0] ||
        l.kernel > shape[1]) {
      throw ConfigError("invalid convolution layer for input " + std::to_string(shape[0]) + "x" +
                        std::to_string(shape[1]));
    }
    shape = {(shape[0] - l.kernel) / l.stride + 1, (shape[1] - l.kernel) / l.stride + 1, l.filters};
  }
}

// ---------------------------------------------------------------------------------------------
// ParameterSet

template <typename T>
NamedArray<T> &ParameterSet<T>::add(std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  arrays_.push_back({std::move(name), std::move(shape), AlignedVector<T>(n, T(0))});
  return arrays_.back();
}

template <typename T>
NamedArray<T> &ParameterSet<T>::at(std::string_view name) {
  for (auto &a : arrays_) {
    if (a.name == name) return a;
  }
  throw UsageError("no parameter array named '" + std::string(name) + "'");
}

template <typename T>
const NamedArray<T> &ParameterSet<T>::at(std::string_view name) const {
  return const_cast<ParameterSet *>(this)->at(name);
}

template <typename T>
std::size_t ParameterSet<T>::size() const {
  std::size_t n = 0;
  for (const auto &a : arrays_) n += a.values.size();
  return n;
}

template <typename T>
T &ParameterSet<T>::flat(std::size_t index) {
  for (auto &a : arrays_) {
    if (index < a.values.size()) return a.values[index];
    index -= a.values.size();
  }
  throw UsageError("flat parameter index out of range");
}

template <typename T>
T ParameterSet<T>::flat(std::size_t index) const {
  return const_cast<ParameterSet *>(this)->flat(index);
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (const auto &a : arrays_) out.add(a.name, a.shape);
  return out;
}

template <typename T>
bool ParameterSet<T>::all_finite() const {
  for (const auto &a : arrays_) {
    for (T v : a.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <typename T>
bool ParameterSet<T>::same_layout(const ParameterSet &o) const {
  if (arrays_.size() != o.arrays_.size()) return false;
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    if (arrays_[i].name != o.arrays_[i].name || arrays_[i].shape != o.arrays_[i].shape) return false;
  }
  return true;
}

template <typename T>
bool ParameterSet<T>::operator==(const ParameterSet &o) const {
  if (!same_layout(o)) return false;
  for (std::size_t i = 0; i < arrays_.size(); ++i) {
    if (arrays_[i].values != o.arrays_[i].values) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------------------------
// ConvNet

template <typename T>
MatrixX<T> im2col(const MatrixX<T> &input, std::array<int, 3> in_shape,
                  const ConvLayerSpec &layer) {
  MatrixX<T> col;
  im2col_into(input.data(), static_cast<int>(input.rows()), in_shape, layer, col);
  return col;
}

template <typename T>
ConvNet<T>::ConvNet(NetworkSpec spec, int outputs, std::string prefix)
    : spec_(std::move(spec)), outputs_(outputs), prefix_(std::move(prefix)) {
  spec_.validate();
}

template <typename T>
void ConvNet<T>::init(ParameterSet<T> &params, std::mt19937_64 &rng, double head_gain) const {
  const double relu_gain = std::numbers::sqrt2;
  for (std::size_t i = 0; i < spec_.conv.size(); ++i) {
    const auto in = spec_.layer_input_shape(i);
    const auto &l = spec_.conv[i];
    auto &w = params.add(prefix_ + "conv" + std::to_string(i) + ".w",
                         {l.kernel * l.kernel * in[2], l.filters});
    orthogonal_init(w, rng, relu_gain);
    params.add(prefix_ + "conv" + std::to_string(i) + ".b", {l.filters});
  }
  auto &dw = params.add(prefix_ + "dense.w", {spec_.flat_size(), spec_.dense_units});
  orthogonal_init(dw, rng, relu_gain);
  params.add(prefix_ + "dense.b", {spec_.dense_units});
  auto &hw = params.add(prefix_ + "head.w", {spec_.dense_units, outputs_});
  orthogonal_init(hw, rng, head_gain);
  params.add(prefix_ + "head.b", {outputs_});
}

template <typename T>
MatrixX<T> ConvNet<T>::forward(const ParameterSet<T> &params, const MatrixX<T> &z0, int batch,
                               Cache *cache) const {
  Cache local;
  Cache &c = cache ? *cache : local;
  const std::size_t L = spec_.conv.size();
  c.batch = batch;
  c.cols.resize(L);
  c.acts.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    const std::string id = prefix_ + "conv" + std::to_string(i);
    if (i == 0) {
      c.acts[0] = z0;
    } else {
      im2col_into(c.acts[i - 1].data(), batch, spec_.layer_input_shape(i), spec_.conv[i], c.cols[i]);
      c.acts[i].noalias() = c.cols[i] * as_matrix(params.at(id + ".w"));
    }
    c.acts[i].rowwise() += as_row(params.at(id + ".b"));
    relu_inplace(c.acts[i]);
  }
  const CMap<T> flat(c.acts.back().data(), batch, spec_.flat_size());
  c.dense.noalias() = flat * as_matrix(params.at(prefix_ + "dense.w"));
  c.dense.rowwise() += as_row(params.at(prefix_ + "dense.b"));
  relu_inplace(c.dense);
  MatrixX<T> out = c.dense * as_matrix(params.at(prefix_ + "head.w"));
  out.rowwise() += as_row(params.at(prefix_ + "head.b"));
  return out;
}

template <typename T>
MatrixX<T> ConvNet<T>::backward(const ParameterSet<T> &params, const Cache &c,
                                const MatrixX<T> &d_out, ParameterSet<T> &grads) const {
  const int B = c.batch;
  const std::size_t L = spec_.conv.size();
  const MatrixX<T> g = d_out / T(B);

  as_matrix(grads.at(prefix_ + "head.w")).noalias() += c.dense.transpose() * g;
  as_row(grads.at(prefix_ + "head.b")) += g.colwise().sum();
  MatrixX<T> d_dense = g * as_matrix(params.at(prefix_ + "head.w")).transpose();
  relu_mask<T>(d_dense, c.dense);

  const CMap<T> flat(c.acts.back().data(), B, spec_.flat_size());
  as_matrix(grads.at(prefix_ + "dense.w")).noalias() += flat.transpose() * d_dense;
  as_row(grads.at(prefix_ + "dense.b")) += d_dense.colwise().sum();
  MatrixX<T> d_flat = d_dense * as_matrix(params.at(prefix_ + "dense.w")).transpose();

  // Reinterpret (batch x flat) as (batch*positions x filters): same memory layout.
  MatrixX<T> dz = Map<T>(d_flat.data(), c.acts.back().rows(), c.acts.back().cols());
  relu_mask<T>(dz, c.acts.back());
  for (std::size_t i = L - 1; i > 0; --i) {
    const std::string id = prefix_ + "conv" + std::to_string(i);
    as_matrix(grads.at(id + ".w")).noalias() += c.cols[i].transpose() * dz;
    as_row(grads.at(id + ".b")) += dz.colwise().sum();
    const MatrixX<T> dcol = dz * as_matrix(params.at(id + ".w")).transpose();
    MatrixX<T> d_in = col2im(dcol, B, spec_.layer_input_shape(i), spec_.conv[i]);
    dz = Map<T>(d_in.data(), c.acts[i - 1].rows(), c.acts[i - 1].cols());
    relu_mask<T>(dz, c.acts[i - 1]);
  }
  as_row(grads.at(prefix_ + "conv0.b")) += dz.colwise().sum();
  return dz;
}

// ---------------------------------------------------------------------------------------------
// Gaussian helpers

template <typename T>
T gaussian_log_prob(std::span<const T> mean, std::span<const T> log_std,
                    std::span<const T> action) {
  const T half_log_2pi = T(0.5 * std::log(2.0 * std::numbers::pi));
  T lp = 0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const T z = (action[j] - mean[j]) * std::exp(-log_std[j]);
    lp += T(-0.5) * z * z - log_std[j] - half_log_2pi;
  }
  return lp;
}

template <typename T>
T gaussian_kl(std::span<const T> mean_old, std::span<const T> log_std_old,
              std::span<const T> mean_new, std::span<const T> log_std_new) {
  T kl = 0;
  for (std::size_t j = 0; j < mean_old.size(); ++j) {
    const T var_old = std::exp(T(2) * log_std_old[j]);
    const T var_new = std::exp(T(2) * log_std_new[j]);
    const T dm = mean_old[j] - mean_new[j];
    kl += log_std_new[j] - log_std_old[j] + (var_old + dm * dm) / (T(2) * var_new) - T(0.5);
  }
  return kl;
}

template <typename T>
T gaussian_entropy(std::span<const T> log_std) {
  const T c = T(0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e));
  T h = 0;
  for (T ls : log_std) h += ls + c;
  return h;
}

double log_prob(const DistributionParams &dist, std::span<const double> action) {
  return gaussian_log_prob<double>(dist.mean, dist.log_std, action);
}

double kl_divergence(const DistributionParams &old_dist, const DistributionParams &new_dist) {
  return gaussian_kl<double>(old_dist.mean, old_dist.log_std, new_dist.mean, new_dist.log_std);
}

double entropy(const DistributionParams &dist) { return gaussian_entropy<double>(dist.log_std); }

std::pair<std::vector<double>, double> sample_action(const DistributionParams &dist,
                                                     std::mt19937_64 &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> action(dist.mean.size());
  for (std::size_t j = 0; j < action.size(); ++j) {
    action[j] = dist.mean[j] + std::exp(dist.log_std[j]) * normal(rng);
  }
  return {action, log_prob(dist, action)};
}

// ---------------------------------------------------------------------------------------------
// ActorCritic

template <typename T>
ActorCritic<T>::ActorCritic(NetworkSpec spec)
    : spec_(spec), policy_net_(spec, spec.action_dim, "pi/"), value_net_(spec, 1, "vf/") {}

template <typename T>
typename ActorCritic<T>::Params ActorCritic<T>::init(std::uint64_t seed, double log_std_init) const {
  Params p;
  std::mt19937_64 rng(seed);
  policy_net_.init(p.policy, rng, 0.01);
  auto &ls = p.policy.add("pi/log_std", {spec_.action_dim});
  std::fill(ls.values.begin(), ls.values.end(), static_cast<T>(log_std_init));
  value_net_.init(p.value, rng, 1.0);
  return p;
}

// First-layer kernels of the networks side by side, so one product serves both.
template <typename T>
MatrixX<T> ActorCritic<T>::first_layer_weights(const Params &params, bool with_value) const {
  const auto &wp = params.policy.at("pi/conv0.w");
  const int F = spec_.conv.front().filters;
  MatrixX<T> w(wp.shape[0], with_value ? 2 * F : F);
  w.leftCols(F) = as_matrix(wp);
  if (with_value) w.rightCols(F) = as_matrix(params.value.at("vf/conv0.w"));
  return w;
}

template <typename T>
typename ActorCritic<T>::Output ActorCritic<T>::forward(const Params &params,
                                                        const MatrixX<T> &input, Cache *cache,
                                                        bool with_value) const {
  if (input.cols() != spec_.input_size()) {
    throw UsageError("network input has " + std::to_string(input.cols()) + " values per sample, " +
                     "expected " + std::to_string(spec_.input_size()));
  }
  const int B = static_cast<int>(input.rows());
  const auto in0 = spec_.layer_input_shape(0);
  const auto out0 = spec_.layer_input_shape(1);
  const Eigen::Index P = Eigen::Index(out0[0]) * out0[1];
  const int F = spec_.conv.front().filters;
  const MatrixX<T> w = first_layer_weights(params, with_value);

  // Per-sample im2col keeps the column buffer cache-resident.
  MatrixX<T> z(B * P, w.cols());
  MatrixX<T> col;
  for (int b = 0; b < B; ++b) {
    im2col_into(input.row(b).data(), 1, in0, spec_.conv.front(), col);
    z.middleRows(b * P, P).noalias() = col * w;
  }
  if (cache) {
    cache->input = &input;
    cache->with_value = with_value;
  }
  Output out;
  MatrixX<T> z_pi = z.leftCols(F);
  out.mean = policy_net_.forward(params.policy, z_pi, B, cache ? &cache->policy : nullptr);
  const auto &ls = params.policy.at("pi/log_std").values;
  out.log_std.resize(ls.size());
  for (std::size_t j = 0; j < ls.size(); ++j) {
    out.log_std[j] = std::clamp(ls[j], T(kLogStdMin), T(kLogStdMax));
  }
  if (with_value) {
    MatrixX<T> z_vf = z.rightCols(F);
    out.value = value_net_.forward(params.value, z_vf, B, cache ? &cache->value : nullptr);
  }
  return out;
}

template <typename T>
typename ActorCritic<T>::Params ActorCritic<T>::backward(const Params &params, const Cache &cache,
                                                         const MatrixX<T> &d_mean,
                                                         const MatrixX<T> &d_log_std,
                                                         const MatrixX<T> &d_value) const {
  if (!cache.input) throw UsageError("backward() needs a cache filled by forward()");
  const bool with_value = d_value.size() > 0;
  if (with_value && !cache.with_value) {
    throw UsageError("backward() with a value gradient needs a forward pass with values");
  }
  Params grads{params.policy.zeros_like(), params.value.zeros_like()};
  const MatrixX<T> dz_pi = policy_net_.backward(params.policy, cache.policy, d_mean, grads.policy);
  const auto &ls = params.policy.at("pi/log_std").values;
  auto &g_ls = grads.policy.at("pi/log_std").values;
  for (std::size_t j = 0; j < ls.size(); ++j) {
    const bool inside = ls[j] >= T(kLogStdMin) && ls[j] <= T(kLogStdMax);
    g_ls[j] = inside ? d_log_std.col(Eigen::Index(j)).mean() : T(0);
  }
  const int F = spec_.conv.front().filters;
  MatrixX<T> dz(dz_pi.rows(), with_value ? 2 * F : F);
  dz.leftCols(F) = dz_pi;
  if (with_value) {
    dz.rightCols(F) = value_net_.backward(params.value, cache.value, d_value, grads.value);
  }

  const MatrixX<T> &input = *cache.input;
  const auto in0 = spec_.layer_input_shape(0);
  const auto out0 = spec_.layer_input_shape(1);
  const Eigen::Index P = Eigen::Index(out0[0]) * out0[1];
  // Accumulated transposed (filters x K): the wide output runs faster than K x filters.
  MatrixX<T> gw_t = MatrixX<T>::Zero(dz.cols(), Eigen::Index(spec_.conv.front().kernel) *
                                                     spec_.conv.front().kernel * in0[2]);
  MatrixX<T> col;
  for (Eigen::Index b = 0; b < input.rows(); ++b) {
    im2col_into(input.row(b).data(), 1, in0, spec_.conv.front(), col);
    gw_t.noalias() += dz.middleRows(b * P, P).transpose() * col;
  }
  as_matrix(grads.policy.at("pi/conv0.w")) += gw_t.topRows(F).transpose();
  if (with_value) as_matrix(grads.value.at("vf/conv0.w")) += gw_t.bottomRows(F).transpose();
  return grads;
}

template <typename T>
void load_observation(const ObservationTensor &obs, MatrixX<T> &input, Eigen::Index row) {
  T *dst = input.row(row).data();
  constexpr T scale = T(1) / T(255);
  for (int i = 0; i < ObservationTensor::kLength; ++i) dst[i] = T(obs.codes[i]) * scale;
}

DistributionParams forward_policy(const ActorCritic<float> &net,
                                  const ActorCritic<float>::Params &params,
                                  const ObservationTensor &obs) {
  MatrixX<float> input(1, ObservationTensor::kLength);
  load_observation(obs, input, 0);
  const auto out = net.forward(params, input, nullptr, false);
  DistributionParams dist;
  for (int j = 0; j < out.mean.cols(); ++j) dist.mean.push_back(out.mean(0, j));
  for (float v : out.log_std) dist.log_std.push_back(v);
  return dist;
}

// ---------------------------------------------------------------------------------------------
// Adam

template <typename T>
void Adam<T>::update(ParameterSet<T> &p, const ParameterSet<T> &g, ParameterSet<T> &m,
                     ParameterSet<T> &v) const {
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t a = 0; a < p.arrays().size(); ++a) {
    auto &pv = p.arrays()[a].values;
    const auto &gv = g.arrays()[a].values;
    auto &mv = m.arrays()[a].values;
    auto &vv = v.arrays()[a].values;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double gi = gv[i];
      const double mi = beta1_ * mv[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * vv[i] + (1.0 - beta2_) * gi * gi;
      mv[i] = static_cast<T>(mi);
      vv[i] = static_cast<T>(vi);
      pv[i] = static_cast<T>(pv[i] - lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::step(typename ActorCritic<T>::Params &params,
                   const typename ActorCritic<T>::Params &grads) {
  if (t_ == 0) {
    m_ = {params.policy.zeros_like(), params.value.zeros_like()};
    v_ = {params.policy.zeros_like(), params.value.zeros_like()};
  }
  ++t_;
  update(params.policy, grads.policy, m_.policy, v_.policy);
  update(params.value, grads.value, m_.value, v_.value);
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'L', 'A', 'N', 'E', 'R', 'L', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void append_arrays(nlohmann::json &table, const ParameterSet<float> &set, std::string_view net,
                   std::uint64_t &offset) {
  for (const auto &a : set.arrays()) {
    table.push_back({{"name", a.name}, {"net", net}, {"shape", a.shape}, {"offset", offset},
                     {"count", a.values.size()}});
    offset += a.values.size();
  }
}
}  // namespace

void save_checkpoint(const Checkpoint &ckpt, const std::string &path) {
  nlohmann::json header;
  header["spec"] = spec_to_json(ckpt.spec);
  header["step"] = ckpt.step;
  header["metadata"] = nlohmann::json::parse(ckpt.metadata_json);
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  append_arrays(table, ckpt.params.policy, "policy", offset);
  append_arrays(table, ckpt.params.value, "value", offset);
  header["arrays"] = table;
  const std::string text = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = text.size();
  f.write(kMagic, sizeof(kMagic));
  f.write(reinterpret_cast<const char *>(&version), sizeof(version));
  f.write(reinterpret_cast<const char *>(&len), sizeof(len));
  f.write(text.data(), std::streamsize(len));
  for (const auto *set : {&ckpt.params.policy, &ckpt.params.value}) {
    for (const auto &a : set->arrays()) {
      f.write(reinterpret_cast<const char *>(a.values.data()),
              std::streamsize(a.values.size() * sizeof(float)));
    }
  }
  if (!f) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string &path, const NetworkSpec *expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  f.read(magic, sizeof(magic));
  f.read(reinterpret_cast<char *>(&version), sizeof(version));
  f.read(reinterpret_cast<char *>(&len), sizeof(len));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("'" + path + "' is not a checkpoint file");
  }
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  if (len > (1u << 24)) throw IoError("corrupt checkpoint header");
  std::string text(len, '\0');
  f.read(text.data(), std::streamsize(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.spec = spec_from_json(header.at("spec"));
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.metadata_json = header.value("metadata", nlohmann::json::object()).dump();
  if (expected && !(*expected == ckpt.spec)) {
    throw IoError("checkpoint network spec does not match the configured network");
  }
  ckpt.spec.validate();
  const ActorCritic<float> net(ckpt.spec);
  ckpt.params = net.init(0);
  const auto &table = header.at("arrays");
  std::vector<NamedArray<float> *> slots;
  for (auto *set : {&ckpt.params.policy, &ckpt.params.value}) {
    for (auto &a : set->arrays()) slots.push_back(&a);
  }
  if (table.size() != slots.size()) throw IoError("checkpoint array count mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto &entry = table[i];
    if (entry.at("name").get<std::string>() != slots[i]->name ||
        entry.at("shape").get<std::vector<int>>() != slots[i]->shape) {
      throw IoError("checkpoint array '" + entry.at("name").get<std::string>() +
                    "' has an unexpected name or shape");
    }
    f.read(reinterpret_cast<char *>(slots[i]->values.data()),
           std::streamsize(slots[i]->values.size() * sizeof(float)));
  }
  if (!f) throw IoError("truncated checkpoint '" + path + "'");
  return ckpt;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class ConvNet<float>;
template class ConvNet<double>;
template class ActorCritic<float>;
template class ActorCritic<double>;
template class Adam<float>;
template class Adam<double>;
template MatrixX<float> im2col(const MatrixX<float> &, std::array<int, 3>, const ConvLayerSpec &);
template MatrixX<double> im2col(const MatrixX<double> &, std::array<int, 3>, const ConvLayerSpec &);
template void load_observation(const ObservationTensor &, MatrixX<float> &, Eigen::Index);
template void load_observation(const ObservationTensor &, MatrixX<double> &, Eigen::Index);
template float gaussian_log_prob(std::span<const float>, std::span<const float>,
                                 std::span<const float>);
template double gaussian_log_prob(std::span<const double>, std::span<const double>,
                                  std::span<const double>);
template float gaussian_kl(std::span<const float>, std::span<const float>, std::span<const float>,
                           std::span<const float>);
template double gaussian_kl(std::span<const double>, std::span<const double>,
                            std::span<const double>, std::span<const double>);
template float gaussian_entropy(std::span<const float>);
template double gaussian_entropy(std::span<const double>);

}  // namespace lanerl
