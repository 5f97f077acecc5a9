#pragma once

// Conditional denoising diffusion for magnitude-field inpainting: the noise
// schedule, conditioning construction, the epsilon-predicting U-Net wrapper,
// the training step and ancestral sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfdiff/dataset.hpp"
#include "sfdiff/field.hpp"
#include "sfdiff/nn/adam.hpp"
#include "sfdiff/nn/unet.hpp"
#include "sfdiff/parallel.hpp"
#include "sfdiff/rng.hpp"

namespace sfdiff {

struct NoiseSchedule {
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<double> betas;   // betas[t - 1], t = 1..T
  std::vector<double> gammas;  // cumulative products of (1 - beta)

  int steps() const { return static_cast<int>(betas.size()); }
  double gamma(int t) const { return gammas.at(static_cast<std::size_t>(t - 1)); }
};

// Linear betas from beta_min to beta_max over T steps.
NoiseSchedule make_schedule(int steps, double beta_min, double beta_max);

// Evenly strided subsequence of 1..T with `count` entries, ascending, always
// containing 1 and T (only T when count == 1).
std::vector<int> strided_timesteps(int schedule_steps, int count);

inline constexpr double kFreqEmbeddingMin = 30.0;
inline constexpr double kFreqEmbeddingMax = 300.0;

enum class FrequencyEmbedding { Constant };

// (f - 30) / 270 clamped to [0, 1].
double frequency_feature(double frequency_hz);

inline constexpr int kConditioningChannels = 3;

// Channel 0: normalized observations with N(0, 1) noise at unknown cells;
// channel 1: mask; channel 2: constant frequency feature.
template <typename T>
struct ConditioningInput {
  nn::Tensor<T> channels;
};

template <typename T>
Field2D<T> forward_noise(const Field2D<T>& y, double gamma, const Field2D<T>& epsilon) {
  if (!y.same_shape(epsilon)) throw ContractError("forward_noise: shape mismatch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("forward_noise: gamma must lie in [0, 1]");
  const T a = static_cast<T>(std::sqrt(gamma));
  const T b = static_cast<T>(std::sqrt(1.0 - gamma));
  Field2D<T> out(y.rows(), y.cols());
  for (std::size_t k = 0; k < y.size(); ++k) out[k] = a * y[k] + b * epsilon[k];
  return out;
}

// Inverts forward_noise given the noise: (noisy - sqrt(1 - gamma) eps) / sqrt(gamma).
template <typename T>
Field2D<T> predict_clean(const Field2D<T>& noisy, const Field2D<T>& epsilon, double gamma) {
  if (!noisy.same_shape(epsilon)) throw ContractError("predict_clean: shape mismatch");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("predict_clean: gamma must lie in (0, 1]");
  const T a = static_cast<T>(std::sqrt(gamma));
  const T b = static_cast<T>(std::sqrt(1.0 - gamma));
  Field2D<T> out(noisy.rows(), noisy.cols());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (noisy[k] - b * epsilon[k]) / a;
  return out;
}

template <typename T>
Field2D<T> standard_normal_field(Rng& rng, int rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Field2D<T> out(rows, cols);
  for (auto& v : out.storage()) v = static_cast<T>(normal(rng));
  return out;
}

template <typename T, typename U>
ConditioningInput<T> build_conditioning(const Field2D<U>& normalized, const ObservationMask& mask, double frequency_hz,
                                        Rng& rng) {
  if (mask.rows() != normalized.rows() || mask.cols() != normalized.cols())
    throw ContractError("build_conditioning: mask does not match the field");
  ConditioningInput<T> x{nn::Tensor<T>(kConditioningChannels, normalized.rows(), normalized.cols())};
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t plane = normalized.size();
  const T feature = static_cast<T>(frequency_feature(frequency_hz));
  for (std::size_t k = 0; k < plane; ++k) {
    const bool seen = mask.observed(k);
    x.channels.data[k] = seen ? static_cast<T>(normalized[k]) : static_cast<T>(normal(rng));
    x.channels.data[plane + k] = seen ? T(1) : T(0);
    x.channels.data[2 * plane + k] = feature;
  }
  return x;
}

template <typename T>
ConditioningInput<T> build_conditioning(const Sample& sample, Rng& rng) {
  return build_conditioning<T>(sample.normalized, sample.mask, sample.frequency_hz, rng);
}

// U-Net epsilon predictor with its flat parameter vector.
template <typename T>
class Denoiser {
 public:
  using Scalar = T;
  using Trace = typename nn::UNet<T>::Cache;

  explicit Denoiser(const DenoiserSpec& spec) : net_(spec), params_(net_.initial_parameters()) {}
  Denoiser(const DenoiserSpec& spec, std::vector<T> params) : net_(spec), params_(std::move(params)) {
    if (params_.size() != net_.parameter_count()) throw ContractError("Denoiser: parameter count mismatch");
  }

  const DenoiserSpec& spec() const { return net_.spec(); }
  const nn::ParamLayout& layout() const { return net_.layout(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }

  Field2D<T> predict(const ConditioningInput<T>& x, const Field2D<T>& noisy, double gamma, Trace& trace) const {
    const int size = net_.spec().image_size;
    if (x.channels.channels + 1 != net_.spec().in_channels || x.channels.height != size || x.channels.width != size ||
        noisy.rows() != size || noisy.cols() != size)
      throw ContractError("denoiser input does not match the network shape");
    nn::Tensor<T> input(x.channels.channels + 1, size, size);
    std::copy(x.channels.data.begin(), x.channels.data.end(), input.data.begin());
    std::copy(noisy.storage().begin(), noisy.storage().end(),
              input.data.begin() + static_cast<std::ptrdiff_t>(x.channels.size()));
    auto out = net_.forward(params_, input, gamma, trace);
    return Field2D<T>(size, size, std::move(out.data));
  }

  Field2D<T> predict(const ConditioningInput<T>& x, const Field2D<T>& noisy, double gamma) const {
    Trace trace;
    return predict(x, noisy, gamma, trace);
  }

  void accumulate_gradient(const Trace& trace, const Field2D<T>& dout, std::span<T> grads) const {
    nn::Tensor<T> d(1, dout.rows(), dout.cols());
    d.data = dout.storage();
    net_.backward(params_, grads, trace, d);
  }

 private:
  nn::UNet<T> net_;
  std::vector<T> params_;
};

// Network evaluation with output validation.
template <typename Model>
Field2D<typename Model::Scalar> denoise_predict(const Model& model,
                                                const ConditioningInput<typename Model::Scalar>& x,
                                                const Field2D<typename Model::Scalar>& noisy, double gamma) {
  auto out = model.predict(x, noisy, gamma);
  if (!noisy.same_shape(out)) throw ContractError("denoiser output shape differs from the target shape");
  for (auto v : out.values())
    if (!std::isfinite(static_cast<double>(v))) throw NumericalError("denoiser produced a non-finite output");
  return out;
}

enum class LossMask { ObservedOnly, FullGrid };

struct TrainerConfig {
  int epochs = 1000;
  int batch_size = 8;
  double learning_rate = 5e-5;
  LossMask loss_mask = LossMask::ObservedOnly;
  int schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int checkpoint_every = 0;  // steps between intermediate checkpoints; 0 = final only
  std::uint64_t seed = 0;
  bool resample_masks = false;  // draw a fresh mask (same count) every time a sample is used
  std::uint64_t max_steps = 0;  // 0 = epochs * steps_per_epoch
  unsigned threads = 1;

  void validate() const;
};

struct StepResult {
  double loss = 0.0;
  double mean_gamma = 0.0;
};

// Per-cell loss weights for one item.
template <typename T>
Field2D<T> loss_weights(const ObservationMask& mask, LossMask mode) {
  Field2D<T> w(mask.rows(), mask.cols(), T(1));
  if (mode == LossMask::ObservedOnly)
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = mask.observed(k) ? T(1) : T(0);
  return w;
}

namespace detail {

template <typename T>
struct ItemDraw {
  int t = 1;
  double gamma = 1.0;
  ConditioningInput<T> conditioning;
  Field2D<T> epsilon;
  Field2D<T> noisy;
  Field2D<T> weights;
};

}  // namespace detail

// Masked epsilon-regression loss over a batch and its parameter gradient.
// Items are drawn from `rng` in batch order (t, epsilon, conditioning noise);
// gradients are reduced in batch order regardless of the thread count.
template <typename Model>
StepResult loss_and_gradient(std::span<const Sample* const> batch, const Model& model, const NoiseSchedule& schedule,
                             LossMask mode, Rng& rng, std::span<typename Model::Scalar> grads,
                             unsigned threads = 1) {
  using T = typename Model::Scalar;
  if (batch.empty()) throw ContractError("training batch is empty");
  std::vector<detail::ItemDraw<T>> draws(batch.size());
  std::uniform_int_distribution<int> pick_t(1, schedule.steps());
  double weight_total = 0.0;
  double gamma_total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& s = *batch[b];
    auto& d = draws[b];
    d.t = pick_t(rng);
    d.gamma = schedule.gamma(d.t);
    d.epsilon = standard_normal_field<T>(rng, s.normalized.rows(), s.normalized.cols());
    d.conditioning = build_conditioning<T>(s, rng);
    Field2D<T> y(s.normalized.rows(), s.normalized.cols());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = static_cast<T>(s.normalized[k]);
    d.noisy = forward_noise(y, d.gamma, d.epsilon);
    d.weights = loss_weights<T>(s.mask, mode);
    for (auto w : d.weights.values()) weight_total += static_cast<double>(w);
    gamma_total += d.gamma;
  }
  if (weight_total == 0.0) throw ContractError("training batch has no cells selected by the loss mask");

  const std::size_t n_params = grads.size();
  std::vector<double> item_loss(batch.size(), 0.0);
  std::vector<std::vector<T>> item_grads(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    const auto& d = draws[b];
    typename Model::Trace trace;
    const auto out = model.predict(d.conditioning, d.noisy, d.gamma, trace);
    Field2D<T> dout(out.rows(), out.cols());
    double sum = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double diff = static_cast<double>(out[k]) - static_cast<double>(d.epsilon[k]);
      sum += static_cast<double>(d.weights[k]) * diff * diff;
      dout[k] = static_cast<T>(2.0 * static_cast<double>(d.weights[k]) * diff / weight_total);
    }
    item_loss[b] = sum;
    if (n_params > 0) {
      item_grads[b].assign(n_params, T(0));
      model.accumulate_gradient(trace, dout, item_grads[b]);
    }
  });
  std::fill(grads.begin(), grads.end(), T(0));
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t k = 0; k < n_params; ++k) grads[k] += item_grads[b][k];
  const double loss = std::accumulate(item_loss.begin(), item_loss.end(), 0.0) / weight_total;
  return {loss, gamma_total / static_cast<double>(batch.size())};
}

// One optimizer update on the batch; returns the pre-update loss. Throws
// NumericalError naming the step, mean gamma and batch ids if the loss or the
// gradient is not finite.
template <typename Model>
StepResult training_step(std::span<const Sample* const> batch, std::span<const std::size_t> batch_ids, Model& model,
                         nn::Adam<typename Model::Scalar>& optimizer, const NoiseSchedule& schedule,
                         const TrainerConfig& config, Rng& rng) {
  using T = typename Model::Scalar;
  std::vector<T> grads(model.parameter_count(), T(0));
  const auto result = loss_and_gradient(batch, model, schedule, config.loss_mask, rng, std::span<T>(grads),
                                        config.threads);
  bool finite = std::isfinite(result.loss);
  for (auto g : grads) finite = finite && std::isfinite(static_cast<double>(g));
  if (!finite) {
    std::string ids;
    for (auto id : batch_ids) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    throw NumericalError("non-finite training loss at step " + std::to_string(optimizer.steps) +
                         " (mean gamma " + std::to_string(result.mean_gamma) + ", batch ids " + ids + ")");
  }
  if (model.parameter_count() > 0) {
    optimizer.learning_rate = config.learning_rate;
    optimizer.step(model.parameters(), grads);
  }
  return result;
}

struct SamplerOptions {
  int steps = 250;
  bool clip_denoised = true;  // clip the clean-signal estimate to [0, 1] inside each step
  double headroom = kInferenceHeadroom;
};

struct Reconstruction {
  Field2D<double> magnitude;   // physical units, observed cells overwritten
  Field2D<double> normalized;  // final clipped sampler state
  double scale = 0.0;          // inference normalization scale
};

// Ancestral sampling on a strided timestep subsequence. Conditioning is built
// from the sample's observed magnitudes normalized in inference mode.
template <typename Model>
Reconstruction reconstruct(const Model& model, const Sample& observations, const NoiseSchedule& schedule, Rng& rng,
                           const SamplerOptions& options = {}) {
  using T = typename Model::Scalar;
  if (options.steps < 1 || options.steps > schedule.steps())
    throw DomainError("reconstruct: sampling steps must lie in [1, T]");
  const int rows = observations.magnitude.rows(), cols = observations.magnitude.cols();
  Field2D<double> measured(rows, cols);
  for (std::size_t k = 0; k < measured.size(); ++k) measured[k] = observations.magnitude[k];
  const auto norm = normalize(measured, observations.mask, options.headroom);

  const auto x = build_conditioning<T>(norm.values, observations.mask, observations.frequency_hz, rng);
  Field2D<T> state = standard_normal_field<T>(rng, rows, cols);
  const auto taus = strided_timesteps(schedule.steps(), options.steps);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int i = static_cast<int>(taus.size()) - 1; i >= 0; --i) {
    const double g = schedule.gamma(taus[i]);
    const double g_prev = i > 0 ? schedule.gamma(taus[i - 1]) : 1.0;
    const auto eps = model.predict(x, state, g);
    auto clean = predict_clean(state, eps, g);
    if (options.clip_denoised)
      for (auto& v : clean.storage()) v = std::clamp(v, T(0), T(1));
    if (i > 0) {
      const double alpha = g / g_prev;
      const double beta = 1.0 - alpha;
      const double c_clean = std::sqrt(g_prev) * beta / (1.0 - g);
      const double c_state = std::sqrt(alpha) * (1.0 - g_prev) / (1.0 - g);
      const double sigma = std::sqrt(beta * (1.0 - g_prev) / (1.0 - g));
      for (std::size_t k = 0; k < state.size(); ++k)
        state[k] = static_cast<T>(c_clean * static_cast<double>(clean[k]) + c_state * static_cast<double>(state[k]) +
                                  sigma * normal(rng));
    } else {
      state = std::move(clean);
    }
    for (auto v : state.values())
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericalError("reconstruct: non-finite state at sampling step " + std::to_string(i) + " (t = " +
                             std::to_string(taus[i]) + ", gamma = " + std::to_string(g) + ")");
  }

  Reconstruction r{Field2D<double>(rows, cols), Field2D<double>(rows, cols), norm.scale};
  for (std::size_t k = 0; k < state.size(); ++k) {
    r.normalized[k] = std::clamp(static_cast<double>(state[k]), 0.0, 1.0);
    r.magnitude[k] = observations.mask.observed(k) ? measured[k] : r.normalized[k] * norm.scale;
  }
  return r;
}

// Checkpoint: network shape, schedule, training position, parameters and
// optimizer moments.
struct Checkpoint {
  DenoiserSpec spec;
  int schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::uint64_t step = 0;
  std::uint64_t training_seed = 0;
  double learning_rate = 0.0;
  std::uint32_t batch_size = 0;
  LossMask loss_mask = LossMask::ObservedOnly;
  bool resample_masks = false;
  std::vector<float> parameters;
  nn::Adam<float> optimizer;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
// CRC-64 of everything before the trailer (the trailer itself would cancel out).
std::uint64_t checkpoint_digest(const std::string& bytes);
void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

// Epoch-shuffled mini-batch training over an in-memory corpus. Step s uses the
// random stream (seed, s) and the permutation of epoch s / steps_per_epoch, so
// a run resumed from a checkpoint continues bit-identically.
class Trainer {
 public:
  Trainer(const DenoiserSpec& spec, const TrainerConfig& config, std::vector<Sample> corpus);
  Trainer(const Checkpoint& checkpoint, const TrainerConfig& config, std::vector<Sample> corpus);

  std::uint64_t steps_per_epoch() const;
  std::uint64_t total_steps() const;
  std::uint64_t step() const { return optimizer_.steps; }
  bool done() const { return step() >= total_steps(); }

  StepResult run_step();
  // Runs until done or until `steps` more updates; on_step(step, result) after each.
  void run(std::uint64_t steps, const std::function<void(std::uint64_t, const StepResult&)>& on_step = {});

  const Denoiser<float>& denoiser() const { return denoiser_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  Checkpoint checkpoint() const;

 private:
  std::vector<std::size_t> batch_indices(std::uint64_t step) const;

  TrainerConfig config_;
  std::vector<Sample> corpus_;
  Denoiser<float> denoiser_;
  NoiseSchedule schedule_;
  nn::Adam<float> optimizer_;
};

}  // namespace sfdiff
