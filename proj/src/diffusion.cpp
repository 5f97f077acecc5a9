#include "sfdiff/diffusion.hpp"

#include <cmath>

namespace sfdiff {

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw DomainError("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw DomainError("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.betas.resize(steps);
  s.gammas.resize(steps);
  double gamma = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.betas[t] = steps == 1 ? beta_min : beta_min + (beta_max - beta_min) * t / (steps - 1);
    gamma *= 1.0 - s.betas[t];
    s.gammas[t] = gamma;
  }
  return s;
}

std::vector<int> strided_timesteps(int schedule_steps, int count) {
  if (count < 1 || count > schedule_steps) throw DomainError("strided_timesteps: count must lie in [1, T]");
  if (count == 1) return {schedule_steps};
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i)
    out[i] = 1 + static_cast<int>(std::lround(static_cast<double>(i) * (schedule_steps - 1) / (count - 1)));
  return out;
}

double frequency_feature(double frequency_hz) {
  return std::clamp((frequency_hz - kFreqEmbeddingMin) / (kFreqEmbeddingMax - kFreqEmbeddingMin), 0.0, 1.0);
}

void TrainerConfig::validate() const {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (batch_size < 1) throw DomainError("batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be positive");
  if (checkpoint_every < 0) throw DomainError("checkpoint cadence must be >= 0");
  if (threads < 1) throw DomainError("threads must be >= 1");
  make_schedule(schedule_steps, beta_min, beta_max);
}

Trainer::Trainer(const DenoiserSpec& spec, const TrainerConfig& config, std::vector<Sample> corpus)
    : config_(config), corpus_(std::move(corpus)), denoiser_(spec) {
  config_.validate();
  if (corpus_.empty()) throw DomainError("training corpus is empty");
  schedule_ = make_schedule(config_.schedule_steps, config_.beta_min, config_.beta_max);
  optimizer_.learning_rate = config_.learning_rate;
}

Trainer::Trainer(const Checkpoint& ckpt, const TrainerConfig& config, std::vector<Sample> corpus)
    : config_(config), corpus_(std::move(corpus)), denoiser_(ckpt.spec, ckpt.parameters), optimizer_(ckpt.optimizer) {
  config_.validate();
  if (corpus_.empty()) throw DomainError("training corpus is empty");
  if (ckpt.schedule_steps != config_.schedule_steps || ckpt.beta_min != config_.beta_min ||
      ckpt.beta_max != config_.beta_max)
    throw ConfigError("checkpoint schedule differs from the trainer configuration");
  if (ckpt.training_seed != config_.seed || ckpt.batch_size != static_cast<std::uint32_t>(config_.batch_size))
    throw ConfigError("checkpoint seed or batch size differs from the trainer configuration");
  schedule_ = make_schedule(config_.schedule_steps, config_.beta_min, config_.beta_max);
  optimizer_.learning_rate = config_.learning_rate;
  optimizer_.steps = ckpt.step;
}

std::uint64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::uint64_t>(corpus_.size());
  const auto b = static_cast<std::uint64_t>(config_.batch_size);
  return (n + b - 1) / b;
}

std::uint64_t Trainer::total_steps() const {
  if (config_.max_steps > 0) return config_.max_steps;
  return static_cast<std::uint64_t>(config_.epochs) * steps_per_epoch();
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t step) const {
  const auto per_epoch = steps_per_epoch();
  const auto epoch = step / per_epoch;
  const auto slot = step % per_epoch;
  std::vector<std::size_t> order(corpus_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derive_rng(config_.seed, streams::kShuffle, epoch);
  for (std::size_t k = order.size(); k > 1; --k)
    std::swap(order[k - 1], order[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)]);
  const std::size_t begin = slot * config_.batch_size;
  const std::size_t end = std::min(order.size(), begin + config_.batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

StepResult Trainer::run_step() {
  const auto s = step();
  const auto ids = batch_indices(s);
  Rng rng = derive_rng(config_.seed, streams::kTraining, s);
  std::vector<Sample> remasked;
  std::vector<const Sample*> batch;
  if (config_.resample_masks) {
    for (auto id : ids) {
      remasked.push_back(corpus_[id]);
      auto& copy = remasked.back();
      copy.mask = sample_mask(rng, copy.mask.count(), copy.mask.rows(), copy.mask.cols());
    }
    for (const auto& r : remasked) batch.push_back(&r);
  } else {
    for (auto id : ids) batch.push_back(&corpus_[id]);
  }
  return training_step(std::span<const Sample* const>(batch), std::span<const std::size_t>(ids), denoiser_,
                       optimizer_, schedule_, config_, rng);
}

void Trainer::run(std::uint64_t steps, const std::function<void(std::uint64_t, const StepResult&)>& on_step) {
  for (std::uint64_t k = 0; k < steps && !done(); ++k) {
    const auto result = run_step();
    if (on_step) on_step(step(), result);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.spec = denoiser_.spec();
  c.schedule_steps = config_.schedule_steps;
  c.beta_min = config_.beta_min;
  c.beta_max = config_.beta_max;
  c.step = step();
  c.training_seed = config_.seed;
  c.learning_rate = config_.learning_rate;
  c.batch_size = static_cast<std::uint32_t>(config_.batch_size);
  c.loss_mask = config_.loss_mask;
  c.resample_masks = config_.resample_masks;
  const auto p = denoiser_.parameters();
  c.parameters.assign(p.begin(), p.end());
  c.optimizer = optimizer_;
  return c;
}

}  // namespace sfdiff
