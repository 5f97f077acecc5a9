#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sfdiff/diffusion.hpp"

namespace sfdiff::testing {

struct GradCheck {
  std::size_t checked = 0;
  double worst = 0.0;  // max relative error
};

// Compares analytic and central-difference gradients of sum(w * output) for
// `count` parameters spread over every block of the layout.
inline GradCheck check_denoiser_gradient(const DenoiserSpec& spec, std::size_t count, std::uint64_t seed) {
  Denoiser<double> model(spec);
  Rng rng = derive_rng(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = spec.image_size;
  ConditioningInput<double> x{nn::Tensor<double>(spec.in_channels - 1, n, n)};
  for (auto& v : x.channels.data) v = normal(rng);
  Field2D<double> noisy(n, n), w(n, n);
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    noisy[k] = normal(rng);
    w[k] = normal(rng);
  }
  const double gamma = 0.37;
  auto objective = [&]() {
    const auto out = model.predict(x, noisy, gamma);
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) s += w[k] * out[k];
    return s;
  };
  typename Denoiser<double>::Trace trace;
  model.predict(x, noisy, gamma, trace);
  std::vector<double> grads(model.parameter_count(), 0.0);
  model.accumulate_gradient(trace, w, grads);

  const auto& blocks = model.layout().blocks();
  std::vector<std::size_t> picks;
  for (std::size_t i = 0; picks.size() < count; ++i) {
    const auto& b = blocks[(i * 7919) % blocks.size()];
    std::uniform_int_distribution<std::size_t> pick(0, b.size - 1);
    picks.push_back(b.offset + pick(rng));
  }
  GradCheck result;
  auto params = model.parameters();
  for (auto idx : picks) {
    const double saved = params[idx];
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    params[idx] = saved + h;
    const double up = objective();
    params[idx] = saved - h;
    const double down = objective();
    params[idx] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(numeric), std::abs(grads[idx]), 1e-6});
    result.worst = std::max(result.worst, std::abs(numeric - grads[idx]) / scale);
    ++result.checked;
  }
  return result;
}

}  // namespace sfdiff::testing
