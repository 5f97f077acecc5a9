#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sfdiff/errors.hpp"

namespace sfdiff::nn {

template <typename T>
struct Adam {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t steps = 0;
  std::vector<T> first_moment;
  std::vector<T> second_moment;

  void step(std::span<T> params, std::span<const T> grads) {
    if (params.size() != grads.size()) throw ContractError("Adam: gradient length mismatch");
    if (first_moment.empty()) {
      first_moment.assign(params.size(), T(0));
      second_moment.assign(params.size(), T(0));
    }
    if (first_moment.size() != params.size()) throw ContractError("Adam: state length mismatch");
    ++steps;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    const T step_size = static_cast<T>(learning_rate / c1);
    const T root_c2 = static_cast<T>(std::sqrt(c2));
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2), eps = static_cast<T>(epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
      first_moment[k] = b1 * first_moment[k] + (T(1) - b1) * grads[k];
      second_moment[k] = b2 * second_moment[k] + (T(1) - b2) * grads[k] * grads[k];
      params[k] -= step_size * first_moment[k] / (std::sqrt(second_moment[k]) / root_c2 + eps);
    }
  }
};

}  // namespace sfdiff::nn
