#pragma once

// Minimal CHW tensors and flat parameter storage for the denoiser. Every layer
// addresses its weights as a slice of one flat parameter vector, so a whole
// model's parameters, gradients and optimizer moments are plain vectors with a
// fixed traversal order.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sfdiff/errors.hpp"

namespace sfdiff::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T{})
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  int plane() const { return height * width; }
  std::size_t size() const { return data.size(); }
  T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  const T& at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  // channels x (height * width) view
  MatrixMap<T> matrix() { return MatrixMap<T>(data.data(), channels, plane()); }
  ConstMatrixMap<T> matrix() const { return ConstMatrixMap<T>(data.data(), channels, plane()); }
  bool same_shape(const Tensor& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

enum class Init { Uniform, Ones, Zeros };

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  int fan_in = 1;
  Init init = Init::Uniform;
};

class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t size, int fan_in, Init init) {
    blocks_.push_back({std::move(name), total_, size, fan_in, init});
    total_ += size;
    return blocks_.back().offset;
  }
  std::size_t total() const { return total_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, unit norm
  // gains, zero norm shifts; drawn in traversal order from one seeded stream.
  template <typename T>
  std::vector<T> initialize(std::uint64_t seed) const {
    std::vector<T> params(total_);
    std::mt19937_64 rng(seed);
    for (const auto& b : blocks_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t k = 0; k < b.size; ++k) {
        double v = 0.0;
        if (b.init == Init::Uniform) v = dist(rng);
        if (b.init == Init::Ones) v = 1.0;
        params[b.offset + k] = static_cast<T>(v);
      }
    }
    return params;
  }

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace sfdiff::nn
