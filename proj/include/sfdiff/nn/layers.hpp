#pragma once

// Differentiable building blocks with hand-written backward passes. Forward
// calls fill a per-call cache that the matching backward call consumes;
// gradients accumulate (+=) into a flat gradient vector laid out like the
// parameter vector.

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sfdiff/nn/tensor.hpp"

namespace sfdiff::nn {

template <typename T>
class Conv2d {
 public:
  struct Cache {
    RowMatrix<T> columns;  // im2col of the input, (cin * k * k) x (out_h * out_w)
    int in_h = 0;
    int in_w = 0;
  };

  Conv2d() = default;
  Conv2d(ParamLayout& layout, const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1)
      : cin_(in_channels), cout_(out_channels), k_(kernel), stride_(stride), pad_(kernel / 2) {
    const int fan_in = cin_ * k_ * k_;
    weight_ = layout.add(name + ".weight", static_cast<std::size_t>(cout_) * fan_in, fan_in, Init::Uniform);
    bias_ = layout.add(name + ".bias", cout_, fan_in, Init::Uniform);
  }

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

  Tensor<T> forward(std::span<const T> p, const Tensor<T>& x, Cache& cache) const {
    if (x.channels != cin_) throw ContractError("Conv2d: expected " + std::to_string(cin_) + " input channels");
    const int oh = (x.height + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.width + 2 * pad_ - k_) / stride_ + 1;
    cache.in_h = x.height;
    cache.in_w = x.width;
    im2col(x, oh, ow, cache.columns);
    Tensor<T> y(cout_, oh, ow);
    auto ym = y.matrix();
    ym.noalias() = weights(p) * cache.columns;
    ym.colwise() += ConstVectorMap<T>(p.data() + bias_, cout_);
    return y;
  }

  Tensor<T> backward(std::span<const T> p, std::span<T> g, const Cache& cache, const Tensor<T>& dy) const {
    const auto dym = dy.matrix();
    MatrixMap<T>(g.data() + weight_, cout_, cin_ * k_ * k_).noalias() += dym * cache.columns.transpose();
    const int plane = dy.plane();
    for (int c = 0; c < cout_; ++c) {
      const T* row = dy.data.data() + static_cast<std::size_t>(c) * plane;
      T acc = 0;
      for (int k = 0; k < plane; ++k) acc += row[k];
      g[bias_ + c] += acc;
    }
    const RowMatrix<T> dcol = weights(p).transpose() * dym;
    Tensor<T> dx(cin_, cache.in_h, cache.in_w);
    col2im(dcol, dy.height, dy.width, dx);
    return dx;
  }

 private:
  ConstMatrixMap<T> weights(std::span<const T> p) const {
    return ConstMatrixMap<T>(p.data() + weight_, cout_, cin_ * k_ * k_);
  }

  void im2col(const Tensor<T>& x, int oh, int ow, RowMatrix<T>& col) const {
    col.resize(static_cast<Eigen::Index>(cin_) * k_ * k_, static_cast<Eigen::Index>(oh) * ow);
    if (k_ == 1 && stride_ == 1) {
      col = x.matrix();
      return;
    }
    for (int c = 0; c < cin_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = col.data() + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              const bool inside = iy >= 0 && iy < x.height && ix >= 0 && ix < x.width;
              row[oy * ow + ox] = inside ? x.at(c, iy, ix) : T(0);
            }
          }
        }
      }
    }
  }

  void col2im(const RowMatrix<T>& dcol, int oh, int ow, Tensor<T>& dx) const {
    if (k_ == 1 && stride_ == 1) {
      dx.matrix() = dcol;
      return;
    }
    for (int c = 0; c < cin_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = dcol.data() + (static_cast<std::size_t>(c) * k_ * k_ + ky * k_ + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= dx.height) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < dx.width) dx.at(c, iy, ix) += row[oy * ow + ox];
            }
          }
        }
      }
    }
  }

  int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  std::size_t weight_ = 0, bias_ = 0;
};

// Largest group count <= min(32, C / 4) that divides C.
inline int group_count(int channels) {
  int g = std::max(1, std::min(32, channels / 4));
  while (channels % g != 0) --g;
  return g;
}

template <typename T>
class GroupNorm {
 public:
  struct Cache {
    Tensor<T> normalized;
    std::vector<T> inv_std;
  };

  GroupNorm() = default;
  GroupNorm(ParamLayout& layout, const std::string& name, int channels)
      : channels_(channels), groups_(group_count(channels)) {
    gain_ = layout.add(name + ".gain", channels_, 1, Init::Ones);
    shift_ = layout.add(name + ".shift", channels_, 1, Init::Zeros);
  }

  Tensor<T> forward(std::span<const T> p, const Tensor<T>& x, Cache& cache) const {
    if (x.channels != channels_) throw ContractError("GroupNorm: channel mismatch");
    const int per = channels_ / groups_;
    const std::size_t n = static_cast<std::size_t>(per) * x.plane();
    cache.normalized = Tensor<T>(x.channels, x.height, x.width);
    cache.inv_std.assign(groups_, T(0));
    Tensor<T> y(x.channels, x.height, x.width);
    for (int g = 0; g < groups_; ++g) {
      const T* src = x.data.data() + g * n;
      T mean = std::accumulate(src, src + n, T(0)) / static_cast<T>(n);
      T var = 0;
      for (std::size_t k = 0; k < n; ++k) var += (src[k] - mean) * (src[k] - mean);
      var /= static_cast<T>(n);
      const T inv = T(1) / std::sqrt(var + T(kEps));
      cache.inv_std[g] = inv;
      T* xh = cache.normalized.data.data() + g * n;
      T* dst = y.data.data() + g * n;
      for (int c = 0; c < per; ++c) {
        const T gain = p[gain_ + g * per + c];
        const T shift = p[shift_ + g * per + c];
        for (int k = 0; k < x.plane(); ++k) {
          const std::size_t idx = static_cast<std::size_t>(c) * x.plane() + k;
          xh[idx] = (src[idx] - mean) * inv;
          dst[idx] = gain * xh[idx] + shift;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(std::span<const T> p, std::span<T> g, const Cache& cache, const Tensor<T>& dy) const {
    const int per = channels_ / groups_;
    const int plane = dy.plane();
    const std::size_t n = static_cast<std::size_t>(per) * plane;
    Tensor<T> dx(dy.channels, dy.height, dy.width);
    std::vector<T> dxh(n);
    for (int grp = 0; grp < groups_; ++grp) {
      const T* xh = cache.normalized.data.data() + grp * n;
      const T* d = dy.data.data() + grp * n;
      T sum_d = 0, sum_dx = 0;
      for (int c = 0; c < per; ++c) {
        const int ch = grp * per + c;
        T dgain = 0, dshift = 0;
        for (int k = 0; k < plane; ++k) {
          const std::size_t idx = static_cast<std::size_t>(c) * plane + k;
          dgain += d[idx] * xh[idx];
          dshift += d[idx];
          dxh[idx] = d[idx] * p[gain_ + ch];
          sum_d += dxh[idx];
          sum_dx += dxh[idx] * xh[idx];
        }
        g[gain_ + ch] += dgain;
        g[shift_ + ch] += dshift;
      }
      const T mean_d = sum_d / static_cast<T>(n);
      const T mean_dx = sum_dx / static_cast<T>(n);
      T* out = dx.data.data() + grp * n;
      for (std::size_t k = 0; k < n; ++k) out[k] = cache.inv_std[grp] * (dxh[k] - mean_d - xh[k] * mean_dx);
    }
    return dx;
  }

 private:
  static constexpr double kEps = 1e-5;
  int channels_ = 0, groups_ = 1;
  std::size_t gain_ = 0, shift_ = 0;
};

template <typename T>
std::vector<T> silu(std::span<const T> x) {
  std::vector<T> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] * sigmoid(x[k]);
  return y;
}

// dL/dx given the pre-activation x and dL/dy.
template <typename T>
std::vector<T> silu_backward(std::span<const T> x, std::span<const T> dy) {
  std::vector<T> dx(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T s = sigmoid(x[k]);
    dx[k] = dy[k] * s * (T(1) + x[k] * (T(1) - s));
  }
  return dx;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  Tensor<T> y(x.channels, x.height, x.width);
  y.data = silu<T>(std::span<const T>(x.data));
  return y;
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.channels, x.height, x.width);
  dx.data = silu_backward<T>(std::span<const T>(x.data), std::span<const T>(dy.data));
  return dx;
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamLayout& layout, const std::string& name, int in, int out) : in_(in), out_(out) {
    weight_ = layout.add(name + ".weight", static_cast<std::size_t>(in) * out, in, Init::Uniform);
    bias_ = layout.add(name + ".bias", out, in, Init::Uniform);
  }

  std::vector<T> forward(std::span<const T> p, std::span<const T> x) const {
    if (static_cast<int>(x.size()) != in_) throw ContractError("Linear: input size mismatch");
    std::vector<T> y(out_);
    for (int o = 0; o < out_; ++o) {
      const T* w = p.data() + weight_ + static_cast<std::size_t>(o) * in_;
      T acc = p[bias_ + o];
      for (int i = 0; i < in_; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
    return y;
  }

  std::vector<T> backward(std::span<const T> p, std::span<T> g, std::span<const T> x, std::span<const T> dy) const {
    const ConstVectorMap<T> d(dy.data(), out_);
    MatrixMap<T>(g.data() + weight_, out_, in_).noalias() += d * ConstVectorMap<T>(x.data(), in_).transpose();
    VectorMap<T>(g.data() + bias_, out_) += d;
    std::vector<T> dx(in_, T(0));
    for (int o = 0; o < out_; ++o) {
      const T* w = p.data() + weight_ + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) dx[i] += w[i] * dy[o];
    }
    return dx;
  }

 private:
  int in_ = 0, out_ = 0;
  std::size_t weight_ = 0, bias_ = 0;
};

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x) {
  Tensor<T> y(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c)
    for (int yy = 0; yy < y.height; ++yy)
      for (int xx = 0; xx < y.width; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.channels, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels; ++c)
    for (int yy = 0; yy < dy.height; ++yy)
      for (int xx = 0; xx < dy.width; ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height != b.height || a.width != b.width) throw ContractError("concat: spatial mismatch");
  Tensor<T> y(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, int first) {
  Tensor<T> a(first, y.height, y.width), b(y.channels - first, y.height, y.width);
  std::copy(y.data.begin(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()), a.data.begin());
  std::copy(y.data.begin() + static_cast<std::ptrdiff_t>(a.size()), y.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (!dst.same_shape(src)) throw ContractError("add: shape mismatch");
  for (std::size_t k = 0; k < dst.size(); ++k) dst.data[k] += src.data[k];
}

}  // namespace sfdiff::nn
