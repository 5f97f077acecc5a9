#pragma once

// U-Net epsilon-predictor: residual blocks with an additive noise-level
// embedding, self-attention at selected resolutions, skip connections by
// channel concatenation.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sfdiff/nn/layers.hpp"

namespace sfdiff {

struct DenoiserSpec {
  int in_channels = 4;  // conditioning channels + noisy target
  int image_size = 32;
  int base_width = 32;
  std::vector<int> channel_mults{1, 2, 4};
  int res_blocks = 2;
  std::vector<int> attention_resolutions{8};
  int embedding_dim = 32;  // sinusoidal features of the noise level
  std::uint64_t param_seed = 0;

  void validate() const;
  friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;
};

inline void DenoiserSpec::validate() const {
  if (in_channels < 1 || base_width < 1 || res_blocks < 1 || channel_mults.empty())
    throw DomainError("denoiser: widths, block counts and levels must be positive");
  if (embedding_dim < 2 || embedding_dim % 2 != 0) throw DomainError("denoiser: embedding_dim must be even and >= 2");
  const int levels = static_cast<int>(channel_mults.size());
  if (image_size % (1 << (levels - 1)) != 0) throw DomainError("denoiser: image size not divisible by the level count");
  for (int m : channel_mults)
    if (m < 1) throw DomainError("denoiser: channel multipliers must be positive");
}

namespace nn {

// Sinusoidal features of 1000 * gamma with geometric frequencies.
template <typename T>
std::vector<T> noise_level_features(double gamma, int dim) {
  const int half = dim / 2;
  std::vector<T> out(dim);
  const double pos = 1000.0 * gamma;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out[i] = static_cast<T>(std::sin(pos * freq));
    out[half + i] = static_cast<T>(std::cos(pos * freq));
  }
  return out;
}

template <typename T>
class ResBlock {
 public:
  struct Cache {
    typename GroupNorm<T>::Cache norm1, norm2;
    Tensor<T> pre_act1, pre_act2;
    typename Conv2d<T>::Cache conv1, conv2, skip;
  };

  ResBlock() = default;
  ResBlock(ParamLayout& layout, const std::string& name, int in, int out, int emb_width)
      : in_(in), out_(out) {
    norm1_ = GroupNorm<T>(layout, name + ".norm1", in);
    conv1_ = Conv2d<T>(layout, name + ".conv1", in, out, 3);
    emb_ = Linear<T>(layout, name + ".emb", emb_width, out);
    norm2_ = GroupNorm<T>(layout, name + ".norm2", out);
    conv2_ = Conv2d<T>(layout, name + ".conv2", out, out, 3);
    if (in != out) skip_ = Conv2d<T>(layout, name + ".skip", in, out, 1);
  }

  Tensor<T> forward(std::span<const T> p, const Tensor<T>& x, std::span<const T> emb, Cache& c) const {
    c.pre_act1 = norm1_.forward(p, x, c.norm1);
    Tensor<T> h = conv1_.forward(p, silu(c.pre_act1), c.conv1);
    const auto shift = emb_.forward(p, emb);
    for (int ch = 0; ch < out_; ++ch)
      for (int k = 0; k < h.plane(); ++k) h.data[static_cast<std::size_t>(ch) * h.plane() + k] += shift[ch];
    c.pre_act2 = norm2_.forward(p, h, c.norm2);
    Tensor<T> out = conv2_.forward(p, silu(c.pre_act2), c.conv2);
    if (skip_) {
      add_inplace(out, skip_->forward(p, x, c.skip));
    } else {
      add_inplace(out, x);
    }
    return out;
  }

  Tensor<T> backward(std::span<const T> p, std::span<T> g, const Cache& c, std::span<const T> emb,
                     const Tensor<T>& dout, std::span<T> demb) const {
    Tensor<T> dh = silu_backward(c.pre_act2, conv2_.backward(p, g, c.conv2, dout));
    dh = norm2_.backward(p, g, c.norm2, dh);
    std::vector<T> dshift(out_, T(0));
    for (int ch = 0; ch < out_; ++ch)
      for (int k = 0; k < dh.plane(); ++k) dshift[ch] += dh.data[static_cast<std::size_t>(ch) * dh.plane() + k];
    const auto de = emb_.backward(p, g, emb, dshift);
    for (std::size_t k = 0; k < de.size(); ++k) demb[k] += de[k];
    Tensor<T> dx = silu_backward(c.pre_act1, conv1_.backward(p, g, c.conv1, dh));
    dx = norm1_.backward(p, g, c.norm1, dx);
    if (skip_) {
      add_inplace(dx, skip_->backward(p, g, c.skip, dout));
    } else {
      add_inplace(dx, dout);
    }
    return dx;
  }

 private:
  int in_ = 0, out_ = 0;
  GroupNorm<T> norm1_, norm2_;
  Conv2d<T> conv1_, conv2_;
  Linear<T> emb_;
  std::optional<Conv2d<T>> skip_;
};

// Single-head spatial self-attention with a residual connection.
template <typename T>
class Attention {
 public:
  struct Cache {
    typename GroupNorm<T>::Cache norm;
    typename Conv2d<T>::Cache qkv, proj;
    RowMatrix<T> q, k, v, weights;
  };

  Attention() = default;
  Attention(ParamLayout& layout, const std::string& name, int channels) : channels_(channels) {
    norm_ = GroupNorm<T>(layout, name + ".norm", channels);
    qkv_ = Conv2d<T>(layout, name + ".qkv", channels, 3 * channels, 1);
    proj_ = Conv2d<T>(layout, name + ".proj", channels, channels, 1);
  }

  Tensor<T> forward(std::span<const T> p, const Tensor<T>& x, Cache& c) const {
    const int n = x.plane();
    const Tensor<T> qkv = qkv_.forward(p, norm_.forward(p, x, c.norm), c.qkv);
    const auto m = qkv.matrix();
    c.q = m.topRows(channels_);
    c.k = m.middleRows(channels_, channels_);
    c.v = m.bottomRows(channels_);
    const T scale = T(1) / std::sqrt(static_cast<T>(channels_));
    c.weights = (c.q.transpose() * c.k) * scale;
    for (int i = 0; i < n; ++i) {
      auto row = c.weights.row(i);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
    Tensor<T> attended(channels_, x.height, x.width);
    attended.matrix().noalias() = c.v * c.weights.transpose();
    Tensor<T> out = proj_.forward(p, attended, c.proj);
    add_inplace(out, x);
    return out;
  }

  Tensor<T> backward(std::span<const T> p, std::span<T> g, const Cache& c, const Tensor<T>& dout) const {
    const Tensor<T> dattended = proj_.backward(p, g, c.proj, dout);
    const auto d_o = dattended.matrix();
    const T scale = T(1) / std::sqrt(static_cast<T>(channels_));
    RowMatrix<T> dweights = d_o.transpose() * c.v;
    const Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (dweights.array() * c.weights.array()).rowwise().sum();
    RowMatrix<T> dscores = c.weights.array() * (dweights.colwise() - inner).array();
    Tensor<T> dqkv(3 * channels_, dout.height, dout.width);
    auto dm = dqkv.matrix();
    dm.topRows(channels_).noalias() = scale * (c.k * dscores.transpose());
    dm.middleRows(channels_, channels_).noalias() = scale * (c.q * dscores);
    dm.bottomRows(channels_).noalias() = d_o * c.weights;
    Tensor<T> dx = norm_.backward(p, g, c.norm, qkv_.backward(p, g, c.qkv, dqkv));
    add_inplace(dx, dout);
    return dx;
  }

 private:
  int channels_ = 0;
  GroupNorm<T> norm_;
  Conv2d<T> qkv_, proj_;
};

template <typename T>
class UNet {
 public:
  struct Cache {
    std::vector<T> features, hidden_pre, emb_pre, emb;
    typename Conv2d<T>::Cache conv_in;
    std::vector<typename ResBlock<T>::Cache> blocks;
    std::vector<typename Attention<T>::Cache> attns;
    std::vector<typename Conv2d<T>::Cache> resamples;
    std::vector<int> skip_channels;
    typename GroupNorm<T>::Cache out_norm;
    Tensor<T> out_pre;
    typename Conv2d<T>::Cache out_conv;
  };

  explicit UNet(DenoiserSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const int b = spec_.base_width;
    const int hidden = 4 * b;
    emb1_ = Linear<T>(layout_, "noise_emb.0", spec_.embedding_dim, hidden);
    emb2_ = Linear<T>(layout_, "noise_emb.1", hidden, hidden);
    conv_in_ = Conv2d<T>(layout_, "conv_in", spec_.in_channels, b, 3);

    const std::set<int> attn_res(spec_.attention_resolutions.begin(), spec_.attention_resolutions.end());
    const int levels = static_cast<int>(spec_.channel_mults.size());
    int ch = b;
    int res = spec_.image_size;
    std::vector<int> level_ch;
    for (int l = 0; l < levels; ++l) {
      Level lvl;
      const int out = b * spec_.channel_mults[l];
      lvl.attend = attn_res.count(res) > 0;
      for (int r = 0; r < spec_.res_blocks; ++r) {
        const std::string name = "down." + std::to_string(l) + "." + std::to_string(r);
        lvl.blocks.emplace_back(layout_, name + ".res", ch, out, hidden);
        ch = out;
        if (lvl.attend) lvl.attns.emplace_back(layout_, name + ".attn", ch);
      }
      level_ch.push_back(ch);
      if (l + 1 < levels) {
        lvl.resample = Conv2d<T>(layout_, "down." + std::to_string(l) + ".downsample", ch, ch, 3, 2);
        res /= 2;
      }
      down_.push_back(std::move(lvl));
    }
    mid_attend_ = attn_res.count(res) > 0;
    mid1_ = ResBlock<T>(layout_, "mid.res1", ch, ch, hidden);
    if (mid_attend_) mid_attn_ = Attention<T>(layout_, "mid.attn", ch);
    mid2_ = ResBlock<T>(layout_, "mid.res2", ch, ch, hidden);
    for (int l = levels - 1; l >= 0; --l) {
      Level lvl;
      const int out = b * spec_.channel_mults[l];
      lvl.attend = attn_res.count(res) > 0;
      for (int r = 0; r < spec_.res_blocks; ++r) {
        const std::string name = "up." + std::to_string(l) + "." + std::to_string(r);
        const int in = r == 0 ? ch + level_ch[l] : ch;
        lvl.blocks.emplace_back(layout_, name + ".res", in, out, hidden);
        ch = out;
        if (lvl.attend) lvl.attns.emplace_back(layout_, name + ".attn", ch);
      }
      if (l > 0) {
        lvl.resample = Conv2d<T>(layout_, "up." + std::to_string(l) + ".upsample", ch, ch, 3);
        res *= 2;
      }
      up_.push_back(std::move(lvl));
    }
    out_norm_ = GroupNorm<T>(layout_, "out.norm", ch);
    out_conv_ = Conv2d<T>(layout_, "out.conv", ch, 1, 3);
  }

  const DenoiserSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_.total(); }
  std::vector<T> initial_parameters() const { return layout_.initialize<T>(spec_.param_seed); }

  Tensor<T> forward(std::span<const T> p, const Tensor<T>& input, double gamma, Cache& c) const {
    if (p.size() != layout_.total()) throw ContractError("UNet: parameter vector has the wrong length");
    if (input.channels != spec_.in_channels || input.height != spec_.image_size || input.width != spec_.image_size)
      throw ContractError("UNet: input must be " + std::to_string(spec_.in_channels) + " x " +
                          std::to_string(spec_.image_size) + " x " + std::to_string(spec_.image_size));
    c = Cache{};
    c.features = noise_level_features<T>(gamma, spec_.embedding_dim);
    c.hidden_pre = emb1_.forward(p, c.features);
    c.emb_pre = emb2_.forward(p, silu<T>(c.hidden_pre));
    c.emb = silu<T>(c.emb_pre);

    Tensor<T> h = conv_in_.forward(p, input, c.conv_in);
    std::vector<Tensor<T>> skips;
    for (const auto& lvl : down_) {
      run_level(p, lvl, h, c);
      skips.push_back(h);
      if (lvl.resample) {
        c.resamples.emplace_back();
        h = lvl.resample->forward(p, h, c.resamples.back());
      }
    }
    c.blocks.emplace_back();
    h = mid1_.forward(p, h, c.emb, c.blocks.back());
    if (mid_attend_) {
      c.attns.emplace_back();
      h = mid_attn_.forward(p, h, c.attns.back());
    }
    c.blocks.emplace_back();
    h = mid2_.forward(p, h, c.emb, c.blocks.back());
    for (const auto& lvl : up_) {
      c.skip_channels.push_back(h.channels);
      h = concat_channels(h, skips.back());
      skips.pop_back();
      run_level(p, lvl, h, c);
      if (lvl.resample) {
        c.resamples.emplace_back();
        h = lvl.resample->forward(p, upsample_nearest(h), c.resamples.back());
      }
    }
    c.out_pre = out_norm_.forward(p, h, c.out_norm);
    return out_conv_.forward(p, silu(c.out_pre), c.out_conv);
  }

  // Accumulates dL/dparams into g for the forward pass recorded in c.
  void backward(std::span<const T> p, std::span<T> g, const Cache& c, const Tensor<T>& dout) const {
    if (g.size() != layout_.total()) throw ContractError("UNet: gradient vector has the wrong length");
    std::vector<T> demb(c.emb.size(), T(0));
    std::size_t block = c.blocks.size();
    std::size_t attn = c.attns.size();
    std::size_t resample = c.resamples.size();
    std::size_t concat = c.skip_channels.size();

    Tensor<T> dh = out_norm_.backward(p, g, c.out_norm, silu_backward(c.out_pre, out_conv_.backward(p, g, c.out_conv, dout)));
    std::vector<Tensor<T>> dskips;
    for (auto it = up_.rbegin(); it != up_.rend(); ++it) {
      const auto& lvl = *it;
      if (lvl.resample) {
        dh = upsample_nearest_backward(lvl.resample->backward(p, g, c.resamples[--resample], dh));
      }
      dh = back_level(p, g, lvl, c, block, attn, dh, demb);
      auto [dmain, dskip] = split_channels(dh, c.skip_channels[--concat]);
      dskips.push_back(std::move(dskip));
      dh = std::move(dmain);
    }
    dh = mid2_.backward(p, g, c.blocks[--block], c.emb, dh, demb);
    if (mid_attend_) dh = mid_attn_.backward(p, g, c.attns[--attn], dh);
    dh = mid1_.backward(p, g, c.blocks[--block], c.emb, dh, demb);
    for (auto it = down_.rbegin(); it != down_.rend(); ++it) {
      const auto& lvl = *it;
      if (lvl.resample) dh = lvl.resample->backward(p, g, c.resamples[--resample], dh);
      add_inplace(dh, dskips.back());
      dskips.pop_back();
      dh = back_level(p, g, lvl, c, block, attn, dh, demb);
    }
    conv_in_.backward(p, g, c.conv_in, dh);

    const auto demb_pre = silu_backward<T>(c.emb_pre, demb);
    const auto hidden_act = silu<T>(c.hidden_pre);
    const auto dhidden = emb2_.backward(p, g, hidden_act, demb_pre);
    emb1_.backward(p, g, c.features, silu_backward<T>(c.hidden_pre, dhidden));
  }

 private:
  struct Level {
    std::vector<ResBlock<T>> blocks;
    std::vector<Attention<T>> attns;
    bool attend = false;
    std::optional<Conv2d<T>> resample;
  };

  void run_level(std::span<const T> p, const Level& lvl, Tensor<T>& h, Cache& c) const {
    for (std::size_t r = 0; r < lvl.blocks.size(); ++r) {
      c.blocks.emplace_back();
      h = lvl.blocks[r].forward(p, h, c.emb, c.blocks.back());
      if (lvl.attend) {
        c.attns.emplace_back();
        h = lvl.attns[r].forward(p, h, c.attns.back());
      }
    }
  }

  Tensor<T> back_level(std::span<const T> p, std::span<T> g, const Level& lvl, const Cache& c, std::size_t& block,
                       std::size_t& attn, Tensor<T> dh, std::span<T> demb) const {
    for (std::size_t r = lvl.blocks.size(); r-- > 0;) {
      if (lvl.attend) dh = lvl.attns[r].backward(p, g, c.attns[--attn], dh);
      dh = lvl.blocks[r].backward(p, g, c.blocks[--block], c.emb, dh, demb);
    }
    return dh;
  }

  DenoiserSpec spec_;
  ParamLayout layout_;
  Linear<T> emb1_, emb2_;
  Conv2d<T> conv_in_;
  std::vector<Level> down_, up_;
  ResBlock<T> mid1_, mid2_;
  Attention<T> mid_attn_;
  bool mid_attend_ = false;
  GroupNorm<T> out_norm_;
  Conv2d<T> out_conv_;
};

}  // namespace nn
}  // namespace sfdiff
