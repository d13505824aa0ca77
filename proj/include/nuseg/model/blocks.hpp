#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "nuseg/autograd/conv.hpp"
#include "nuseg/autograd/norm.hpp"
#include "nuseg/autograd/pointwise.hpp"
#include "nuseg/autograd/resample.hpp"
#include "nuseg/core/rng.hpp"
#include "nuseg/model/config.hpp"

namespace nuseg {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Owns every named trainable tensor (and non-trainable buffer) of a model,
/// in registration order. Initialization draws from one seeded stream, so a
/// given (config, seed) pair always produces the same parameters.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t seed) : rng_(seed) {}

  /// Kaiming fan-in normal initialization with the leaky-relu gain.
  Variable<T> conv_weight(const std::string& name, int64_t c_out, int64_t c_in, int64_t kh,
                          int64_t kw, double negative_slope) {
    Tensor<T> w({c_out, c_in, kh, kw});
    const double fan_in = static_cast<double>(c_in * kh * kw);
    const double gain = std::sqrt(2.0 / (1.0 + negative_slope * negative_slope));
    const double stddev = gain / std::sqrt(fan_in);
    for (auto& v : w) v = static_cast<T>(stddev * rng_.normal());
    return add_param(name, std::move(w));
  }

  Variable<T> zeros_param(const std::string& name, std::vector<int64_t> shape) {
    return add_param(name, Tensor<T>::zeros(std::move(shape)));
  }

  Variable<T> ones_param(const std::string& name, std::vector<int64_t> shape) {
    return add_param(name, Tensor<T>::full(std::move(shape), T(1)));
  }

  /// Buffers live in a deque: blocks keep pointers to their entries, so
  /// element addresses must survive later registrations.
  Tensor<T>& add_buffer(const std::string& name, Tensor<T> init) {
    buffers_.emplace_back(name, std::move(init));
    return buffers_.back().second;
  }

  std::vector<std::pair<std::string, Variable<T>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Variable<T>>>& parameters() const { return params_; }
  std::deque<std::pair<std::string, Tensor<T>>>& buffers() { return buffers_; }
  const std::deque<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }

 private:
  Variable<T> add_param(const std::string& name, Tensor<T> init) {
    params_.emplace_back(name, Variable<T>::leaf(std::move(init), true));
    return params_.back().second;
  }

  Rng rng_;
  std::vector<std::pair<std::string, Variable<T>>> params_;
  std::deque<std::pair<std::string, Tensor<T>>> buffers_;
};

/// Plain 3x3 (or 1x1) convolution with bias; the task head uses this bare.
template <typename T>
struct Conv {
  Variable<T> weight, bias;
  int64_t pad = 1, dilation = 1;

  Conv() = default;
  Conv(ParamRegistry<T>& reg, const std::string& prefix, int64_t c_in, int64_t c_out, int64_t k,
       int64_t pad_, int64_t dil, double slope)
      : pad(pad_), dilation(dil) {
    weight = reg.conv_weight(prefix + ".weight", c_out, c_in, k, k, slope);
    bias = reg.zeros_param(prefix + ".bias", {c_out});
  }

  Variable<T> forward(const Variable<T>& x) const { return conv2d(x, weight, bias, pad, dilation); }
};

/// conv -> norm -> leaky relu. The normalization flavour comes from the model
/// config; batch mode owns running-statistics buffers.
template <typename T>
struct ConvUnit {
  Conv<T> conv;
  Variable<T> gamma, beta;
  Tensor<T>* run_mean = nullptr;
  Tensor<T>* run_var = nullptr;
  Normalization norm = Normalization::kInstance;
  T slope = T(0.01);

  ConvUnit() = default;
  ConvUnit(ParamRegistry<T>& reg, const std::string& prefix, int64_t c_in, int64_t c_out,
           Normalization norm_, double slope_)
      : ConvUnit(reg, prefix, c_in, c_out, 1, norm_, slope_) {}
  ConvUnit(ParamRegistry<T>& reg, const std::string& prefix, int64_t c_in, int64_t c_out,
           int64_t dil, Normalization norm_, double slope_)
      : conv(reg, prefix + ".conv", c_in, c_out, 3, dil, dil, slope_),
        norm(norm_),
        slope(static_cast<T>(slope_)) {
    gamma = reg.ones_param(prefix + ".norm.weight", {c_out});
    beta = reg.zeros_param(prefix + ".norm.bias", {c_out});
    if (norm == Normalization::kBatch) {
      run_mean = &reg.add_buffer(prefix + ".norm.running_mean", Tensor<T>::zeros({c_out}));
      run_var = &reg.add_buffer(prefix + ".norm.running_var", Tensor<T>::full({c_out}, T(1)));
    }
  }

  Variable<T> forward(const Variable<T>& x, bool training) const {
    Variable<T> y = conv.forward(x);
    if (norm == Normalization::kInstance) {
      y = instance_norm(y, gamma, beta, static_cast<T>(kNormEps));
    } else {
      y = batch_norm(y, gamma, beta, *run_mean, *run_var, static_cast<T>(kNormEps),
                     static_cast<T>(kBatchNormMomentum), training);
    }
    return leaky_relu(y, slope);
  }
};

/// Residual basic unit: two 3x3 convolutions with an identity shortcut
/// (1x1-projected when the channel count changes).
template <typename T>
struct ResBasicUnit {
  ConvUnit<T> conv1;
  Conv<T> conv2;
  Variable<T> gamma2, beta2;
  Tensor<T>* run_mean2 = nullptr;
  Tensor<T>* run_var2 = nullptr;
  bool projected_shortcut = false;
  Conv<T> shortcut;
  Variable<T> gamma_s, beta_s;
  Tensor<T>* run_mean_s = nullptr;
  Tensor<T>* run_var_s = nullptr;
  Normalization norm = Normalization::kInstance;
  T slope = T(0.01);

  ResBasicUnit() = default;
  ResBasicUnit(ParamRegistry<T>& reg, const std::string& prefix, int64_t c_in, int64_t c_out,
               Normalization norm_, double slope_)
      : conv1(reg, prefix + ".conv1", c_in, c_out, 1, norm_, slope_),
        conv2(reg, prefix + ".conv2", c_out, c_out, 3, 1, 1, slope_),
        norm(norm_),
        slope(static_cast<T>(slope_)) {
    gamma2 = reg.ones_param(prefix + ".norm2.weight", {c_out});
    beta2 = reg.zeros_param(prefix + ".norm2.bias", {c_out});
    if (norm == Normalization::kBatch) {
      run_mean2 = &reg.add_buffer(prefix + ".norm2.running_mean", Tensor<T>::zeros({c_out}));
      run_var2 = &reg.add_buffer(prefix + ".norm2.running_var", Tensor<T>::full({c_out}, T(1)));
    }
    projected_shortcut = c_in != c_out;
    if (projected_shortcut) {
      shortcut = Conv<T>(reg, prefix + ".shortcut", c_in, c_out, 1, 0, 1, slope_);
      gamma_s = reg.ones_param(prefix + ".shortcut_norm.weight", {c_out});
      beta_s = reg.zeros_param(prefix + ".shortcut_norm.bias", {c_out});
      if (norm == Normalization::kBatch) {
        run_mean_s =
            &reg.add_buffer(prefix + ".shortcut_norm.running_mean", Tensor<T>::zeros({c_out}));
        run_var_s =
            &reg.add_buffer(prefix + ".shortcut_norm.running_var", Tensor<T>::full({c_out}, T(1)));
      }
    }
  }

  Variable<T> forward(const Variable<T>& x, bool training) const {
    Variable<T> y = conv1.forward(x, training);
    y = conv2.forward(y);
    y = apply_norm(y, gamma2, beta2, run_mean2, run_var2, training);
    Variable<T> identity = x;
    if (projected_shortcut) {
      identity = shortcut.forward(x);
      identity = apply_norm(identity, gamma_s, beta_s, run_mean_s, run_var_s, training);
    }
    return leaky_relu(add(y, identity), slope);
  }

 private:
  Variable<T> apply_norm(const Variable<T>& x, const Variable<T>& g, const Variable<T>& b,
                         Tensor<T>* rm, Tensor<T>* rv, bool training) const {
    if (norm == Normalization::kInstance) return instance_norm(x, g, b, static_cast<T>(kNormEps));
    return batch_norm(x, g, b, *rm, *rv, static_cast<T>(kNormEps),
                      static_cast<T>(kBatchNormMomentum), training);
  }
};

/// Receptive field of one path of stacked 3x3 convolutions with the given
/// dilation rates: 1 + 2 * sum(rates). A single conv with rate d sees 2d+1.
inline int stacked_dilated_receptive_field(const std::vector<int>& rates) {
  int rf = 1;
  for (int d : rates) rf += 2 * d;
  return rf;
}

namespace detail {

template <typename T>
void require_spatial_room(const Variable<T>& x, int depth, const char* what) {
  const int64_t need = int64_t(1) << (depth - 1);
  if (x.value().dim(2) < need || x.value().dim(3) < need)
    throw std::invalid_argument(std::string(what) + ": spatial size too small for depth " +
                                std::to_string(depth) + ": need >= " + std::to_string(need) +
                                ", got " + std::to_string(x.value().dim(2)) + "x" +
                                std::to_string(x.value().dim(3)));
}

}  // namespace detail

/// U-shaped residual block. `Unit` is the per-level convolutional unit:
/// ConvUnit for the plain residual U-blocks of the decoder, ResBasicUnit for
/// the encoder stages. Levels downsample x2 going in and upsample back with
/// skip concatenation; the projected input is added to the result. Odd sizes
/// pick up one ceil-mode row/column at pooling and are cropped back after
/// upsampling to match the skip tensor.
template <typename T, typename Unit>
struct UBlock {
  RsuConfig cfg;
  ConvUnit<T> proj;
  std::vector<Unit> enc;
  std::vector<Unit> dec;

  UBlock() = default;
  UBlock(ParamRegistry<T>& reg, const std::string& prefix, const RsuConfig& c, Normalization norm)
      : cfg(c) {
    proj = ConvUnit<T>(reg, prefix + ".proj", c.in_channels, c.out_channels, 1, norm,
                       c.negative_slope);
    enc.reserve(static_cast<size_t>(c.depth));
    for (int l = 0; l < c.depth; ++l)
      enc.emplace_back(reg, prefix + ".enc" + std::to_string(l),
                       l == 0 ? c.out_channels : c.mid_channels, c.mid_channels, norm,
                       c.negative_slope);
    dec.reserve(static_cast<size_t>(c.depth - 1));
    for (int j = 0; j < c.depth - 1; ++j) {
      const bool last = j == c.depth - 2;
      dec.emplace_back(reg, prefix + ".dec" + std::to_string(j), 2 * c.mid_channels,
                       last ? c.out_channels : c.mid_channels, norm, c.negative_slope);
    }
  }

  Variable<T> forward(const Variable<T>& x, bool training) const {
    detail::require_spatial_room(x, cfg.depth, "rsu_forward");
    Variable<T> pin = proj.forward(x, training);
    std::vector<Variable<T>> levels;
    levels.reserve(enc.size());
    levels.push_back(enc[0].forward(pin, training));
    for (size_t l = 1; l < enc.size(); ++l)
      levels.push_back(enc[l].forward(maxpool2x(levels.back()), training));
    Variable<T> cur = levels.back();
    for (size_t j = 0; j < dec.size(); ++j) {
      const Variable<T>& skip = levels[levels.size() - 2 - j];
      Variable<T> up = upsample_to(cur, skip.value().dim(2), skip.value().dim(3));
      cur = dec[j].forward(concat_channels(up, skip), training);
    }
    return add(cur, pin);
  }
};

/// Dilated bottleneck block: same U pattern but every level keeps the input
/// resolution, trading pooling for growing dilation rates.
template <typename T>
struct Rsu4fBlock {
  RsuConfig cfg;
  ConvUnit<T> proj;
  std::vector<ConvUnit<T>> enc;
  std::vector<ConvUnit<T>> dec;

  Rsu4fBlock() = default;
  Rsu4fBlock(ParamRegistry<T>& reg, const std::string& prefix, const RsuConfig& c,
             Normalization norm)
      : cfg(c) {
    proj = ConvUnit<T>(reg, prefix + ".proj", c.in_channels, c.out_channels, 1, norm,
                       c.negative_slope);
    for (int l = 0; l < c.depth; ++l)
      enc.emplace_back(reg, prefix + ".enc" + std::to_string(l),
                       l == 0 ? c.out_channels : c.mid_channels, c.mid_channels,
                       c.dilation_rates[static_cast<size_t>(l)], norm, c.negative_slope);
    for (int j = 0; j < c.depth - 1; ++j) {
      const bool last = j == c.depth - 2;
      const int level = c.depth - 2 - j;
      dec.emplace_back(reg, prefix + ".dec" + std::to_string(j), 2 * c.mid_channels,
                       last ? c.out_channels : c.mid_channels,
                       c.dilation_rates[static_cast<size_t>(level)], norm, c.negative_slope);
    }
  }

  Variable<T> forward(const Variable<T>& x, bool training) const {
    Variable<T> pin = proj.forward(x, training);
    std::vector<Variable<T>> levels;
    levels.reserve(enc.size());
    levels.push_back(enc[0].forward(pin, training));
    for (size_t l = 1; l < enc.size(); ++l) levels.push_back(enc[l].forward(levels.back(), training));
    Variable<T> cur = levels.back();
    for (size_t j = 0; j < dec.size(); ++j) {
      const Variable<T>& peer = levels[levels.size() - 2 - j];
      cur = dec[j].forward(concat_channels(cur, peer), training);
    }
    return add(cur, pin);
  }
};

/// Starting encoder unit: a two-level U with a dense skip into the top-row
/// fusion node, all units residual basic blocks.
template <typename T>
struct NestedStartBlock {
  RsuConfig cfg;
  ConvUnit<T> proj;
  ResBasicUnit<T> x00, x10, x01;

  NestedStartBlock() = default;
  NestedStartBlock(ParamRegistry<T>& reg, const std::string& prefix, const RsuConfig& c,
                   Normalization norm)
      : cfg(c),
        proj(reg, prefix + ".proj", c.in_channels, c.out_channels, 1, norm, c.negative_slope),
        x00(reg, prefix + ".x00", c.out_channels, c.mid_channels, norm, c.negative_slope),
        x10(reg, prefix + ".x10", c.mid_channels, c.mid_channels, norm, c.negative_slope),
        x01(reg, prefix + ".x01", 2 * c.mid_channels, c.out_channels, norm, c.negative_slope) {}

  Variable<T> forward(const Variable<T>& x, bool training) const {
    detail::require_spatial_room(x, cfg.depth, "nested_start_forward");
    Variable<T> pin = proj.forward(x, training);
    Variable<T> a = x00.forward(pin, training);
    Variable<T> b = x10.forward(maxpool2x(a), training);
    Variable<T> up = upsample_to(b, a.value().dim(2), a.value().dim(3));
    Variable<T> fused = x01.forward(concat_channels(up, a), training);
    return add(fused, pin);
  }
};

}  // namespace nuseg
