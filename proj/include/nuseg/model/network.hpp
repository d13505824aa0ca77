#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nuseg/model/blocks.hpp"

namespace nuseg {

/// The two-level nested U-structure: a six-level encoder whose levels are
/// themselves U-shaped blocks, a dilated bottleneck at the bottom, four
/// residual U-block decoders fed by skip connections, and a 3x3 head mapping
/// the full-resolution decoder features to per-class logits.
template <typename T>
class Network {
 public:
  Network(ModelConfig cfg, uint64_t seed)
      : cfg_(validate_config(std::move(cfg))), registry_(seed) {
    const Normalization norm = cfg_.normalization;
    enc1_ = NestedStartBlock<T>(registry_, "enc1", cfg_.stage_configs[0], norm);
    for (int i = 1; i <= 4; ++i)
      enc_stages_.emplace_back(registry_, "enc" + std::to_string(i + 1), cfg_.stage_configs[i],
                               norm);
    enc6_ = Rsu4fBlock<T>(registry_, "enc6", cfg_.stage_configs[5], norm);
    for (int d = 0; d < kDecoderBlocks; ++d)
      decoders_.emplace_back(registry_, "dec" + std::to_string(d + 1), cfg_.decoder_configs[d],
                             norm);
    head_ = Conv<T>(registry_, "head", cfg_.head_in_channels, cfg_.num_classes, 3, 1, 1,
                    cfg_.stage_configs[0].negative_slope);
  }

  // Blocks hold pointers into the registry; copies would alias it.
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  bool training() const { return training_; }
  void train(bool on = true) { training_ = on; }
  void eval() { training_ = false; }

  /// Logits [N, num_classes, H, W] at the input resolution. H and W must be
  /// divisible by the configured input divisor.
  Variable<T> forward(const Variable<T>& x) const {
    const Tensor<T>& xv = x.value();
    if (xv.ndim() != 4)
      throw std::invalid_argument("model_forward: expected NCHW input, got " + xv.shape_string());
    if (xv.dim(1) != cfg_.stage_configs[0].in_channels)
      throw std::invalid_argument(
          "model_forward: expected " + std::to_string(cfg_.stage_configs[0].in_channels) +
          " input channels, got " + std::to_string(xv.dim(1)));
    const int64_t div = cfg_.input_divisor;
    if (xv.dim(2) % div != 0)
      throw std::invalid_argument("model_forward: H=" + std::to_string(xv.dim(2)) +
                                  " not divisible by " + std::to_string(div));
    if (xv.dim(3) % div != 0)
      throw std::invalid_argument("model_forward: W=" + std::to_string(xv.dim(3)) +
                                  " not divisible by " + std::to_string(div));

    Variable<T> e1 = enc1_.forward(x, training_);
    Variable<T> e2 = enc_stages_[0].forward(maxpool2x(e1), training_);
    Variable<T> e3 = enc_stages_[1].forward(maxpool2x(e2), training_);
    Variable<T> e4 = enc_stages_[2].forward(maxpool2x(e3), training_);
    Variable<T> e5 = enc_stages_[3].forward(maxpool2x(e4), training_);
    Variable<T> e6 = enc6_.forward(e5, training_);

    // First decoder fuses the two same-scale bottom maps; the rest walk back
    // up, each pairing the upsampled previous output with its encoder skip.
    Variable<T> d = decoders_[0].forward(concat_channels(e6, e5), training_);
    const Variable<T> skips[3] = {e4, e3, e2};
    for (int i = 0; i < 3; ++i) {
      const Variable<T>& skip = skips[i];
      Variable<T> up = upsample_to(d, skip.value().dim(2), skip.value().dim(3));
      d = decoders_[static_cast<size_t>(i + 1)].forward(concat_channels(up, skip), training_);
    }
    Variable<T> full = upsample_to(d, xv.dim(2), xv.dim(3));
    return head_.forward(full);
  }

  /// Inference without graph recording; the mode flag is untouched.
  Tensor<T> forward_inference(const Tensor<T>& x) const {
    NoGradGuard ng;
    return forward(Variable<T>::leaf(x)).value();
  }

  std::vector<std::pair<std::string, Variable<T>>>& parameters() { return registry_.parameters(); }
  const std::vector<std::pair<std::string, Variable<T>>>& parameters() const {
    return registry_.parameters();
  }
  std::deque<std::pair<std::string, Tensor<T>>>& buffers() { return registry_.buffers(); }
  const std::deque<std::pair<std::string, Tensor<T>>>& buffers() const {
    return registry_.buffers();
  }

  std::optional<Variable<T>> find_parameter(const std::string& name) const {
    for (const auto& [n, v] : registry_.parameters())
      if (n == name) return v;
    return std::nullopt;
  }

  /// Total trainable scalar count.
  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, v] : registry_.parameters()) n += v.value().numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : registry_.parameters()) v.zero_grad();
  }

  // Block access for structural tests.
  const NestedStartBlock<T>& start_block() const { return enc1_; }
  const UBlock<T, ResBasicUnit<T>>& encoder_stage(int i) const { return enc_stages_.at(i); }
  const Rsu4fBlock<T>& bottleneck() const { return enc6_; }
  const UBlock<T, ConvUnit<T>>& decoder(int i) const { return decoders_.at(i); }

 private:
  ModelConfig cfg_;
  ParamRegistry<T> registry_;
  NestedStartBlock<T> enc1_;
  std::vector<UBlock<T, ResBasicUnit<T>>> enc_stages_;
  Rsu4fBlock<T> enc6_;
  std::vector<UBlock<T, ConvUnit<T>>> decoders_;
  Conv<T> head_;
  bool training_ = true;
};

}  // namespace nuseg
