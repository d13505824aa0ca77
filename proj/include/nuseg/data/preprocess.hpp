#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "nuseg/core/tensor.hpp"
#include "nuseg/data/image.hpp"

namespace nuseg {

inline constexpr int64_t kFullFrameWidth = 1920;
inline constexpr int64_t kFullFrameHeight = 1080;
inline constexpr int64_t kCropWidth = 1280;
inline constexpr int64_t kCropHeight = 1024;
inline constexpr int64_t kCropX = 320;  // (1920-1280)/2
inline constexpr int64_t kCropY = 28;   // (1080-1024)/2

/// Cuts the black canvas off a 1920x1080 frame: the 1280x1024 window at
/// (x=320, y=28). Already-cropped inputs pass through unchanged; anything
/// else is an error. Images and masks go through the identical transform.
inline ImageU8 crop_canvas(const ImageU8& src) {
  if (src.height == kCropHeight && src.width == kCropWidth) return src;
  if (src.height != kFullFrameHeight || src.width != kFullFrameWidth)
    throw std::invalid_argument("crop_canvas: unsupported input size " +
                                std::to_string(src.width) + "x" + std::to_string(src.height) +
                                " (expected 1920x1080 or already-cropped 1280x1024)");
  ImageU8 out(kCropHeight, kCropWidth, src.channels);
  for (int64_t y = 0; y < kCropHeight; ++y)
    for (int64_t x = 0; x < kCropWidth; ++x)
      for (int64_t c = 0; c < src.channels; ++c)
        out.at(y, x, c) = src.at(y + kCropY, x + kCropX, c);
  return out;
}

/// crop_canvas for full frames, identity for anything else (desk-scale data
/// is generated at its native size).
inline ImageU8 maybe_crop_canvas(const ImageU8& src) {
  if (src.height == kFullFrameHeight && src.width == kFullFrameWidth) return crop_canvas(src);
  return src;
}

/// Per-channel statistics, computed from training images only. Division by
/// std is off by default: the protocol subtracts the channel mean.
struct ChannelStats {
  std::array<double, 3> mean = {0.0, 0.0, 0.0};
  std::array<double, 3> std_dev = {1.0, 1.0, 1.0};
  bool divide_by_std = false;
};

class ChannelStatsAccumulator {
 public:
  void add(const ImageU8& img) {
    if (img.channels != 3)
      throw std::invalid_argument("ChannelStatsAccumulator: expected RGB image");
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x)
        for (int64_t c = 0; c < 3; ++c) {
          const double v = img.at(y, x, c) / 255.0;
          sum_[static_cast<size_t>(c)] += v;
          sum_sq_[static_cast<size_t>(c)] += v * v;
        }
    count_ += img.height * img.width;
  }

  ChannelStats finalize(bool divide_by_std = false) const {
    if (count_ == 0) throw std::logic_error("ChannelStatsAccumulator: no pixels accumulated");
    ChannelStats s;
    s.divide_by_std = divide_by_std;
    for (size_t c = 0; c < 3; ++c) {
      s.mean[c] = sum_[c] / static_cast<double>(count_);
      const double var = sum_sq_[c] / static_cast<double>(count_) - s.mean[c] * s.mean[c];
      s.std_dev[c] = var > 0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

 private:
  std::array<double, 3> sum_ = {0, 0, 0};
  std::array<double, 3> sum_sq_ = {0, 0, 0};
  int64_t count_ = 0;
};

/// image/255 - mean (per channel), optionally /std, emitted channel-first.
inline Tensor<float> normalize_image(const ImageU8& img, const ChannelStats& stats) {
  if (img.channels != 3) throw std::invalid_argument("normalize_image: expected RGB image");
  Tensor<float> out({3, img.height, img.width});
  for (int64_t c = 0; c < 3; ++c) {
    const double mean = stats.mean[static_cast<size_t>(c)];
    const double inv = stats.divide_by_std ? 1.0 / stats.std_dev[static_cast<size_t>(c)] : 1.0;
    float* plane = out.data() + c * img.height * img.width;
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x)
        plane[y * img.width + x] = static_cast<float>((img.at(y, x, c) / 255.0 - mean) * inv);
  }
  return out;
}

}  // namespace nuseg
