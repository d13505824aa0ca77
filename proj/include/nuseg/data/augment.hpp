#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "nuseg/core/rng.hpp"
#include "nuseg/core/tensor.hpp"

namespace nuseg {

/// One augmentation step. The available operations mirror the training
/// protocol: pad-if-needed, random crop, horizontal flip, vertical flip.
struct AugmentStep {
  enum class Kind { kPadIfNeeded, kRandomCrop, kHFlip, kVFlip };
  Kind kind = Kind::kHFlip;
  int64_t h = 0;  // minimum size (pad) or crop size
  int64_t w = 0;
  double p = 0.5;  // flip probability

  static AugmentStep pad_if_needed(int64_t min_h, int64_t min_w) {
    return {Kind::kPadIfNeeded, min_h, min_w, 0.0};
  }
  static AugmentStep random_crop(int64_t h, int64_t w) { return {Kind::kRandomCrop, h, w, 0.0}; }
  static AugmentStep hflip(double p = 0.5) { return {Kind::kHFlip, 0, 0, p}; }
  static AugmentStep vflip(double p = 0.5) { return {Kind::kVFlip, 0, 0, p}; }
};

using AugmentSpec = std::vector<AugmentStep>;

/// Concrete geometry drawn for one sample; replaying it on a mask alone must
/// reproduce the emitted mask exactly.
struct AppliedOp {
  AugmentStep::Kind kind;
  int64_t y0 = 0, x0 = 0;  // crop origin
  int64_t h = 0, w = 0;    // crop or padded size
  bool flip = false;
};

struct AugmentResult {
  Tensor<float> image;   // [3,H,W]
  Tensor<int32_t> mask;  // [H,W]
  std::vector<AppliedOp> record;
};

namespace detail {

inline Tensor<float> pad_image(const Tensor<float>& img, int64_t h, int64_t w) {
  const int64_t c = img.dim(0), ih = img.dim(1), iw = img.dim(2);
  // Fill with the per-channel mean so padding adds no fake structure.
  Tensor<float> out({c, h, w});
  for (int64_t ch = 0; ch < c; ++ch) {
    double mean = 0;
    const float* src = img.data() + ch * ih * iw;
    for (int64_t i = 0; i < ih * iw; ++i) mean += src[i];
    mean /= static_cast<double>(ih * iw);
    float* dst = out.data() + ch * h * w;
    for (int64_t i = 0; i < h * w; ++i) dst[i] = static_cast<float>(mean);
    for (int64_t y = 0; y < ih; ++y)
      for (int64_t x = 0; x < iw; ++x) dst[y * w + x] = src[y * iw + x];
  }
  return out;
}

inline Tensor<int32_t> pad_mask(const Tensor<int32_t>& mask, int64_t h, int64_t w) {
  Tensor<int32_t> out({h, w});  // zero fill = background class
  for (int64_t y = 0; y < mask.dim(0); ++y)
    for (int64_t x = 0; x < mask.dim(1); ++x) out.at(y, x) = mask.at(y, x);
  return out;
}

template <typename T>
Tensor<T> crop_plane(const Tensor<T>& t, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  if (t.ndim() == 2) {
    Tensor<T> out({h, w});
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) out.at(y, x) = t.at(y0 + y, x0 + x);
    return out;
  }
  Tensor<T> out({t.dim(0), h, w});
  for (int64_t c = 0; c < t.dim(0); ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) out.at(c, y, x) = t.at(c, y0 + y, x0 + x);
  return out;
}

template <typename T>
Tensor<T> flip_axis(const Tensor<T>& t, bool horizontal) {
  Tensor<T> out(t.shape());
  const int64_t c = t.ndim() == 3 ? t.dim(0) : 1;
  const int64_t h = t.dim(t.ndim() - 2), w = t.dim(t.ndim() - 1);
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* src = t.data() + ch * h * w;
    T* dst = out.data() + ch * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const int64_t sy = horizontal ? y : h - 1 - y;
        const int64_t sx = horizontal ? w - 1 - x : x;
        dst[y * w + x] = src[sy * w + sx];
      }
  }
  return out;
}

}  // namespace detail

/// Replays a recorded geometric transform on a mask (nearest-neighbour,
/// exact integers throughout).
inline Tensor<int32_t> apply_recorded(const Tensor<int32_t>& mask,
                                      const std::vector<AppliedOp>& record) {
  Tensor<int32_t> m = mask;
  for (const AppliedOp& op : record) {
    switch (op.kind) {
      case AugmentStep::Kind::kPadIfNeeded:
        m = detail::pad_mask(m, op.h, op.w);
        break;
      case AugmentStep::Kind::kRandomCrop:
        m = detail::crop_plane(m, op.y0, op.x0, op.h, op.w);
        break;
      case AugmentStep::Kind::kHFlip:
        if (op.flip) m = detail::flip_axis(m, true);
        break;
      case AugmentStep::Kind::kVFlip:
        if (op.flip) m = detail::flip_axis(m, false);
        break;
    }
  }
  return m;
}

/// Applies the steps in order. Image and mask receive the identical geometric
/// transform; the same rng state yields the same output.
inline AugmentResult augment(const Tensor<float>& image, const Tensor<int32_t>& mask,
                             const AugmentSpec& spec, Rng& rng) {
  if (image.ndim() != 3 || mask.ndim() != 2 || image.dim(1) != mask.dim(0) ||
      image.dim(2) != mask.dim(1))
    throw std::invalid_argument("augment: expected [3,H,W] image with matching [H,W] mask");
  AugmentResult r{image, mask, {}};
  for (const AugmentStep& step : spec) {
    const int64_t h = r.image.dim(1), w = r.image.dim(2);
    switch (step.kind) {
      case AugmentStep::Kind::kPadIfNeeded: {
        if (h >= step.h && w >= step.w) break;
        const int64_t nh = std::max(h, step.h), nw = std::max(w, step.w);
        r.image = detail::pad_image(r.image, nh, nw);
        r.mask = detail::pad_mask(r.mask, nh, nw);
        r.record.push_back({step.kind, 0, 0, nh, nw, false});
        break;
      }
      case AugmentStep::Kind::kRandomCrop: {
        if (step.h > h || step.w > w)
          throw std::invalid_argument("augment: random_crop " + std::to_string(step.w) + "x" +
                                      std::to_string(step.h) + " larger than input " +
                                      std::to_string(w) + "x" + std::to_string(h));
        const int64_t y0 = rng.uniform_int(0, h - step.h);
        const int64_t x0 = rng.uniform_int(0, w - step.w);
        r.image = detail::crop_plane(r.image, y0, x0, step.h, step.w);
        r.mask = detail::crop_plane(r.mask, y0, x0, step.h, step.w);
        r.record.push_back({step.kind, y0, x0, step.h, step.w, false});
        break;
      }
      case AugmentStep::Kind::kHFlip:
      case AugmentStep::Kind::kVFlip: {
        const bool flip = rng.bernoulli(step.p);
        if (flip) {
          const bool horizontal = step.kind == AugmentStep::Kind::kHFlip;
          r.image = detail::flip_axis(r.image, horizontal);
          r.mask = detail::flip_axis(r.mask, horizontal);
        }
        r.record.push_back({step.kind, 0, 0, 0, 0, flip});
        break;
      }
    }
  }
  return r;
}

}  // namespace nuseg
