#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nuseg/core/tensor.hpp"
#include "nuseg/data/image.hpp"
#include "nuseg/loss/task.hpp"

namespace nuseg {

/// Raw dataset label values <-> contiguous class indices for one task.
/// Binary collapses every nonzero raw value to class 1. The parts default
/// folds raw 40 (probe/other) into background; the dataset release notes can
/// override the table.
struct LabelMapping {
  TaskKind task = TaskKind::kBinary;
  bool binary_collapse = false;
  std::map<uint8_t, int32_t> raw_to_class;
  std::map<int32_t, uint8_t> class_to_raw;  // canonical raw value per class
  std::vector<std::string> class_names;
};

inline LabelMapping default_label_mapping(TaskKind task) {
  LabelMapping m;
  m.task = task;
  switch (task) {
    case TaskKind::kBinary:
      m.binary_collapse = true;
      m.class_to_raw = {{0, 0}, {1, 255}};
      m.class_names = {"background", "instrument"};
      break;
    case TaskKind::kParts:
      m.raw_to_class = {{0, 0}, {10, 1}, {20, 2}, {30, 3}, {40, 0}};
      m.class_to_raw = {{0, 0}, {1, 10}, {2, 20}, {3, 30}};
      m.class_names = {"background", "shaft", "wrist", "clasper"};
      break;
    case TaskKind::kType:
      for (int v = 0; v <= 7; ++v) {
        m.raw_to_class[static_cast<uint8_t>(v)] = v;
        m.class_to_raw[v] = static_cast<uint8_t>(v);
      }
      m.class_names = {"background", "type_1", "type_2", "type_3",
                       "type_4",     "type_5", "type_6", "type_7"};
      break;
  }
  return m;
}

/// Raw mask -> class-index mask. Unknown raw values are an error under
/// strict mode and are routed to background (counted) otherwise.
inline Tensor<int32_t> encode_mask(const ImageU8& raw, const LabelMapping& mapping,
                                   bool strict = true, int64_t* unknown_count = nullptr) {
  if (raw.channels != 1) throw std::invalid_argument("encode_mask: expected single-channel mask");
  Tensor<int32_t> out({raw.height, raw.width});
  int64_t unknown = 0;
  for (int64_t y = 0; y < raw.height; ++y)
    for (int64_t x = 0; x < raw.width; ++x) {
      const uint8_t v = raw.at(y, x);
      int32_t cls;
      if (mapping.binary_collapse) {
        cls = v != 0 ? 1 : 0;
      } else {
        auto it = mapping.raw_to_class.find(v);
        if (it == mapping.raw_to_class.end()) {
          if (strict)
            throw std::invalid_argument("encode_mask: unknown raw label value " +
                                        std::to_string(static_cast<int>(v)));
          ++unknown;
          cls = 0;
        } else {
          cls = it->second;
        }
      }
      out.at(y, x) = cls;
    }
  if (unknown_count) *unknown_count = unknown;
  return out;
}

/// Class-index mask -> raw label values (round-trippable through encode_mask).
inline ImageU8 mask_to_raw(const Tensor<int32_t>& mask, const LabelMapping& mapping) {
  if (mask.ndim() != 2) throw std::invalid_argument("mask_to_raw: expected [H,W] mask");
  ImageU8 out(mask.dim(0), mask.dim(1), 1);
  for (int64_t y = 0; y < out.height; ++y)
    for (int64_t x = 0; x < out.width; ++x) {
      auto it = mapping.class_to_raw.find(mask.at(y, x));
      if (it == mapping.class_to_raw.end())
        throw std::invalid_argument("mask_to_raw: class " + std::to_string(mask.at(y, x)) +
                                    " has no raw value");
      out.at(y, x) = it->second;
    }
  return out;
}

struct Rgb {
  uint8_t r, g, b;
  bool operator==(const Rgb&) const = default;
};

// Fixed visualization constants: background purple, instrument/clasper
// yellow, wrist green, shaft blue; type classes get eight distinct colors.
inline const std::array<Rgb, 2>& binary_palette() {
  static const std::array<Rgb, 2> p = {{{68, 1, 84}, {253, 231, 37}}};
  return p;
}
inline const std::array<Rgb, 4>& parts_palette() {
  static const std::array<Rgb, 4> p = {
      {{68, 1, 84}, {49, 104, 142}, {53, 183, 121}, {253, 231, 37}}};
  return p;
}
inline const std::array<Rgb, 8>& type_palette() {
  static const std::array<Rgb, 8> p = {{{68, 1, 84},
                                        {253, 231, 37},
                                        {53, 183, 121},
                                        {49, 104, 142},
                                        {255, 127, 14},
                                        {214, 39, 40},
                                        {148, 103, 189},
                                        {140, 86, 75}}};
  return p;
}

inline std::vector<Rgb> palette_for(TaskKind task) {
  switch (task) {
    case TaskKind::kBinary: return {binary_palette().begin(), binary_palette().end()};
    case TaskKind::kParts: return {parts_palette().begin(), parts_palette().end()};
    case TaskKind::kType: return {type_palette().begin(), type_palette().end()};
  }
  return {};
}

inline ImageU8 colorize_mask(const Tensor<int32_t>& mask, const TaskSpec& task) {
  if (mask.ndim() != 2) throw std::invalid_argument("colorize_mask: expected [H,W] mask");
  const std::vector<Rgb> palette = palette_for(task.kind);
  ImageU8 out(mask.dim(0), mask.dim(1), 3);
  for (int64_t y = 0; y < out.height; ++y)
    for (int64_t x = 0; x < out.width; ++x) {
      const int32_t cls = mask.at(y, x);
      if (cls < 0 || cls >= static_cast<int32_t>(palette.size()))
        throw std::invalid_argument("colorize_mask: class id " + std::to_string(cls) +
                                    " outside palette of " + std::to_string(palette.size()));
      const Rgb& c = palette[static_cast<size_t>(cls)];
      out.at(y, x, 0) = c.r;
      out.at(y, x, 1) = c.g;
      out.at(y, x, 2) = c.b;
    }
  return out;
}

/// Exact inverse of colorize_mask (palettes are injective by construction).
inline Tensor<int32_t> decode_colorized_mask(const ImageU8& img, const TaskSpec& task) {
  if (img.channels != 3) throw std::invalid_argument("decode_colorized_mask: expected RGB");
  const std::vector<Rgb> palette = palette_for(task.kind);
  Tensor<int32_t> out({img.height, img.width});
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x) {
      const Rgb c{img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
      int32_t cls = -1;
      for (size_t i = 0; i < palette.size(); ++i)
        if (palette[i] == c) {
          cls = static_cast<int32_t>(i);
          break;
        }
      if (cls < 0)
        throw std::invalid_argument("decode_colorized_mask: color not in the palette at (" +
                                    std::to_string(x) + "," + std::to_string(y) + ")");
      out.at(y, x) = cls;
    }
  return out;
}

}  // namespace nuseg
