#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "nuseg/core/rng.hpp"
#include "nuseg/data/image.hpp"
#include "nuseg/loss/task.hpp"

namespace nuseg {

/// Desk-scale synthetic dataset: textured tissue-like background with 1-3
/// elongated instruments (shaft + wrist + clasper prongs), masks written with
/// the real label values so the whole downstream pipeline is format-agnostic.
struct SynthSpec {
  int num_images = 8;
  int num_videos = 2;
  int64_t height = 256;
  int64_t width = 320;
  int min_instruments = 1;
  int max_instruments = 3;
  uint64_t seed = 7;
  TaskKind task = TaskKind::kBinary;
  bool include_probe = false;  // adds raw value 40 blobs

  void validate() const {
    if (height % 32 != 0 || width % 32 != 0)
      throw std::invalid_argument("SynthSpec: height and width must be divisible by 32");
    if (num_images < 1 || num_videos < 1 || num_videos > num_images)
      throw std::invalid_argument("SynthSpec: need num_images >= num_videos >= 1");
    if (min_instruments < 0 || max_instruments < min_instruments)
      throw std::invalid_argument("SynthSpec: bad instruments_per_image range");
  }
};

struct SynthSample {
  std::string video_id;
  std::string image_id;
  ImageU8 image;     // RGB
  ImageU8 raw_mask;  // dataset label values
};

namespace detail {

struct Vec2 {
  double x, y;
};

inline double segment_distance(double px, double py, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

/// Rasterizes a thick segment: writes `value` into the mask and shades the
/// image with a cylindrical highlight.
inline void draw_segment(ImageU8& image, ImageU8& mask, Vec2 a, Vec2 b, double half_width,
                         uint8_t value, double base_gray, Rng& rng) {
  const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a.y, b.y) - half_width - 1)));
  const int64_t y_hi = std::min<int64_t>(image.height - 1, static_cast<int64_t>(std::ceil(std::max(a.y, b.y) + half_width + 1)));
  const int64_t x_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a.x, b.x) - half_width - 1)));
  const int64_t x_hi = std::min<int64_t>(image.width - 1, static_cast<int64_t>(std::ceil(std::max(a.x, b.x) + half_width + 1)));
  for (int64_t y = y_lo; y <= y_hi; ++y)
    for (int64_t x = x_lo; x <= x_hi; ++x) {
      const double d = segment_distance(static_cast<double>(x), static_cast<double>(y), a, b);
      if (d > half_width) continue;
      mask.at(y, x) = value;
      const double lateral = d / half_width;
      const double shade = base_gray * (0.72 + 0.38 * (1.0 - lateral * lateral));
      const double noise = rng.uniform(-5.0, 5.0);
      const double v = std::clamp(shade * 255.0 + noise, 0.0, 255.0);
      image.at(y, x, 0) = static_cast<uint8_t>(v);
      image.at(y, x, 1) = static_cast<uint8_t>(std::clamp(v * 1.01, 0.0, 255.0));
      image.at(y, x, 2) = static_cast<uint8_t>(std::clamp(v * 1.05, 0.0, 255.0));
    }
}

inline void draw_blob(ImageU8& image, ImageU8& mask, Vec2 c, double radius, uint8_t value,
                      Rng& rng) {
  const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(c.y - radius - 1));
  const int64_t y_hi = std::min<int64_t>(image.height - 1, static_cast<int64_t>(c.y + radius + 1));
  const int64_t x_lo = std::max<int64_t>(0, static_cast<int64_t>(c.x - radius - 1));
  const int64_t x_hi = std::min<int64_t>(image.width - 1, static_cast<int64_t>(c.x + radius + 1));
  for (int64_t y = y_lo; y <= y_hi; ++y)
    for (int64_t x = x_lo; x <= x_hi; ++x) {
      const double dx = x - c.x, dy = y - c.y;
      if (dx * dx + dy * dy > radius * radius) continue;
      mask.at(y, x) = value;
      const double v = std::clamp(215.0 + rng.uniform(-8.0, 8.0), 0.0, 255.0);
      image.at(y, x, 0) = static_cast<uint8_t>(v);
      image.at(y, x, 1) = static_cast<uint8_t>(v * 0.97);
      image.at(y, x, 2) = static_cast<uint8_t>(v * 0.93);
    }
}

inline int64_t count_nonzero(const ImageU8& mask) {
  int64_t n = 0;
  for (uint8_t v : mask.pixels) n += v != 0;
  return n;
}

inline void render_sample(const SynthSpec& spec, Rng& rng, ImageU8& image, ImageU8& mask) {
  const int64_t h = spec.height, w = spec.width;
  image = ImageU8(h, w, 3);
  mask = ImageU8(h, w, 1);

  // Tissue background: warm base, two low-frequency waves, speckle.
  const double base_r = rng.uniform(0.52, 0.64);
  const double base_g = rng.uniform(0.18, 0.28);
  const double base_b = rng.uniform(0.22, 0.32);
  const double fx1 = rng.uniform(0.5, 2.0), fy1 = rng.uniform(0.5, 2.0);
  const double fx2 = rng.uniform(2.0, 5.0), fy2 = rng.uniform(2.0, 5.0);
  const double ph1 = rng.uniform(0.0, 6.283), ph2 = rng.uniform(0.0, 6.283);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / static_cast<double>(w);
      const double v = static_cast<double>(y) / static_cast<double>(h);
      const double wave = 0.05 * std::sin(6.283 * (fx1 * u + fy1 * v) + ph1) +
                          0.03 * std::sin(6.283 * (fx2 * u - fy2 * v) + ph2);
      const double speckle = rng.uniform(-0.025, 0.025);
      auto put = [&](int64_t c, double base) {
        image.at(y, x, c) =
            static_cast<uint8_t>(std::clamp((base + wave + speckle) * 255.0, 0.0, 255.0));
      };
      put(0, base_r);
      put(1, base_g);
      put(2, base_b);
    }

  const double scale = static_cast<double>(std::min(h, w)) / 256.0;
  const int instruments =
      static_cast<int>(rng.uniform_int(spec.min_instruments, spec.max_instruments));
  for (int i = 0; i < instruments; ++i) {
    const uint8_t shaft_v = spec.task == TaskKind::kType ? static_cast<uint8_t>(rng.uniform_int(1, 7)) : 10;
    const uint8_t wrist_v = spec.task == TaskKind::kType ? shaft_v : 20;
    const uint8_t clasp_v = spec.task == TaskKind::kType ? shaft_v : 30;

    const Vec2 tip{rng.uniform(0.25, 0.75) * static_cast<double>(w),
                   rng.uniform(0.25, 0.75) * static_cast<double>(h)};
    const double angle = rng.uniform(0.0, 6.283185307);
    const Vec2 u{std::cos(angle), std::sin(angle)};  // tip -> border
    const double clasper_len = rng.uniform(16.0, 26.0) * scale;
    const double wrist_len = rng.uniform(14.0, 22.0) * scale;
    const double shaft_half = rng.uniform(5.0, 8.0) * scale;
    const double diag = std::sqrt(static_cast<double>(h * h + w * w));

    const Vec2 wrist_start{tip.x + u.x * clasper_len, tip.y + u.y * clasper_len};
    const Vec2 shaft_start{wrist_start.x + u.x * wrist_len, wrist_start.y + u.y * wrist_len};
    const Vec2 shaft_end{shaft_start.x + u.x * diag, shaft_start.y + u.y * diag};
    draw_segment(image, mask, shaft_start, shaft_end, shaft_half, shaft_v, 0.74, rng);
    draw_segment(image, mask, wrist_start, shaft_start, shaft_half * 1.25, wrist_v, 0.64, rng);
    const double spread = rng.uniform(0.15, 0.32);
    for (double s : {spread, -spread}) {
      const Vec2 prong{u.x * std::cos(s) - u.y * std::sin(s),
                       u.x * std::sin(s) + u.y * std::cos(s)};
      const Vec2 end{wrist_start.x - prong.x * clasper_len, wrist_start.y - prong.y * clasper_len};
      draw_segment(image, mask, wrist_start, end, shaft_half * 0.45, clasp_v, 0.55, rng);
    }
  }

  if (spec.include_probe && spec.task != TaskKind::kType) {
    const Vec2 c{rng.uniform(0.15, 0.85) * static_cast<double>(w),
                 rng.uniform(0.15, 0.85) * static_cast<double>(h)};
    draw_blob(image, mask, c, rng.uniform(12.0, 20.0) * scale, 40, rng);
  }

  if (spec.min_instruments >= 1 && count_nonzero(mask) == 0)
    throw std::logic_error("render_sample: generated an empty mask");  // unreachable by construction
}

}  // namespace detail

inline std::vector<SynthSample> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthSample> out;
  out.reserve(static_cast<size_t>(spec.num_images));
  const int per_video = (spec.num_images + spec.num_videos - 1) / spec.num_videos;
  for (int i = 0; i < spec.num_images; ++i) {
    const int video = i / per_video;
    const int frame = i % per_video;
    SynthSample s;
    char vbuf[32], fbuf[32];
    std::snprintf(vbuf, sizeof(vbuf), "video%02d", video);
    std::snprintf(fbuf, sizeof(fbuf), "frame%03d", frame);
    s.video_id = vbuf;
    s.image_id = fbuf;
    Rng rng(Rng::mix(spec.seed, static_cast<uint64_t>(video), static_cast<uint64_t>(frame)));
    detail::render_sample(spec, rng, s.image, s.raw_mask);
    out.push_back(std::move(s));
  }
  return out;
}

/// Writes the dataset in the documented on-disk layout:
/// <out>/<video>/frames/<frame>.png and <out>/<video>/ground_truth/<task>/.
inline void write_synthetic_dataset(const SynthSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const std::string task_dir = to_string(spec.task);
  for (const SynthSample& s : generate_synthetic(spec)) {
    const fs::path video = fs::path(out_dir) / s.video_id;
    fs::create_directories(video / "frames");
    fs::create_directories(video / "ground_truth" / task_dir);
    write_png((video / "frames" / (s.image_id + ".png")).string(), s.image);
    write_png((video / "ground_truth" / task_dir / (s.image_id + ".png")).string(), s.raw_mask);
  }
}

}  // namespace nuseg
