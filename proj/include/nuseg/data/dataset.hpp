#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nuseg/data/image.hpp"
#include "nuseg/data/labels.hpp"
#include "nuseg/data/preprocess.hpp"
#include "nuseg/loss/task.hpp"

namespace nuseg {

/// Pointer to one frame on disk plus its (optional) ground-truth mask.
struct SampleRef {
  std::string video_id;
  std::string image_id;  // frame file stem
  int frame_index = 0;
  std::string image_path;
  std::string mask_path;  // empty when no ground truth exists
};

struct DatasetIndex {
  TaskKind task = TaskKind::kBinary;
  std::vector<SampleRef> samples;  // ordered by (video_id, image_id)
  std::vector<std::string> video_ids;
  std::map<std::string, int> per_video_counts;
};

/// Indexes the documented layout: <root>/<video>/frames/*.png with masks at
/// <root>/<video>/ground_truth/<task>/<same name>.png. A frame without a
/// mask is an error when masks are required (training/evaluation) and is
/// carried with an empty mask path in predict-only mode.
inline DatasetIndex load_endovis(const std::string& root, TaskKind task,
                                 bool require_masks = true) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw std::runtime_error("load_endovis: dataset root " + root + " is not a directory");

  DatasetIndex index;
  index.task = task;
  std::vector<std::string> videos;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::is_directory(entry.path() / "frames"))
      videos.push_back(entry.path().filename().string());
  std::sort(videos.begin(), videos.end());
  if (videos.empty())
    throw std::runtime_error("load_endovis: no <video>/frames directories under " + root);

  const std::string task_dir = to_string(task);
  for (const std::string& video : videos) {
    const fs::path frames = fs::path(root) / video / "frames";
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(frames))
      if (entry.is_regular_file() && entry.path().extension() == ".png")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    int frame_index = 0;
    for (const fs::path& file : files) {
      SampleRef ref;
      ref.video_id = video;
      ref.image_id = file.stem().string();
      ref.frame_index = frame_index++;
      ref.image_path = file.string();
      const fs::path mask = fs::path(root) / video / "ground_truth" / task_dir / file.filename();
      if (fs::exists(mask)) {
        ref.mask_path = mask.string();
      } else if (require_masks) {
        throw std::runtime_error("load_endovis: missing mask for frame " + video + "/" +
                                 file.filename().string() + " (expected " + mask.string() + ")");
      }
      index.samples.push_back(std::move(ref));
    }
    index.per_video_counts[video] = frame_index;
    index.video_ids.push_back(video);
  }
  return index;
}

/// View of an index restricted to a video subset (fold training/validation).
inline DatasetIndex filter_videos(const DatasetIndex& index,
                                  const std::vector<std::string>& videos) {
  std::set<std::string> keep(videos.begin(), videos.end());
  DatasetIndex out;
  out.task = index.task;
  for (const SampleRef& s : index.samples)
    if (keep.count(s.video_id)) {
      out.samples.push_back(s);
      out.per_video_counts[s.video_id]++;
    }
  for (const std::string& v : index.video_ids)
    if (keep.count(v)) out.video_ids.push_back(v);
  return out;
}

/// Decoded sample: cropped image plus encoded class mask.
struct LoadedSample {
  ImageU8 image;           // cropped RGB
  Tensor<int32_t> mask;    // [H,W]; undefined when the ref has no mask
  bool has_mask = false;
};

inline LoadedSample load_sample(const SampleRef& ref, const LabelMapping& mapping,
                                bool strict_labels = true) {
  LoadedSample s;
  s.image = maybe_crop_canvas(read_png(ref.image_path));
  if (s.image.channels != 3)
    throw std::runtime_error("load_sample: frame " + ref.image_path + " is not RGB");
  if (!ref.mask_path.empty()) {
    ImageU8 raw = maybe_crop_canvas(read_png(ref.mask_path));
    if (raw.height != s.image.height || raw.width != s.image.width)
      throw std::runtime_error("load_sample: image/mask size mismatch for " + ref.image_path);
    s.mask = encode_mask(raw, mapping, strict_labels);
    s.has_mask = true;
  }
  return s;
}

}  // namespace nuseg
