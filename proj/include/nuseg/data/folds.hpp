#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nuseg/core/rng.hpp"

namespace nuseg {

/// One fold view of a by-video split: never splits a video across sides.
struct FoldSplit {
  int k = 0;
  int fold_index = 0;
  std::vector<std::string> train_videos;
  std::vector<std::string> val_videos;
  std::map<std::string, int> assignments;  // video -> fold (shared across views)
};

/// Deterministic k-fold partition of videos: a seeded shuffle dealt
/// round-robin, so fold sizes differ by at most one. Fold i's validation set
/// is its own videos, the training set everything else.
inline std::vector<FoldSplit> kfold_split(std::vector<std::string> video_ids, int k,
                                          uint64_t seed) {
  if (k < 2)
    throw std::invalid_argument("kfold_split: k=" + std::to_string(k) +
                                " leaves an empty validation or training side (need k >= 2)");
  if (k > static_cast<int>(video_ids.size()))
    throw std::invalid_argument("kfold_split: k=" + std::to_string(k) + " exceeds the " +
                                std::to_string(video_ids.size()) + " available videos");
  {
    std::set<std::string> unique(video_ids.begin(), video_ids.end());
    if (unique.size() != video_ids.size())
      throw std::invalid_argument("kfold_split: duplicate video ids");
  }

  std::sort(video_ids.begin(), video_ids.end());  // seed alone decides the deal
  Rng rng(seed);
  for (int64_t i = static_cast<int64_t>(video_ids.size()) - 1; i > 0; --i)
    std::swap(video_ids[static_cast<size_t>(i)],
              video_ids[static_cast<size_t>(rng.uniform_int(0, i))]);

  std::map<std::string, int> assignments;
  for (size_t i = 0; i < video_ids.size(); ++i)
    assignments[video_ids[i]] = static_cast<int>(i % static_cast<size_t>(k));

  std::vector<FoldSplit> folds(static_cast<size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldSplit& fold = folds[static_cast<size_t>(f)];
    fold.k = k;
    fold.fold_index = f;
    fold.assignments = assignments;
    for (const auto& [video, fi] : assignments)
      (fi == f ? fold.val_videos : fold.train_videos).push_back(video);
  }
  return folds;
}

/// Split with every video on the training side and validation mirroring it;
/// used for desk-scale overfit runs (fold index -1 in the CLI).
inline FoldSplit trainval_identity_split(std::vector<std::string> video_ids) {
  if (video_ids.empty()) throw std::invalid_argument("identity split: no videos");
  std::sort(video_ids.begin(), video_ids.end());
  FoldSplit fold;
  fold.k = 1;
  fold.fold_index = -1;
  fold.train_videos = video_ids;
  fold.val_videos = std::move(video_ids);
  return fold;
}

}  // namespace nuseg
