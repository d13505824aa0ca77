#pragma once

#include <cstdint>
#include <stdexcept>

#include "nuseg/core/tensor.hpp"
#include "nuseg/loss/task.hpp"

namespace nuseg {

/// Per-class pixel confusion for one image.
struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
};

inline ConfusionCounts confusion_counts(const Tensor<int32_t>& pred, const Tensor<int32_t>& gt,
                                        int32_t class_id) {
  check_same_shape(pred, gt, "confusion_counts");
  ConfusionCounts c;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool p = pred[i] == class_id;
    const bool g = gt[i] == class_id;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
  }
  return c;
}

namespace detail {

enum class OverlapMetric { kIou, kDice };

inline double per_image_metric(const Tensor<int32_t>& pred, const Tensor<int32_t>& gt,
                               const TaskSpec& task, OverlapMetric which) {
  check_same_shape(pred, gt, "segmentation metric");
  if (pred.numel() == 0) throw std::invalid_argument("segmentation metric: empty image");
  double sum = 0.0;
  int used = 0;
  for (int c : task.evaluated_classes()) {
    const ConfusionCounts cc = confusion_counts(pred, gt, c);
    const int64_t support = cc.tp + cc.fp + cc.fn;
    if (support == 0) continue;  // class absent from both masks: skipped
    if (which == OverlapMetric::kIou)
      sum += static_cast<double>(cc.tp) / static_cast<double>(support);
    else
      sum += static_cast<double>(2 * cc.tp) / static_cast<double>(cc.tp + support);
    ++used;
  }
  // Every class skipped means a correct all-background frame: score 1.
  return used == 0 ? 1.0 : sum / used;
}

}  // namespace detail

/// Mean per-class intersection-over-union, tp/(tp+fp+fn), over foreground
/// classes present in either mask.
inline double iou_metric(const Tensor<int32_t>& pred, const Tensor<int32_t>& gt,
                         const TaskSpec& task) {
  return detail::per_image_metric(pred, gt, task, detail::OverlapMetric::kIou);
}

/// Mean per-class Dice, 2tp/(2tp+fp+fn); per class Dice = 2*IoU/(1+IoU).
inline double dice_metric(const Tensor<int32_t>& pred, const Tensor<int32_t>& gt,
                          const TaskSpec& task) {
  return detail::per_image_metric(pred, gt, task, detail::OverlapMetric::kDice);
}

}  // namespace nuseg
