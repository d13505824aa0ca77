#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nuseg/autograd/losses.hpp"
#include "nuseg/autograd/pointwise.hpp"
#include "nuseg/loss/task.hpp"

namespace nuseg {

/// Soft Jaccard index over a probability tensor and a matching 0/1 target:
/// (sum(p*m) + eps) / (sum(p) + sum(m) - sum(p*m) + eps). The printed per-pixel
/// form is 0/0 on true-negative pixels; this ratio-of-sums reduces to it
/// wherever it is defined and equals 1 on an exact match, the all-background
/// case included.
template <typename T>
double soft_jaccard(const Tensor<T>& probs, const Tensor<T>& target, const LossConfig& cfg = {}) {
  cfg.validate();
  check_same_shape(probs, target, "soft_jaccard");
  double inter = 0.0, total = 0.0;
  for (int64_t i = 0; i < probs.numel(); ++i) {
    const double p = static_cast<double>(probs[i]);
    if (!std::isfinite(p)) throw std::invalid_argument("soft_jaccard: non-finite probability");
    inter += p * static_cast<double>(target[i]);
    total += p + static_cast<double>(target[i]);
  }
  return (inter + cfg.epsilon) / (total - inter + cfg.epsilon);
}

namespace detail {

template <typename T>
void check_loss_inputs(const Tensor<T>& logits, const Tensor<int32_t>& target,
                       const TaskSpec& task) {
  if (logits.ndim() != 4)
    throw std::invalid_argument("segmentation_loss: expected NCHW logits, got " +
                                logits.shape_string());
  if (logits.dim(1) != task.num_classes)
    throw std::invalid_argument("segmentation_loss: task '" + to_string(task.kind) + "' needs " +
                                std::to_string(task.num_classes) + " logit channels, got " +
                                std::to_string(logits.dim(1)));
  if (target.ndim() != 3 || target.dim(0) != logits.dim(0) || target.dim(1) != logits.dim(2) ||
      target.dim(2) != logits.dim(3))
    throw std::invalid_argument("segmentation_loss: target shape " + target.shape_string() +
                                " does not match logits " + logits.shape_string());
  for (int64_t i = 0; i < logits.numel(); ++i)
    if (!std::isfinite(static_cast<double>(logits[i])))
      throw std::invalid_argument("segmentation_loss: non-finite logit");
  const int32_t limit = task.mask_classes();
  for (int64_t i = 0; i < target.numel(); ++i)
    if (target[i] < 0 || target[i] >= limit)
      throw std::invalid_argument("segmentation_loss: target class " + std::to_string(target[i]) +
                                  " outside [0," + std::to_string(limit) + ")");
}

inline std::vector<int32_t> classes_present(const Tensor<int32_t>& target, int32_t limit) {
  std::vector<bool> seen(static_cast<size_t>(limit), false);
  for (int64_t i = 0; i < target.numel(); ++i) seen[static_cast<size_t>(target[i])] = true;
  std::vector<int32_t> out;
  for (int32_t c = 0; c < limit; ++c)
    if (seen[static_cast<size_t>(c)]) out.push_back(c);
  return out;
}

}  // namespace detail

/// The generalized segmentation loss H + w * (-log J). H is binary
/// cross-entropy on logits for the binary task and per-pixel cross-entropy
/// otherwise. J is the soft Jaccard of the linked probabilities: the logistic
/// probability against the 0/1 mask (binary), or the mean per-class soft
/// Jaccard over classes present in the target (multiclass; background joins
/// only when the task says so, and with no qualifying class the term is 0).
template <typename T>
Variable<T> segmentation_loss(const Variable<T>& logits, const Tensor<int32_t>& target,
                              const TaskSpec& task, const LossConfig& cfg = {}) {
  cfg.validate();
  detail::check_loss_inputs(logits.value(), target, task);
  const T eps = static_cast<T>(cfg.epsilon);
  const T w = static_cast<T>(cfg.jaccard_weight);

  if (task.base_loss == BaseLoss::kBceLogits) {
    Tensor<T> target01(logits.value().shape());
    for (int64_t i = 0; i < target.numel(); ++i) target01[i] = target[i] != 0 ? T(1) : T(0);
    Variable<T> h = bce_with_logits_mean(logits, target01);
    Variable<T> j = soft_jaccard_binary(sigmoid(logits), target01, eps);
    return scalar_add(h, scalar_scale(scalar_log(j), -w));
  }

  Variable<T> h = softmax_ce_mean(logits, target);
  Variable<T> probs = softmax_channels(logits);
  std::vector<int32_t> qualifying;
  for (int32_t c : detail::classes_present(target, task.mask_classes()))
    if (c != 0 || task.include_background_in_jaccard) qualifying.push_back(c);
  if (qualifying.empty()) return h;

  Variable<T> sum_j;
  for (int32_t c : qualifying) {
    Variable<T> jc = soft_jaccard_class(probs, target, c, eps);
    sum_j = sum_j.defined() ? scalar_add(sum_j, jc) : jc;
  }
  Variable<T> mean_j = scalar_scale(sum_j, T(1) / static_cast<T>(qualifying.size()));
  return scalar_add(h, scalar_scale(scalar_log(mean_j), -w));
}

}  // namespace nuseg
