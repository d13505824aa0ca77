#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nuseg {

enum class TaskKind { kBinary, kParts, kType };
enum class BaseLoss { kBceLogits, kCrossEntropy };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kBinary: return "binary";
    case TaskKind::kParts: return "parts";
    case TaskKind::kType: return "type";
  }
  return "?";
}

/// One of the three segmentation sub-tasks. Binary uses a single logit
/// channel with the logistic link; parts and type use per-class channels with
/// softmax. The pairing of task and base loss is fixed.
struct TaskSpec {
  TaskKind kind = TaskKind::kBinary;
  int num_classes = 1;  // logit channels: 1 / 4 / 8
  BaseLoss base_loss = BaseLoss::kBceLogits;
  bool include_background_in_jaccard = false;

  /// Distinct values a class mask may hold (background included).
  int mask_classes() const { return kind == TaskKind::kBinary ? 2 : num_classes; }

  /// Foreground classes entering the evaluation metrics.
  std::vector<int> evaluated_classes() const {
    std::vector<int> out;
    for (int c = 1; c < mask_classes(); ++c) out.push_back(c);
    return out;
  }

  static TaskSpec binary() { return {TaskKind::kBinary, 1, BaseLoss::kBceLogits, false}; }
  static TaskSpec parts() { return {TaskKind::kParts, 4, BaseLoss::kCrossEntropy, false}; }
  static TaskSpec type() { return {TaskKind::kType, 8, BaseLoss::kCrossEntropy, false}; }

  static TaskSpec from_name(const std::string& name) {
    if (name == "binary") return binary();
    if (name == "parts") return parts();
    if (name == "type") return type();
    throw std::invalid_argument("unknown task '" + name + "' (expected binary|parts|type)");
  }
};

/// Knobs of the generalized segmentation loss.
struct LossConfig {
  double epsilon = 1e-15;     // guards the log and the Jaccard division
  double jaccard_weight = 1.0;

  void validate() const {
    if (!(epsilon > 0)) throw std::invalid_argument("LossConfig: epsilon must be > 0");
  }
};

}  // namespace nuseg
