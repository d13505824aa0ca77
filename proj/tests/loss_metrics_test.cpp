#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nuseg/loss/segmentation_loss.hpp"
#include "nuseg/metrics/metrics.hpp"
#include "nuseg/metrics/report.hpp"
#include "test_support.hpp"

namespace nuseg {
namespace {

using test::random_tensor;

// Brute-force counting oracle, independent of the library implementation:
// per-class pixel loops, mean over classes with any support.
double oracle_overlap(const Tensor<int32_t>& pred, const Tensor<int32_t>& gt,
                      const std::vector<int>& classes, bool dice) {
  double sum = 0.0;
  int used = 0;
  for (int c : classes) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
      if (pred[i] == c && gt[i] == c) ++tp;
      if (pred[i] == c && gt[i] != c) ++fp;
      if (pred[i] != c && gt[i] == c) ++fn;
    }
    if (tp + fp + fn == 0) continue;
    sum += dice ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn)
                : 1.0 * tp / static_cast<double>(tp + fp + fn);
    ++used;
  }
  return used == 0 ? 1.0 : sum / used;
}

Tensor<int32_t> random_mask(Rng& rng, int classes, int64_t h = 8, int64_t w = 8) {
  Tensor<int32_t> m({1, h, w});
  for (int64_t i = 0; i < m.numel(); ++i)
    m[i] = static_cast<int32_t>(rng.uniform_int(0, classes - 1));
  return m;
}

TEST(SoftJaccardTest, ExactMatchScoresOne) {
  Tensor<double> t = Tensor<double>::from({2, 2}, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(soft_jaccard(t, t), 1.0);
  Tensor<double> zeros = Tensor<double>::zeros({3, 3});
  EXPECT_DOUBLE_EQ(soft_jaccard(zeros, zeros), 1.0);  // all-background via epsilon
}

TEST(SoftJaccardTest, WorkedExample) {
  Tensor<double> probs = Tensor<double>::from({4}, {1.0, 0.5, 0.5, 0.0});
  Tensor<double> gt = Tensor<double>::from({4}, {1.0, 1.0, 0.0, 0.0});
  // (1.5) / (4.0 - 1.5) = 0.6
  EXPECT_NEAR(soft_jaccard(probs, gt), 0.6, 1e-12);
}

TEST(SoftJaccardTest, DisjointPredictionNearZero) {
  Tensor<double> gt = Tensor<double>::from({4}, {1.0, 1.0, 0.0, 0.0});
  Tensor<double> probs = Tensor<double>::from({4}, {0.0, 0.0, 1.0, 1.0});
  EXPECT_LT(soft_jaccard(probs, gt), 1e-14);
}

TEST(SoftJaccardTest, ShapeMismatchRejected) {
  Tensor<double> a = Tensor<double>::zeros({4});
  Tensor<double> b = Tensor<double>::zeros({5});
  EXPECT_THROW(soft_jaccard(a, b), std::invalid_argument);
}

TEST(SoftJaccardTest, MonotoneInProbabilities) {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> probs = random_tensor({16}, rng, 0.05, 0.95);
    Tensor<double> gt({16});
    for (int64_t i = 0; i < 16; ++i) gt[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double base = soft_jaccard(probs, gt);
    const int64_t i = rng.uniform_int(0, 15);
    Tensor<double> bumped = probs.clone();
    bumped[i] = std::min(1.0, bumped[i] + 0.04);
    const double after = soft_jaccard(bumped, gt);
    if (gt[i] == 1.0)
      EXPECT_GE(after, base - 1e-15);
    else
      EXPECT_LE(after, base + 1e-15);
  }
}

TEST(SegmentationLossTest, SaturatedCorrectPredictionNearZero) {
  Tensor<int32_t> target({1, 2, 2});
  target[0] = 1;
  target[1] = 0;
  target[2] = 1;
  target[3] = 0;
  Tensor<double> logits({1, 1, 2, 2});
  for (int64_t i = 0; i < 4; ++i) logits[i] = target[i] ? 40.0 : -40.0;
  auto loss = segmentation_loss(Variable<double>::leaf(logits), target, TaskSpec::binary());
  EXPECT_LT(loss.item(), 1e-6);
  EXPECT_GE(loss.item(), -1e-9);
}

TEST(SegmentationLossTest, WorkedJaccardTermAndBceSum) {
  // probs (1.0, 0.5, 0.5, 0.0) against gt (1,1,0,0): jaccard term -log(0.6).
  Tensor<int32_t> target({1, 2, 2});
  target[0] = 1;
  target[1] = 1;
  target[2] = 0;
  target[3] = 0;
  Tensor<double> logits({1, 1, 2, 2});
  logits[0] = 500.0;  // sigmoid -> 1 exactly in double
  logits[1] = 0.0;
  logits[2] = 0.0;
  logits[3] = -500.0;
  auto loss = segmentation_loss(Variable<double>::leaf(logits), target, TaskSpec::binary());
  // Independent cross-entropy sum oracle: pixels 0 and 3 contribute ~0,
  // pixels 1 and 2 contribute -log(1/2) each; mean over 4 pixels.
  const double h = 2.0 * std::log(2.0) / 4.0;
  const double jaccard_term = -std::log(0.6);
  EXPECT_NEAR(jaccard_term, 0.5108, 2e-4);
  EXPECT_NEAR(loss.item(), h + jaccard_term, 1e-6);
  EXPECT_NEAR(loss.item() - h, 0.51082562376, 1e-6);
}

TEST(SegmentationLossTest, AbsentClassSkippedLossFinite) {
  // Class 2 appears in neither target nor prediction: it must not drag the
  // Jaccard term to -log(~0).
  TaskSpec task = TaskSpec::parts();
  Tensor<int32_t> target({1, 2, 2});
  target[0] = 1;
  target[1] = 1;
  target[2] = 0;
  target[3] = 0;
  Tensor<double> logits({1, 4, 2, 2});
  for (int64_t i = 0; i < 4; ++i) {
    logits.at(0, 0, i / 2, i % 2) = target[i] == 0 ? 30.0 : -30.0;
    logits.at(0, 1, i / 2, i % 2) = target[i] == 1 ? 30.0 : -30.0;
    logits.at(0, 2, i / 2, i % 2) = -30.0;
    logits.at(0, 3, i / 2, i % 2) = -30.0;
  }
  auto loss = segmentation_loss(Variable<double>::leaf(logits), target, task);
  EXPECT_TRUE(std::isfinite(loss.item()));
  EXPECT_LT(loss.item(), 1e-6);  // perfect prediction on the classes that exist
}

TEST(SegmentationLossTest, AllBackgroundMulticlassReducesToCrossEntropy) {
  TaskSpec task = TaskSpec::parts();
  Rng rng(52);
  Tensor<double> logits = random_tensor({1, 4, 4, 4}, rng);
  Tensor<int32_t> target = Tensor<int32_t>::zeros({1, 4, 4});
  auto full = segmentation_loss(Variable<double>::leaf(logits), target, task);
  auto h = softmax_ce_mean(Variable<double>::leaf(logits), target);
  EXPECT_DOUBLE_EQ(full.item(), h.item());
}

TEST(SegmentationLossTest, ChannelMismatchAndNonFiniteRejected) {
  Tensor<int32_t> target = Tensor<int32_t>::zeros({1, 2, 2});
  Tensor<double> three = Tensor<double>::zeros({1, 3, 2, 2});
  EXPECT_THROW(segmentation_loss(Variable<double>::leaf(three), target, TaskSpec::parts()),
               std::invalid_argument);
  Tensor<double> bad = Tensor<double>::zeros({1, 1, 2, 2});
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(segmentation_loss(Variable<double>::leaf(bad), target, TaskSpec::binary()),
               std::invalid_argument);
  Tensor<int32_t> out_of_range = Tensor<int32_t>::full({1, 2, 2}, 5);
  Tensor<double> ok = Tensor<double>::zeros({1, 4, 2, 2});
  EXPECT_THROW(segmentation_loss(Variable<double>::leaf(ok), out_of_range, TaskSpec::parts()),
               std::invalid_argument);
}

TEST(SegmentationLossTest, NonNegativeUpToEpsilon) {
  Rng rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor<double> logits = random_tensor({1, 1, 6, 6}, rng, -3.0, 3.0);
    Tensor<int32_t> target({1, 6, 6});
    for (int64_t i = 0; i < target.numel(); ++i)
      target[i] = rng.bernoulli(0.5) ? 1 : 0;
    auto loss = segmentation_loss(Variable<double>::leaf(logits), target, TaskSpec::binary());
    EXPECT_GE(loss.item(), -1e-9);

    Tensor<double> ml = random_tensor({1, 4, 6, 6}, rng, -3.0, 3.0);
    Tensor<int32_t> mt({1, 6, 6});
    for (int64_t i = 0; i < mt.numel(); ++i)
      mt[i] = static_cast<int32_t>(rng.uniform_int(0, 3));
    auto mloss = segmentation_loss(Variable<double>::leaf(ml), mt, TaskSpec::parts());
    EXPECT_GE(mloss.item(), -1e-9);
  }
}

TEST(SegmentationLossTest, GradientsMatchFiniteDifferences) {
  Rng rng(54);
  Tensor<int32_t> bt({1, 4, 4});
  for (int64_t i = 0; i < bt.numel(); ++i) bt[i] = rng.bernoulli(0.5) ? 1 : 0;
  auto blogits = Variable<double>::leaf(random_tensor({1, 1, 4, 4}, rng, -2.0, 2.0), true);
  test::expect_gradients_match({blogits},
                               [&] { return segmentation_loss(blogits, bt, TaskSpec::binary()); });

  Tensor<int32_t> mt({1, 4, 4});
  for (int64_t i = 0; i < mt.numel(); ++i) mt[i] = static_cast<int32_t>(rng.uniform_int(0, 3));
  auto mlogits = Variable<double>::leaf(random_tensor({1, 4, 4, 4}, rng, -2.0, 2.0), true);
  test::expect_gradients_match({mlogits},
                               [&] { return segmentation_loss(mlogits, mt, TaskSpec::parts()); });
}

TEST(SegmentationLossTest, PermutationInvariance) {
  Rng rng(55);
  const int64_t n = 36;
  Tensor<double> logits = random_tensor({1, 4, 6, 6}, rng);
  Tensor<int32_t> target({1, 6, 6});
  for (int64_t i = 0; i < n; ++i) target[i] = static_cast<int32_t>(rng.uniform_int(0, 3));

  std::vector<int64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int64_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

  Tensor<double> plogits({1, 4, 6, 6});
  Tensor<int32_t> ptarget({1, 6, 6});
  for (int64_t i = 0; i < n; ++i) {
    ptarget[perm[i]] = target[i];
    for (int64_t c = 0; c < 4; ++c) plogits[c * n + perm[i]] = logits[c * n + i];
  }
  auto a = segmentation_loss(Variable<double>::leaf(logits), target, TaskSpec::parts());
  auto b = segmentation_loss(Variable<double>::leaf(plogits), ptarget, TaskSpec::parts());
  EXPECT_NEAR(a.item(), b.item(), 1e-12);

  TaskSpec task = TaskSpec::parts();
  EXPECT_NEAR(iou_metric(target, target, task), iou_metric(ptarget, ptarget, task), 0.0);
}

TEST(ConfusionCountsTest, WorkedExampleAndInvariants) {
  Tensor<int32_t> pred = Tensor<int32_t>::from({4}, {1, 0, 1, 0});
  Tensor<int32_t> gt = Tensor<int32_t>::from({4}, {1, 1, 0, 0});
  ConfusionCounts c = confusion_counts(pred, gt, 1);
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.fn, 1);

  ConfusionCounts same = confusion_counts(gt, gt, 1);
  EXPECT_EQ(same.fp, 0);
  EXPECT_EQ(same.fn, 0);
  EXPECT_EQ(same.tp, 2);

  ConfusionCounts absent = confusion_counts(pred, gt, 7);
  EXPECT_EQ(absent.tp, 0);
  EXPECT_EQ(absent.fp, 0);
  EXPECT_EQ(absent.fn, 0);

  // tp+fn = ground-truth positives; tp+fp = predicted positives.
  Rng rng(56);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<int32_t> p = random_mask(rng, 4);
    Tensor<int32_t> g = random_mask(rng, 4);
    for (int cls = 0; cls < 4; ++cls) {
      ConfusionCounts cc = confusion_counts(p, g, cls);
      int64_t gt_pos = 0, pred_pos = 0;
      for (int64_t i = 0; i < g.numel(); ++i) {
        gt_pos += g[i] == cls;
        pred_pos += p[i] == cls;
      }
      EXPECT_EQ(cc.tp + cc.fn, gt_pos);
      EXPECT_EQ(cc.tp + cc.fp, pred_pos);
    }
  }
}

TEST(MetricsTest, WorkedExamples) {
  Tensor<int32_t> pred = Tensor<int32_t>::from({4}, {1, 0, 1, 0});
  Tensor<int32_t> gt = Tensor<int32_t>::from({4}, {1, 1, 0, 0});
  EXPECT_NEAR(iou_metric(pred, gt, TaskSpec::binary()), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(dice_metric(pred, gt, TaskSpec::binary()), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(iou_metric(gt, gt, TaskSpec::binary()), 1.0);
  EXPECT_DOUBLE_EQ(dice_metric(gt, gt, TaskSpec::binary()), 1.0);

  // gt has classes {1,2}; prediction correct on 1, silent on 2.
  Tensor<int32_t> pgt = Tensor<int32_t>::from({4}, {1, 2, 0, 0});
  Tensor<int32_t> ppred = Tensor<int32_t>::from({4}, {1, 0, 0, 0});
  EXPECT_NEAR(iou_metric(ppred, pgt, TaskSpec::parts()), 0.5, 1e-15);
}

TEST(MetricsTest, ErrorsAndDegenerateCases) {
  Tensor<int32_t> a = Tensor<int32_t>::zeros({4});
  Tensor<int32_t> b = Tensor<int32_t>::zeros({5});
  EXPECT_THROW(iou_metric(a, b, TaskSpec::binary()), std::invalid_argument);
  Tensor<int32_t> empty = Tensor<int32_t>::zeros({0});
  EXPECT_THROW(iou_metric(empty, empty, TaskSpec::binary()), std::invalid_argument);
  // All classes skipped (correct all-background frame) scores 1.
  Tensor<int32_t> zeros = Tensor<int32_t>::zeros({8});
  EXPECT_DOUBLE_EQ(iou_metric(zeros, zeros, TaskSpec::parts()), 1.0);
  EXPECT_DOUBLE_EQ(dice_metric(zeros, zeros, TaskSpec::type()), 1.0);
}

TEST(MetricsTest, OracleEquivalenceOnRandomMasks) {
  Rng rng(57);
  const TaskSpec tasks[3] = {TaskSpec::binary(), TaskSpec::parts(), TaskSpec::type()};
  for (const TaskSpec& task : tasks) {
    for (int trial = 0; trial < 100; ++trial) {
      Tensor<int32_t> pred = random_mask(rng, task.mask_classes());
      Tensor<int32_t> gt = random_mask(rng, task.mask_classes());
      std::vector<int> classes = task.evaluated_classes();
      EXPECT_EQ(iou_metric(pred, gt, task), oracle_overlap(pred, gt, classes, false));
      EXPECT_EQ(dice_metric(pred, gt, task), oracle_overlap(pred, gt, classes, true));
    }
  }
}

TEST(MetricsTest, DiceIouIdentityPerClass) {
  Rng rng(58);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<int32_t> pred = random_mask(rng, 4);
    Tensor<int32_t> gt = random_mask(rng, 4);
    for (int c = 1; c < 4; ++c) {
      ConfusionCounts cc = confusion_counts(pred, gt, c);
      if (cc.tp + cc.fp + cc.fn == 0) continue;
      const double iou = static_cast<double>(cc.tp) / static_cast<double>(cc.tp + cc.fp + cc.fn);
      const double dice =
          static_cast<double>(2 * cc.tp) / static_cast<double>(2 * cc.tp + cc.fp + cc.fn);
      EXPECT_LT(std::abs(dice - 2.0 * iou / (1.0 + iou)), 1e-12);
    }
  }
}

TEST(AggregateReportTest, MeanAndPopulationStd) {
  MetricReport r = aggregate_report({{"a", "v1", 0.8, 0.8}, {"b", "v1", 0.9, 0.9}});
  EXPECT_NEAR(r.mean_iou, 0.85, 1e-15);
  EXPECT_NEAR(r.std_iou, 0.05, 1e-15);

  MetricReport single = aggregate_report({{"a", "v1", 0.7, 0.7}});
  EXPECT_DOUBLE_EQ(single.mean_iou, 0.7);
  EXPECT_DOUBLE_EQ(single.std_iou, 0.0);

  EXPECT_THROW(aggregate_report({}), std::invalid_argument);
}

TEST(AggregateReportTest, GroupsPerVideoPlusGlobal) {
  MetricReport r = aggregate_report({{"f1", "v2", 0.0, 0.0},
                                     {"f0", "v1", 1.0, 1.0},
                                     {"f1", "v1", 0.5, 0.5},
                                     {"f0", "v2", 0.5, 0.5}});
  ASSERT_EQ(r.groups.size(), 2u);
  EXPECT_EQ(r.groups[0].video_id, "v1");
  EXPECT_NEAR(r.groups[0].mean_iou, 0.75, 1e-15);
  EXPECT_EQ(r.groups[1].video_id, "v2");
  EXPECT_NEAR(r.groups[1].mean_iou, 0.25, 1e-15);
  EXPECT_NEAR(r.mean_iou, 0.5, 1e-15);

  // Aggregates recomputable from the exported per-image rows.
  double mean = 0.0;
  for (const auto& row : r.per_image) mean += row.iou;
  mean /= static_cast<double>(r.per_image.size());
  EXPECT_NEAR(mean, r.mean_iou, 1e-12);
}

TEST(ReportSerializationTest, JsonRoundTripExact) {
  MetricReport r = aggregate_report(
      {{"f0", "v1", 0.8294, 0.8942}, {"f1", "v1", 0.3141592653589793, 0.2718281828459045}});
  nlohmann::json j = report_to_json(r);
  MetricReport back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_NEAR(back.mean_iou, r.mean_iou, 1e-12);
  EXPECT_NEAR(back.std_dice, r.std_dice, 1e-12);
  ASSERT_EQ(back.per_image.size(), r.per_image.size());
  EXPECT_EQ(back.per_image[0].image_id, "f0");
  EXPECT_NEAR(back.per_image[1].iou, r.per_image[1].iou, 0.0);
}

TEST(ReportSerializationTest, CsvColumns) {
  MetricReport r = aggregate_report({{"f0", "v1", 0.5, 0.75}});
  const std::string csv = report_to_csv(r);
  EXPECT_EQ(csv.rfind("image_id,video_id,iou,dice\n", 0), 0u);
  EXPECT_NE(csv.find("f0,v1,0.5,0.75"), std::string::npos);
}

TEST(ReportSerializationTest, TableCellFormats) {
  EXPECT_EQ(format_percent_cell(0.8294, 0.1682), "82.94 ± 16.82");
  EXPECT_EQ(format_fraction_cell(0.889), "0.889");
}

}  // namespace
}  // namespace nuseg
