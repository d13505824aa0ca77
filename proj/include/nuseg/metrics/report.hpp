#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace nuseg {

struct PerImageScore {
  std::string image_id;
  std::string video_id;
  double iou = 0.0;
  double dice = 0.0;
};

struct GroupAggregate {
  std::string video_id;
  int count = 0;
  double mean_iou = 0.0;
  double std_iou = 0.0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
};

/// Conventions baked into the numbers; exported alongside them.
struct ReportSettings {
  double epsilon = 1e-15;
  std::string skip_rule =
      "classes absent from both masks are skipped; an image with every class skipped scores 1.0";
  std::string std_convention = "population";
  std::string grouping = "per-image mean within each video";
};

struct MetricReport {
  std::vector<PerImageScore> per_image;
  std::vector<GroupAggregate> groups;
  double mean_iou = 0.0;
  double std_iou = 0.0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
  ReportSettings settings;
};

namespace detail {

inline void mean_and_population_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  sd = std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace detail

/// Global mean +/- population std plus per-video aggregates. Rows are folded
/// in (video_id, image_id) order so the result is schedule-independent.
inline MetricReport aggregate_report(std::vector<PerImageScore> rows,
                                     ReportSettings settings = {}) {
  if (rows.empty()) throw std::invalid_argument("aggregate_report: no per-image rows");
  std::sort(rows.begin(), rows.end(), [](const PerImageScore& a, const PerImageScore& b) {
    return a.video_id != b.video_id ? a.video_id < b.video_id : a.image_id < b.image_id;
  });

  MetricReport report;
  report.settings = settings;
  std::vector<double> ious, dices;
  ious.reserve(rows.size());
  dices.reserve(rows.size());
  for (const auto& r : rows) {
    ious.push_back(r.iou);
    dices.push_back(r.dice);
  }
  detail::mean_and_population_std(ious, report.mean_iou, report.std_iou);
  detail::mean_and_population_std(dices, report.mean_dice, report.std_dice);

  for (size_t i = 0; i < rows.size();) {
    size_t j = i;
    std::vector<double> gi, gd;
    while (j < rows.size() && rows[j].video_id == rows[i].video_id) {
      gi.push_back(rows[j].iou);
      gd.push_back(rows[j].dice);
      ++j;
    }
    GroupAggregate g;
    g.video_id = rows[i].video_id;
    g.count = static_cast<int>(j - i);
    detail::mean_and_population_std(gi, g.mean_iou, g.std_iou);
    detail::mean_and_population_std(gd, g.mean_dice, g.std_dice);
    report.groups.push_back(std::move(g));
    i = j;
  }
  report.per_image = std::move(rows);
  return report;
}

// --- serialization ----------------------------------------------------------

inline std::string report_to_csv(const MetricReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "image_id,video_id,iou,dice\n";
  for (const auto& r : report.per_image)
    os << r.image_id << ',' << r.video_id << ',' << r.iou << ',' << r.dice << '\n';
  return os.str();
}

inline nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& r : report.per_image)
    per_image.push_back({{"image_id", r.image_id},
                         {"video_id", r.video_id},
                         {"iou", r.iou},
                         {"dice", r.dice}});
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups)
    groups.push_back({{"video_id", g.video_id},
                      {"count", g.count},
                      {"mean_iou", g.mean_iou},
                      {"std_iou", g.std_iou},
                      {"mean_dice", g.mean_dice},
                      {"std_dice", g.std_dice}});
  return nlohmann::json{
      {"per_image", per_image},
      {"groups", groups},
      {"aggregates",
       {{"mean_iou", report.mean_iou},
        {"std_iou", report.std_iou},
        {"mean_dice", report.mean_dice},
        {"std_dice", report.std_dice}}},
      {"settings",
       {{"epsilon", report.settings.epsilon},
        {"skip_rule", report.settings.skip_rule},
        {"std_convention", report.settings.std_convention},
        {"grouping", report.settings.grouping}}}};
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport report;
  for (const auto& r : j.at("per_image"))
    report.per_image.push_back(
        {r.at("image_id").get<std::string>(), r.at("video_id").get<std::string>(),
         r.at("iou").get<double>(), r.at("dice").get<double>()});
  for (const auto& g : j.at("groups")) {
    GroupAggregate ga;
    ga.video_id = g.at("video_id").get<std::string>();
    ga.count = g.at("count").get<int>();
    ga.mean_iou = g.at("mean_iou").get<double>();
    ga.std_iou = g.at("std_iou").get<double>();
    ga.mean_dice = g.at("mean_dice").get<double>();
    ga.std_dice = g.at("std_dice").get<double>();
    report.groups.push_back(std::move(ga));
  }
  const auto& a = j.at("aggregates");
  report.mean_iou = a.at("mean_iou").get<double>();
  report.std_iou = a.at("std_iou").get<double>();
  report.mean_dice = a.at("mean_dice").get<double>();
  report.std_dice = a.at("std_dice").get<double>();
  const auto& s = j.at("settings");
  report.settings.epsilon = s.at("epsilon").get<double>();
  report.settings.skip_rule = s.at("skip_rule").get<std::string>();
  report.settings.std_convention = s.at("std_convention").get<std::string>();
  report.settings.grouping = s.at("grouping").get<std::string>();
  return report;
}

/// "mean +/- std" as percentages with two decimals, e.g. "82.94 ± 16.82".
inline std::string format_percent_cell(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", 100.0 * mean, 100.0 * sd);
  return buf;
}

/// Fractional value with three decimals, e.g. "0.889".
inline std::string format_fraction_cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace nuseg
