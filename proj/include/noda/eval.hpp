/* Copyright 2026 The noda Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef NODA_EVAL_HPP_
#define NODA_EVAL_HPP_

// COCO-style single-class detection metrics: 101-point interpolated AP per
// IOU threshold, averaged over 0.50:0.05:0.95, plus AP50, AP75 and
// size-stratified AP. Detections are assigned to the stratum of their own box
// (no COCO-style area-range ignore lists).

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include <nlohmann/json.hpp>
#include "noda/geometry.hpp"

namespace noda::eval {

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;

  bool operator==(const PRPoint&) const = default;
};

// Detections and ground truth for one image.
struct ImageResult {
  std::vector<Detection> dets;
  std::vector<Box> gts;
};

inline constexpr int kNumThresholds = 10;
inline constexpr int kRecallPoints = 101;

// 0.50, 0.55, ..., 0.95, each the correctly rounded decimal.
inline double coco_threshold(int i) { return (50.0 + 5.0 * i) / 100.0; }

struct Curve {
  std::vector<PRPoint> points;
  std::size_t num_gt = 0;
};

/// Greedy matching in descending score order (stable across images, then
/// detections): each detection takes the unmatched ground truth in its image
/// with the highest IOU >= iou_thresh, else counts as a false positive.
/// Emits cumulative (recall, precision) after every detection. With no
/// ground truth the curve is empty.
inline Curve pr_curve(const std::vector<ImageResult>& images, double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) {
    throw std::invalid_argument("pr_points: iou_thresh must be in (0, 1]");
  }
  Curve c;
  struct Ref {
    std::size_t image;
    std::size_t det;
    double score;
  };
  std::vector<Ref> order;
  for (std::size_t i = 0; i < images.size(); ++i) {
    c.num_gt += images[i].gts.size();
    for (std::size_t d = 0; d < images[i].dets.size(); ++d) {
      order.push_back({i, d, images[i].dets[d].score});
    }
  }
  if (c.num_gt == 0) return c;
  std::stable_sort(order.begin(), order.end(),
                   [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i].assign(images[i].gts.size(), false);

  std::size_t tp = 0, fp = 0;
  const double ngt = static_cast<double>(c.num_gt);
  c.points.reserve(order.size());
  for (const Ref& r : order) {
    const ImageResult& img = images[r.image];
    const Box& box = img.dets[r.det].box;
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (taken[r.image][g]) continue;
      const double v = iou(box, img.gts[g]);
      if (v >= iou_thresh && v > best) {
        best = v;
        arg = g;
      }
    }
    if (best >= 0.0) {
      taken[r.image][arg] = true;
      ++tp;
    } else {
      ++fp;
    }
    c.points.push_back({static_cast<double>(tp) / ngt,
                        static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return c;
}

inline std::vector<PRPoint> pr_points(const std::vector<Detection>& dets,
                                      const std::vector<Box>& gts, double iou_thresh) {
  return pr_curve({ImageResult{dets, gts}}, iou_thresh).points;
}

/// (1/101) sum over r in {0, 0.01, ..., 1} of the best precision among
/// points with recall >= r (0 where recall never reaches r).
inline double interpolated_ap(const std::vector<PRPoint>& points) {
  // Suffix maximum of precision, then one pass over recall thresholds.
  std::vector<double> best(points.size() + 1, 0.0);
  for (std::size_t i = points.size(); i-- > 0;) {
    best[i] = std::max(best[i + 1], points[i].precision);
  }
  double sum = 0.0;
  std::size_t k = 0;
  for (int ri = 0; ri < kRecallPoints; ++ri) {
    const double r = ri / 100.0;
    while (k < points.size() && points[k].recall < r) ++k;
    sum += best[k];
  }
  return sum / kRecallPoints;
}

inline std::optional<double> ap_at(const std::vector<ImageResult>& images, double iou_thresh) {
  const Curve c = pr_curve(images, iou_thresh);
  if (c.num_gt == 0) return std::nullopt;
  return interpolated_ap(c.points);
}

inline std::optional<double> ap_at(const std::vector<Detection>& dets,
                                   const std::vector<Box>& gts, double iou_thresh) {
  return ap_at({ImageResult{dets, gts}}, iou_thresh);
}

inline std::optional<double> coco_ap(const std::vector<ImageResult>& images) {
  double sum = 0.0;
  for (int t = 0; t < kNumThresholds; ++t) {
    const auto ap = ap_at(images, coco_threshold(t));
    if (!ap) return std::nullopt;
    sum += *ap;
  }
  return sum / kNumThresholds;
}

inline std::optional<double> coco_ap(const std::vector<Detection>& dets,
                                     const std::vector<Box>& gts) {
  return coco_ap({ImageResult{dets, gts}});
}

struct MetricsReport {
  std::optional<double> ap, ap50, ap75, ap_s, ap_m, ap_l;
  std::array<double, kNumThresholds> per_threshold{};
  std::vector<std::vector<PRPoint>> curves;  // one per threshold
  std::size_t num_images = 0;
  std::size_t num_gt = 0;
  std::size_t num_dets = 0;
};

inline std::vector<ImageResult> restrict_to_stratum(const std::vector<ImageResult>& images,
                                                    SizeStratum s) {
  std::vector<ImageResult> out(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const Box& g : images[i].gts) {
      if (size_stratum(g) == s) out[i].gts.push_back(g);
    }
    for (const Detection& d : images[i].dets) {
      if (size_stratum(d.box) == s) out[i].dets.push_back(d);
    }
  }
  return out;
}

inline MetricsReport stratified_report(const std::vector<ImageResult>& images) {
  MetricsReport r;
  r.num_images = images.size();
  for (const auto& img : images) {
    r.num_gt += img.gts.size();
    r.num_dets += img.dets.size();
  }
  bool defined = true;
  double sum = 0.0;
  for (int t = 0; t < kNumThresholds; ++t) {
    const Curve c = pr_curve(images, coco_threshold(t));
    r.curves.push_back(c.points);
    if (c.num_gt == 0) {
      defined = false;
      continue;
    }
    r.per_threshold[t] = interpolated_ap(c.points);
    sum += r.per_threshold[t];
  }
  if (defined) {
    r.ap = sum / kNumThresholds;
    r.ap50 = r.per_threshold[0];
    r.ap75 = r.per_threshold[5];
  }
  r.ap_s = coco_ap(restrict_to_stratum(images, SizeStratum::kSmall));
  r.ap_m = coco_ap(restrict_to_stratum(images, SizeStratum::kMedium));
  r.ap_l = coco_ap(restrict_to_stratum(images, SizeStratum::kLarge));
  return r;
}

inline MetricsReport stratified_report(const std::vector<Detection>& dets,
                                       const std::vector<Box>& gts) {
  return stratified_report({ImageResult{dets, gts}});
}

// ------------------------------------------------------------------ output

inline constexpr std::array<const char*, 6> kReportFields = {"ap",   "ap50", "ap75",
                                                            "ap_s", "ap_m", "ap_l"};

inline std::array<std::optional<double>, 6> report_values(const MetricsReport& r) {
  return {r.ap, r.ap50, r.ap75, r.ap_s, r.ap_m, r.ap_l};
}

// Absent metrics are JSON null.
inline nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  const auto vals = report_values(r);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    j[kReportFields[i]] = vals[i] ? nlohmann::ordered_json(*vals[i]) : nlohmann::ordered_json();
  }
  j["num_images"] = r.num_images;
  j["num_gt"] = r.num_gt;
  j["num_dets"] = r.num_dets;
  auto& thr = j["per_threshold"] = nlohmann::ordered_json::array();
  for (int t = 0; t < kNumThresholds; ++t) {
    nlohmann::ordered_json e;
    e["iou"] = coco_threshold(t);
    e["ap"] = r.ap ? nlohmann::ordered_json(r.per_threshold[t]) : nlohmann::ordered_json();
    auto& pts = e["pr"] = nlohmann::ordered_json::array();
    for (const PRPoint& p : r.curves[t]) pts.push_back({p.recall, p.precision});
    thr.push_back(std::move(e));
  }
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto get = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) throw std::runtime_error(std::string("report json: missing ") + key);
    if (j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.ap = get("ap");
  r.ap50 = get("ap50");
  r.ap75 = get("ap75");
  r.ap_s = get("ap_s");
  r.ap_m = get("ap_m");
  r.ap_l = get("ap_l");
  r.num_images = j.value("num_images", std::size_t{0});
  r.num_gt = j.value("num_gt", std::size_t{0});
  r.num_dets = j.value("num_dets", std::size_t{0});
  return r;
}

inline std::string csv_header() { return "ap,ap50,ap75,ap_s,ap_m,ap_l"; }

// Absent metrics are empty fields.
inline std::string csv_row(const MetricsReport& r) {
  std::string out;
  const auto vals = report_values(r);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ',';
    if (vals[i]) out += fmt::format("{:.17g}", *vals[i]);
  }
  return out;
}

}  // namespace noda::eval

#endif  // NODA_EVAL_HPP_
