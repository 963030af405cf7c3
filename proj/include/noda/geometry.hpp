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
#ifndef NODA_GEOMETRY_HPP_
#define NODA_GEOMETRY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace noda {

// Axis-aligned box in continuous pixel coordinates. area = (x1-x0)(y1-y0);
// there is no +1 pixel convention.
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  Box() = default;
  Box(double x0, double y0, double x1, double y1)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (!valid(x0, y0, x1, y1)) {
      throw std::invalid_argument(
          "Box: degenerate or non-finite (" + std::to_string(x0) + ", " +
          std::to_string(y0) + ", " + std::to_string(x1) + ", " +
          std::to_string(y1) + ")");
    }
  }

  static bool valid(double x0, double y0, double x1, double y1) {
    return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
           std::isfinite(y1) && x0 < x1 && y0 < y1;
  }

  // Returns nullopt instead of throwing.
  static std::optional<Box> make(double x0, double y0, double x1, double y1) {
    if (!valid(x0, y0, x1, y1)) return std::nullopt;
    return Box(x0, y0, x1, y1);
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool within(double image_width, double image_height) const {
    return x_min >= 0.0 && y_min >= 0.0 && x_max <= image_width &&
           y_max <= image_height;
  }

  Box translated(double dx, double dy) const {
    return Box(x_min + dx, y_min + dy, x_max + dx, y_max + dy);
  }

  bool operator==(const Box&) const = default;
};

struct Detection {
  Box box;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

inline double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

// Clips to [0,w]x[0,h]; nullopt when nothing with positive area remains.
inline std::optional<Box> clip(const Box& b, double w, double h) {
  return Box::make(std::clamp(b.x_min, 0.0, w), std::clamp(b.y_min, 0.0, h),
                   std::clamp(b.x_max, 0.0, w), std::clamp(b.y_max, 0.0, h));
}

/// Greedy non-maximum suppression. Keeps the highest-scoring remaining
/// detection and drops every other one whose IOU with it exceeds
/// `iou_thresh`. Output is sorted by descending score; equal scores keep
/// their input order.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  double iou_thresh) {
  if (!(iou_thresh > 0.0 && iou_thresh <= 1.0)) {
    throw std::invalid_argument("nms: iou_thresh must be in (0, 1]");
  }
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  std::vector<bool> removed(dets.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!removed[j] && iou(dets[i].box, dets[j].box) > iou_thresh) {
        removed[j] = true;
      }
    }
  }
  return kept;
}

struct ProposalMatch {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
  // Index of the best-IOU label per proposal (meaningful for positives).
  std::vector<std::size_t> best_label;
  std::vector<double> best_iou;
};

/// Splits proposals into positives (best IOU against any label >= thresh) and
/// negatives. The two index sets partition all proposals; there is no ignore
/// band.
inline ProposalMatch match_proposals(const std::vector<Box>& proposals,
                                     const std::vector<Box>& labels,
                                     double thresh = 0.75) {
  if (!(thresh > 0.0 && thresh < 1.0)) {
    throw std::invalid_argument("match_proposals: thresh must be in (0, 1)");
  }
  ProposalMatch m;
  m.best_label.assign(proposals.size(), 0);
  m.best_iou.assign(proposals.size(), 0.0);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      const double v = iou(proposals[i], labels[j]);
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    m.best_label[i] = arg;
    m.best_iou[i] = best;
    if (!labels.empty() && best >= thresh) {
      m.positive.push_back(i);
    } else {
      m.negative.push_back(i);
    }
  }
  return m;
}

enum class SizeStratum { kSmall, kMedium, kLarge };

inline constexpr double kSmallAreaLimit = 32.0 * 32.0;
inline constexpr double kLargeAreaLimit = 96.0 * 96.0;

// Medium is inclusive at both 32*32 and 96*96.
inline SizeStratum size_stratum(const Box& b) {
  const double a = b.area();
  if (a < kSmallAreaLimit) return SizeStratum::kSmall;
  if (a <= kLargeAreaLimit) return SizeStratum::kMedium;
  return SizeStratum::kLarge;
}

inline const char* stratum_name(SizeStratum s) {
  switch (s) {
    case SizeStratum::kSmall:
      return "S";
    case SizeStratum::kMedium:
      return "M";
    case SizeStratum::kLarge:
      return "L";
  }
  return "?";
}

}  // namespace noda

#endif  // NODA_GEOMETRY_HPP_
