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
#ifndef NODA_TESTS_ORACLES_HPP_
#define NODA_TESTS_ORACLES_HPP_

// Reference implementations written from the definitions, sharing no code
// with the library beyond the Box/Detection structs. Slow on purpose.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "noda/geometry.hpp"
#include "noda/rng.hpp"

namespace noda::oracle {

inline double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double ua = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double ub = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  return inter / (ua + ub - inter);
}

struct Image {
  std::vector<Detection> dets;
  std::vector<Box> gts;
};

// Greedy matching by descending score (ties: image order, then detection
// order), then the 101-point interpolated AP read straight off the
// definition: for each recall level, the max precision over all points at or
// beyond it.
inline std::optional<double> ap(const std::vector<Image>& images, double t) {
  struct Ref {
    std::size_t img, det, rank;
    double score;
  };
  std::vector<Ref> refs;
  std::size_t ngt = 0, rank = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ngt += images[i].gts.size();
    for (std::size_t d = 0; d < images[i].dets.size(); ++d) {
      refs.push_back({i, d, rank++, images[i].dets[d].score});
    }
  }
  if (ngt == 0) return std::nullopt;
  // Selection sort keeps the tie rule explicit.
  for (std::size_t a = 0; a < refs.size(); ++a) {
    std::size_t best = a;
    for (std::size_t b = a + 1; b < refs.size(); ++b) {
      if (refs[b].score > refs[best].score ||
          (refs[b].score == refs[best].score && refs[b].rank < refs[best].rank)) {
        best = b;
      }
    }
    std::swap(refs[a], refs[best]);
  }
  std::vector<std::vector<bool>> used;
  for (const auto& im : images) used.emplace_back(im.gts.size(), false);
  std::vector<double> recall, precision;
  int tp = 0, fp = 0;
  for (const Ref& r : refs) {
    const auto& im = images[r.img];
    int arg = -1;
    double best = 0.0;
    for (std::size_t g = 0; g < im.gts.size(); ++g) {
      if (used[r.img][g]) continue;
      const double v = oracle::iou(im.dets[r.det].box, im.gts[g]);
      if (v >= t && (arg < 0 || v > best)) {
        arg = static_cast<int>(g);
        best = v;
      }
    }
    if (arg >= 0) {
      used[r.img][arg] = true;
      ++tp;
    } else {
      ++fp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(ngt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  double sum = 0.0;
  for (int ri = 0; ri <= 100; ++ri) {
    const double level = ri / 100.0;
    double p = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
      if (recall[k] >= level) p = std::max(p, precision[k]);
    }
    sum += p;
  }
  return sum / 101.0;
}

inline std::optional<double> coco_ap(const std::vector<Image>& images) {
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto v = ap(images, (50.0 + 5.0 * i) / 100.0);
    if (!v) return std::nullopt;
    sum += *v;
  }
  return sum / 10.0;
}

// 0 small, 1 medium, 2 large.
inline int stratum(const Box& b) {
  const double a = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  if (a < 32.0 * 32.0) return 0;
  if (a <= 96.0 * 96.0) return 1;
  return 2;
}

inline std::vector<Image> only_stratum(const std::vector<Image>& images, int s) {
  std::vector<Image> out;
  for (const auto& im : images) {
    Image r;
    for (const auto& g : im.gts) {
      if (stratum(g) == s) r.gts.push_back(g);
    }
    for (const auto& d : im.dets) {
      if (stratum(d.box) == s) r.dets.push_back(d);
    }
    out.push_back(r);
  }
  return out;
}

// Random small evaluation instance: up to `max_boxes` boxes in total over
// 1-3 images, sized to hit every stratum, with near-duplicate detections and
// tied scores.
inline std::vector<Image> random_instance(Rng& rng, int max_boxes = 20) {
  const int images = rng.uniform_int(1, 3);
  int budget = rng.uniform_int(1, max_boxes);
  std::vector<Image> out(images);
  auto rand_box = [&] {
    const double side = rng.bernoulli(0.3) ? rng.uniform(4.0, 30.0) : rng.uniform(20.0, 130.0);
    const double aspect = rng.uniform(0.6, 1.6);
    const double w = side, h = side * aspect;
    const double x = rng.uniform(0.0, 300.0), y = rng.uniform(0.0, 300.0);
    return Box(x, y, x + w, y + h);
  };
  while (budget > 0) {
    Image& im = out[rng.uniform_int(0, images - 1)];
    const bool gt = rng.bernoulli(0.45);
    double score = rng.bernoulli(0.3) ? rng.uniform_int(0, 4) / 4.0 : rng.uniform();
    if (gt || im.gts.empty()) {
      im.gts.push_back(rand_box());
    } else if (rng.bernoulli(0.7)) {
      const Box& g = im.gts[rng.uniform_int(0, static_cast<int>(im.gts.size()) - 1)];
      const double s = 0.25 * g.width();
      const double dx = rng.uniform(-s, s), dy = rng.uniform(-s, s);
      im.dets.push_back({Box(g.x_min + dx, g.y_min + dy, g.x_max + dx + rng.uniform(0.0, s),
                             g.y_max + dy + rng.uniform(0.0, s)),
                         score});
    } else {
      im.dets.push_back({rand_box(), score});
    }
    --budget;
  }
  return out;
}

}  // namespace noda::oracle

#endif  // NODA_TESTS_ORACLES_HPP_
