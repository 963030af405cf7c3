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
#include <algorithm>
#include <map>
#include <optional>
#include <vector>

#include <gtest/gtest.h>

#include "noda/eval.hpp"
#include "oracles.hpp"
#include "property.hpp"

namespace noda::eval {
namespace {

using noda::testing::for_all;

std::vector<ImageResult> to_results(const std::vector<oracle::Image>& images) {
  std::vector<ImageResult> out;
  for (const auto& im : images) out.push_back({im.dets, im.gts});
  return out;
}

void expect_same(const std::optional<double>& got, const std::optional<double>& want,
                 const char* what) {
  ASSERT_EQ(got.has_value(), want.has_value()) << what;
  if (got) EXPECT_NEAR(*got, *want, 1e-9) << what;
}

TEST(Ap, FalsePositiveThenTruePositiveIsHalf) {
  const std::vector<Box> gts{Box(0, 0, 10, 10)};
  const std::vector<Detection> dets{{Box(50, 50, 60, 60), 0.95}, {Box(0, 0, 10, 10), 0.9}};
  EXPECT_EQ(*ap_at(dets, gts, 0.5), 0.5);
  const auto pts = pr_points(dets, gts, 0.5);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], (PRPoint{0.0, 0.0}));
  EXPECT_EQ(pts[1], (PRPoint{1.0, 0.5}));
}

TEST(Ap, HalfRecallIs51Over101) {
  const std::vector<Box> gts{Box(0, 0, 10, 10), Box(40, 40, 50, 50)};
  const std::vector<Detection> dets{{Box(0, 0, 10, 10), 0.8}};
  EXPECT_EQ(*ap_at(dets, gts, 0.5), 51.0 / 101.0);
}

TEST(Ap, IouSixTenthsSweep) {
  const std::vector<Box> gts{Box(0, 0, 10, 10)};
  const std::vector<Detection> dets{{Box(0, 0, 10, 6), 0.7}};
  EXPECT_EQ(iou(dets[0].box, gts[0]), 0.6);
  EXPECT_EQ(*ap_at(dets, gts, 0.6), 1.0);  // >= at the boundary
  EXPECT_EQ(*ap_at(dets, gts, 0.65), 0.0);
  EXPECT_NEAR(*coco_ap(dets, gts), 0.3, 1e-15);
}

TEST(Ap, NoDetectionsAndNoGroundTruth) {
  EXPECT_EQ(*ap_at({}, {Box(0, 0, 5, 5)}, 0.5), 0.0);
  EXPECT_FALSE(ap_at({{Box(0, 0, 5, 5), 0.9}}, {}, 0.5).has_value());
  EXPECT_FALSE(coco_ap({}, {}).has_value());
  EXPECT_THROW(ap_at({}, {}, 0.0), std::invalid_argument);
}

TEST(Ap, ThresholdsAreTheDecimalSweep) {
  for (int i = 0; i < kNumThresholds; ++i) {
    EXPECT_EQ(coco_threshold(i), (50 + 5 * i) / 100.0);
  }
  EXPECT_EQ(coco_threshold(0), 0.5);
  EXPECT_EQ(coco_threshold(9), 0.95);
}

TEST(Report, StrataAndAbsentFields) {
  // Only a medium gt: small and large strata have no ground truth.
  const std::vector<Box> gts{Box(0, 0, 40, 40)};
  const std::vector<Detection> dets{{Box(0, 0, 40, 40), 0.9}, {Box(100, 100, 104, 104), 0.95}};
  const MetricsReport r = stratified_report(dets, gts);
  EXPECT_FALSE(r.ap_s.has_value());
  EXPECT_FALSE(r.ap_l.has_value());
  EXPECT_EQ(*r.ap_m, 1.0);  // the small FP lands in its own stratum
  EXPECT_EQ(*r.ap50, 0.5);
  double sum = 0;
  for (double v : r.per_threshold) sum += v;
  EXPECT_NEAR(*r.ap, sum / kNumThresholds, 1e-15);
  EXPECT_EQ(r.num_gt, 1u);
  EXPECT_EQ(r.num_dets, 2u);
}

TEST(Report, JsonAndCsvFieldNames) {
  const MetricsReport r = stratified_report({{Box(0, 0, 40, 40), 0.9}}, {Box(0, 0, 40, 40)});
  const auto j = report_to_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  const std::vector<std::string> head(keys.begin(), keys.begin() + 6);
  EXPECT_EQ(head, (std::vector<std::string>{"ap", "ap50", "ap75", "ap_s", "ap_m", "ap_l"}));
  EXPECT_TRUE(j["ap_s"].is_null());
  EXPECT_EQ(j["per_threshold"].size(), 10u);
  EXPECT_EQ(csv_header(), "ap,ap50,ap75,ap_s,ap_m,ap_l");
  EXPECT_EQ(csv_row(r), "1,1,1,,1,");
  const MetricsReport back = report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.ap, r.ap);
  EXPECT_FALSE(back.ap_l.has_value());
  EXPECT_EQ(back.num_images, 1u);
}

TEST(Oracle, ThousandRandomInstancesMatch) {
  Rng rng(4242);
  for (int i = 0; i < 1000; ++i) {
    SCOPED_TRACE(i);
    const auto inst = oracle::random_instance(rng, 20);
    const auto res = to_results(inst);
    expect_same(coco_ap(res), oracle::coco_ap(inst), "coco_ap");
    const MetricsReport r = stratified_report(res);
    expect_same(r.ap, oracle::coco_ap(inst), "ap");
    expect_same(r.ap50, oracle::ap(inst, 0.5), "ap50");
    expect_same(r.ap75, oracle::ap(inst, 0.75), "ap75");
    expect_same(r.ap_s, oracle::coco_ap(oracle::only_stratum(inst, 0)), "ap_s");
    expect_same(r.ap_m, oracle::coco_ap(oracle::only_stratum(inst, 1)), "ap_m");
    expect_same(r.ap_l, oracle::coco_ap(oracle::only_stratum(inst, 2)), "ap_l");
    if (::testing::Test::HasFailure()) break;
  }
}

TEST(ApProperty, InvariantUnderMonotoneScoreTransform) {
  for_all("ap monotone", [](Rng& rng) {
    const auto inst = oracle::random_instance(rng);
    // Replace every score by a strictly increasing function of it, defined
    // on the distinct values so ties stay ties.
    std::vector<double> distinct;
    for (const auto& im : inst) {
      for (const auto& d : im.dets) distinct.push_back(d.score);
    }
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const double a = rng.uniform(-5.0, 5.0), b = rng.uniform(0.1, 3.0);
    auto moved = inst;
    for (auto& im : moved) {
      for (auto& d : im.dets) {
        const auto rank = std::lower_bound(distinct.begin(), distinct.end(), d.score) - distinct.begin();
        d.score = a + b * static_cast<double>(rank) * static_cast<double>(rank + 1);
      }
    }
    const auto x = coco_ap(to_results(inst)), y = coco_ap(to_results(moved));
    ASSERT_EQ(x.has_value(), y.has_value());
    if (x) {
      EXPECT_EQ(*x, *y);
      EXPECT_GE(*x, 0.0);
      EXPECT_LE(*x, 1.0);
    }
  });
}

TEST(ApProperty, LowestFalsePositiveNeverHelps) {
  for_all("ap low fp", [](Rng& rng) {
    auto inst = oracle::random_instance(rng);
    double lo = 0.0;
    for (const auto& im : inst) {
      for (const auto& d : im.dets) lo = std::min(lo, d.score);
    }
    const auto before = to_results(inst);
    inst[rng.uniform_int(0, static_cast<int>(inst.size()) - 1)].dets.push_back(
        {Box(900, 900, 910, 910), lo - 1.0});
    const auto after = to_results(inst);
    for (int t = 0; t < kNumThresholds; ++t) {
      const auto x = ap_at(before, coco_threshold(t)), y = ap_at(after, coco_threshold(t));
      if (x) EXPECT_LE(*y, *x);
    }
  });
}

TEST(ApProperty, TopTruePositiveNeverHurts) {
  for_all("ap top tp", [](Rng& rng) {
    auto inst = oracle::random_instance(rng);
    double hi = 1.0;
    for (const auto& im : inst) {
      for (const auto& d : im.dets) hi = std::max(hi, d.score);
    }
    const auto before = to_results(inst);
    auto& im = inst[rng.uniform_int(0, static_cast<int>(inst.size()) - 1)];
    const Box fresh(900, 900, 940, 930);  // overlaps nothing else
    im.gts.push_back(fresh);
    im.dets.push_back({fresh, hi + 1.0});
    const auto after = to_results(inst);
    for (int t = 0; t < kNumThresholds; ++t) {
      const auto x = ap_at(before, coco_threshold(t)), y = ap_at(after, coco_threshold(t));
      if (x) EXPECT_GE(*y, *x);
    }
  });
}

}  // namespace
}  // namespace noda::eval
