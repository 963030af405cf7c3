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
#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "noda/contrastive.hpp"
#include "noda/rng.hpp"
#include "property.hpp"

namespace noda::contrastive {
namespace {

using noda::testing::for_all;

double ref_cos(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Ordered pairs; the rank of pair k is the number of pairs ranked ahead of
// it (greater similarity, or equal and earlier).
double ref_attraction(const std::vector<Vec>& a, double mu) {
  std::vector<double> s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (i != j) s.push_back(ref_cos(a[i], a[j]));
    }
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    int rank = 0;
    for (std::size_t m = 0; m < s.size(); ++m) {
      if (s[m] > s[k] || (s[m] == s[k] && m < k)) ++rank;
    }
    sum += std::exp(-mu * rank) * s[k];
  }
  const double n = static_cast<double>(a.size());
  return -sum / (n * (n - 1));
}

std::vector<Vec> random_set(Rng& rng, int n, int d) {
  std::vector<Vec> s(n, Vec(d));
  for (auto& v : s) {
    for (double& x : v) x = rng.normal();
  }
  return s;
}

TEST(Separation, SpotValues) {
  EXPECT_EQ(separation_loss({{1, 0}}, {{0, 1}}).loss, 0.0);
  // cos 60 degrees = 0.5 -> -log(0.5) = ln 2.
  const Vec b{0.5, std::sqrt(3.0) / 2.0};
  EXPECT_NEAR(separation_loss({{1, 0}}, {b}).loss, 0.693147180559945, 1e-9);
  EXPECT_NEAR(separation_loss({{1, 0}}, {b}).loss, std::log(2.0), 1e-12);
}

TEST(Separation, ClampedPairIsLargeAndFlat) {
  const auto r = separation_loss({{1, 2}}, {{1, 2}}, 1e-6);
  EXPECT_NEAR(r.loss, -std::log(1e-6), 1e-9);
  EXPECT_EQ(r.grads_a[0], (Vec{0, 0}));
}

TEST(Separation, Errors) {
  EXPECT_THROW(separation_loss({}, {{1, 0}}), std::invalid_argument);
  EXPECT_THROW(separation_loss({{1, 0}}, {{1, 0, 0}}), std::invalid_argument);
}

TEST(SeparationProperty, NonNegativeAndMonotone) {
  for_all("separation", [](Rng& rng) {
    const int d = rng.uniform_int(2, 6);
    // Positive orthant keeps every similarity >= 0.
    auto pos = [&](int n) {
      auto s = random_set(rng, n, d);
      for (auto& v : s) {
        for (double& x : v) x = std::abs(x) + 1e-3;
      }
      return s;
    };
    const auto a = pos(rng.uniform_int(1, 4)), b = pos(rng.uniform_int(1, 4));
    EXPECT_GE(separation_loss(a, b).loss, 0.0);
    // With a single anchor, rotating b[0] toward it raises exactly one similarity.
    const std::vector<Vec> a1{a[0]};
    auto b2 = b;
    for (int i = 0; i < d; ++i) b2[0][i] = 0.5 * b[0][i] / std::sqrt(ref_cos(b[0], b[0])) +
                                         0.5 * a[0][i] / std::sqrt(ref_cos(a[0], a[0]));
    if (ref_cos(a[0], b2[0]) > ref_cos(a[0], b[0]) + 1e-9) {
      EXPECT_GT(separation_loss(a1, b2).loss, separation_loss(a1, b).loss);
    }
  });
}

TEST(RankWeights, SpotValues) {
  const auto w = rank_weights({0.9, 0.1}, 1.0);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_NEAR(w[1], 0.36787944117144233, 1e-15);
  const auto v = rank_weights({0.1, 0.9}, 1.0);
  EXPECT_NEAR(v[0], 0.36787944117144233, 1e-15);
  EXPECT_EQ(v[1], 1.0);
  for (double x : rank_weights({0.3, -0.2, 0.7}, 0.0)) EXPECT_EQ(x, 1.0);
  const auto tie = rank_weights({0.5, 0.5}, 1.0);
  EXPECT_EQ(tie[0], 1.0);
  EXPECT_NEAR(tie[1], std::exp(-1.0), 1e-15);
}

TEST(RankWeightsProperty, NonIncreasingAlongSimilarityOrder) {
  for_all("rank weights", [](Rng& rng) {
    std::vector<double> s(rng.uniform_int(1, 30));
    for (double& x : s) x = rng.bernoulli(0.2) ? 0.5 : rng.uniform(-1.0, 1.0);
    const double mu = rng.uniform(0.0, 3.0);
    const auto w = rank_weights(s, mu);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (s[i] > s[j]) EXPECT_GT(w[i], w[j]);
        if (s[i] == s[j] && i < j && mu > 0) EXPECT_GT(w[i], w[j]);
      }
    }
    EXPECT_EQ(*std::max_element(w.begin(), w.end()), 1.0);
  });
}

TEST(Attraction, SpotValues) {
  const RankWeightConfig mu0{0.0};
  EXPECT_NEAR(attraction_loss({{1, 0}, {1, 0}}, mu0).loss, -1.0, 1e-12);
  EXPECT_EQ(attraction_loss({{1, 0}, {0, 1}}, RankWeightConfig{0.7}).loss, 0.0);
  EXPECT_THROW(attraction_loss({{1, 0}}, mu0), std::invalid_argument);
}

TEST(Attraction, ThreeVectorsMatchBruteForce) {
  const std::vector<Vec> a{{1, 0, 0.5}, {0.2, 1, 0}, {-0.3, 0.4, 1}};
  EXPECT_NEAR(attraction_loss(a, RankWeightConfig{0.5}).loss, ref_attraction(a, 0.5), 1e-10);
}

TEST(AttractionProperty, MatchesBruteForce) {
  for_all("attraction oracle", [](Rng& rng) {
    const auto a = random_set(rng, rng.uniform_int(2, 6), rng.uniform_int(1, 6));
    const double mu = rng.uniform(0.0, 2.0);
    EXPECT_NEAR(attraction_loss(a, RankWeightConfig{mu}).loss, ref_attraction(a, mu), 1e-10);
  });
}

TEST(AttractionProperty, ParallelPairIsMinimum) {
  for_all("attraction minimum", [](Rng& rng) {
    const auto a = random_set(rng, 2, rng.uniform_int(2, 6));
    const double loss = attraction_loss(a, RankWeightConfig{0.0}).loss;
    EXPECT_GE(loss, -1.0 - 1e-12);
    Vec scaled = a[0];
    const double k = rng.uniform(0.1, 5.0);
    for (double& x : scaled) x *= k;
    EXPECT_NEAR(attraction_loss({a[0], scaled}, RankWeightConfig{0.0}).loss, -1.0, 1e-12);
  });
}

TEST(Region, ComposedExample) {
  ContrastiveConfig cfg;
  cfg.mu = 0.0;
  const Vec u{1, 0}, v{0, 1};
  const auto r = region_loss({u, u}, {v, v}, cfg);
  EXPECT_NEAR(r.breakdown.separation, 0.0, 1e-15);
  EXPECT_NEAR(r.breakdown.attract_pos, -1.0, 1e-12);
  EXPECT_NEAR(r.breakdown.attract_neg, -1.0, 1e-12);
  EXPECT_NEAR(r.loss, -2.0, 1e-12);
}

TEST(Region, IdenticalSetsAreDominatedByClamp) {
  ContrastiveConfig cfg;
  const std::vector<Vec> s{{1, 2}, {1, 2}};
  const auto r = region_loss(s, s, cfg);
  EXPECT_NEAR(r.breakdown.separation, -std::log(cfg.sim_clamp_eps), 1e-9);
  EXPECT_GT(r.loss, 10.0);
}

TEST(Region, DegenerateSets) {
  ContrastiveConfig cfg;
  const auto one = region_loss({{1, 0}}, {{0, 1}, {1, 1}}, cfg);
  EXPECT_TRUE(one.breakdown.has_separation);
  EXPECT_FALSE(one.breakdown.has_attract_pos);
  EXPECT_TRUE(one.breakdown.has_attract_neg);
  const auto neg_only = region_loss({}, {{0, 1}, {1, 1}}, cfg);
  EXPECT_FALSE(neg_only.breakdown.has_separation);
  EXPECT_THROW(region_loss({}, {}, cfg), std::invalid_argument);
}

TEST(SalientPixels, ChannelSumExample) {
  Grid3 g(2, 2, 2);
  // channel 0 [[1,2],[0,1]], channel 1 [[2,-1],[0,1]] -> saliency [[3,1],[0,2]]
  g.values = {1, 2, 0, 1, 2, -1, 0, 1};
  const auto s = sample_salient_pixels({g}, 2);
  ASSERT_EQ(s.items.size(), 2u);
  EXPECT_EQ(s.items[0], (Vec{1, 2}));
  EXPECT_EQ(s.refs[0].y, 0);
  EXPECT_EQ(s.refs[0].x, 0);
  EXPECT_EQ(s.items[1], (Vec{1, 1}));
  EXPECT_EQ(s.refs[1].y, 1);
  EXPECT_EQ(s.refs[1].x, 1);
}

TEST(SalientPixels, OversizedCountAndTies) {
  Grid3 g(2, 2, 2);
  g.values = {1, 2, 0, 1, 2, -1, 0, 1};
  const auto all = sample_salient_pixels({g}, 10);
  ASSERT_EQ(all.items.size(), 4u);
  EXPECT_EQ(all.items[3], (Vec{0, 0}));
  Grid3 flat(3, 2, 3);
  std::fill(flat.values.begin(), flat.values.end(), 0.25);
  const auto t = sample_salient_pixels({flat, flat}, 4);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(t.refs[k].region, 0u);
    EXPECT_EQ(t.refs[k].y * 3 + t.refs[k].x, k);
  }
}

TEST(SalientPixels, PoolsAcrossRegions) {
  Grid3 a(1, 1, 2), b(1, 1, 2);
  a.values = {1, 5};
  b.values = {4, 2};
  const auto s = sample_salient_pixels({a, b}, 2);
  EXPECT_EQ(s.refs[0].region, 0u);
  EXPECT_EQ(s.refs[1].region, 1u);
}

TEST(Pixel, ComposedExample) {
  ContrastiveConfig cfg;
  cfg.mu = 0.0;
  cfg.p = 2;
  cfg.q = 2;
  // Positive pixels along e0, negatives along e1; a weak third pixel each.
  Grid3 pos(2, 1, 3), neg(2, 1, 3);
  pos.values = {3, 2, 0.5, 0, 0, 0.1};
  neg.values = {0, 0, 0.1, 3, 2, 0.5};
  const auto r = pixel_loss({pos}, {neg}, cfg);
  EXPECT_NEAR(r.loss, -2.0, 1e-12);
  // Unsampled locations get no gradient.
  EXPECT_EQ(r.grads_pos[0].at(0, 0, 2), 0.0);
  EXPECT_EQ(r.grads_pos[0].at(1, 0, 2), 0.0);
}

TEST(Pixel, SinglePixelPerSideKeepsOnlySeparation) {
  ContrastiveConfig cfg;
  cfg.p = 1;
  cfg.q = 1;
  Grid3 pos(2, 1, 1), neg(2, 1, 1);
  pos.values = {1, 0};
  neg.values = {0.5, std::sqrt(3.0) / 2.0};
  const auto r = pixel_loss({pos}, {neg}, cfg);
  EXPECT_TRUE(r.breakdown.has_separation);
  EXPECT_FALSE(r.breakdown.has_attract_pos);
  EXPECT_FALSE(r.breakdown.has_attract_neg);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
}

TEST(Hierarchical, Examples) {
  EXPECT_NEAR(hierarchical_loss(-2.0, -1.0, 0.7), -1.7, 1e-15);
  EXPECT_EQ(hierarchical_loss(-2.0, -1.0, 1.0), -2.0);
  EXPECT_EQ(hierarchical_loss(-2.0, -1.0, 0.0), -1.0);
  EXPECT_THROW(hierarchical_loss(1, 1, 1.5), std::invalid_argument);
}

TEST(HierarchicalProperty, AffineInLambda) {
  for_all("hierarchical affine", [](Rng& rng) {
    const double r = rng.normal(), p = rng.normal(), l = rng.uniform();
    const double v = hierarchical_loss(r, p, l);
    EXPECT_NEAR(v, l * hierarchical_loss(r, p, 1.0) + (1 - l) * hierarchical_loss(r, p, 0.0),
                1e-14);
  });
}

TEST(ContrastiveConfig, ValidationNamesField) {
  ContrastiveConfig c;
  c.lambda = 1.5;
  try {
    c.validate();
    FAIL() << "expected a validation error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("lambda"), std::string::npos);
  }
}

}  // namespace
}  // namespace noda::contrastive
