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

#include "noda/adversarial.hpp"
#include "noda/rng.hpp"
#include "property.hpp"

namespace noda::adversarial {
namespace {

using noda::testing::for_all;

TEST(Classifier, ZeroWeightsGiveHalf) {
  const DomainClassifier c(ClassifierShape{4, 3});
  EXPECT_EQ(classifier_forward(Vec{1, -2, 3, 4}, c), 0.5);
}

TEST(Classifier, ClampedLogitStaysBelowOne) {
  DomainClassifier c(ClassifierShape{1, 1});
  c.params[c.shape.b2()] = 100.0;
  const double p = classifier_forward(Vec{0.0}, c);
  EXPECT_LT(p, 1.0);
  EXPECT_NEAR(p, 1.0, 1e-13);
  EXPECT_EQ(p, 1.0 / (1.0 + std::exp(-30.0)));
}

TEST(Classifier, DimensionMismatchThrows) {
  const DomainClassifier c(ClassifierShape{4, 3});
  EXPECT_THROW(classifier_forward(Vec{1, 2}, c), std::invalid_argument);
}

TEST(DomainLoss, SpotValues) {
  EXPECT_NEAR(domain_cls_loss(0.5, DomainLabel::kSource).loss, 0.693147180559945, 1e-9);
  EXPECT_NEAR(domain_cls_loss(0.99, DomainLabel::kTarget).loss, 0.01005033585350145, 1e-12);
  EXPECT_LT(domain_cls_loss(1.0 - 1e-12, DomainLabel::kTarget).loss, 1e-11);
  const auto l = domain_cls_loss(0.25, DomainLabel::kTarget);
  EXPECT_DOUBLE_EQ(l.d_prob, -1.0 / 0.25);
}

TEST(DomainLossProperty, NonNegative) {
  for_all("cls loss", [](Rng& rng) {
    const double p = rng.uniform(1e-9, 1.0 - 1e-9);
    EXPECT_GE(domain_cls_loss(p, DomainLabel::kSource).loss, 0.0);
    EXPECT_GE(domain_cls_loss(p, DomainLabel::kTarget).loss, 0.0);
  });
}

TEST(Grl, Examples) {
  EXPECT_EQ(grl_transform(Vec{1, -2}, 1.0), (Vec{-1, 2}));
  EXPECT_EQ(grl_transform(Vec{1, -2}, 0.0), (Vec{-0.0, 0.0}));
  EXPECT_EQ(grl_transform(Vec{2, -4}, 0.5), (Vec{-1, 2}));
  EXPECT_THROW(grl_transform(Vec{1}, -1.0), std::invalid_argument);
}

TEST(GrlProperty, Linear) {
  for_all("grl linear", [](Rng& rng) {
    const int n = rng.uniform_int(1, 8);
    Vec a(n), b(n), sum(n), scaled(n);
    const double g = rng.uniform(0.0, 3.0), c = rng.normal();
    for (int i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      sum[i] = a[i] + b[i];
      scaled[i] = c * a[i];
    }
    const Vec ga = grl_transform(a, g), gb = grl_transform(b, g);
    const Vec gs = grl_transform(sum, g), gc = grl_transform(scaled, g);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(gs[i], ga[i] + gb[i], 1e-12);
      EXPECT_NEAR(gc[i], c * ga[i], 1e-12);
    }
  });
}

TEST(Ndl, SingleSourceFeatureAtHalf) {
  Rng rng(5);
  DomainClassifier c = DomainClassifier::init(ClassifierShape{4, 3}, rng, 0.5);
  std::fill(c.params.begin() + c.shape.w2(), c.params.end(), 0.0);  // logit 0
  const std::vector<Vec> f{{0.1, -0.2, 0.3, 0.4}};
  const auto r = ndl_step(f, {DomainLabel::kSource}, c, 0.7);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
  // The output weights are zero, so nothing reaches the feature.
  for (double g : r.feature_grads[0]) EXPECT_EQ(g, 0.0);
}

TEST(Ndl, FeatureGradientIsReversedAndScaled) {
  Rng rng(11);
  const DomainClassifier c = DomainClassifier::init(ClassifierShape{4, 5}, rng, 0.8);
  const std::vector<Vec> f{{0.3, -1.0, 0.5, 0.2}, {1.0, 0.1, -0.4, 0.9}};
  const std::vector<DomainLabel> lab{DomainLabel::kSource, DomainLabel::kTarget};
  const auto one = ndl_step(f, lab, c, 1.0);
  const auto half = ndl_step(f, lab, c, 0.5);
  const auto off = ndl_step(f, lab, c, 0.0);
  for (std::size_t n = 0; n < f.size(); ++n) {
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(half.feature_grads[n][i], 0.5 * one.feature_grads[n][i], 1e-15);
      EXPECT_EQ(off.feature_grads[n][i], 0.0);
      // Finite difference of the loss itself; the reported gradient is its negation.
      auto shifted = f;
      shifted[n][i] += 1e-6;
      const double up = ndl_step(shifted, lab, c, 1.0).loss;
      shifted[n][i] -= 2e-6;
      const double dn = ndl_step(shifted, lab, c, 1.0).loss;
      EXPECT_NEAR(one.feature_grads[n][i], -(up - dn) / 2e-6, 1e-7);
    }
  }
  EXPECT_EQ(one.classifier_grads, off.classifier_grads);
}

TEST(Ndl, EmptyBatchThrows) {
  const DomainClassifier c(ClassifierShape{2, 2});
  EXPECT_THROW(ndl_step({}, {}, c, 1.0), std::invalid_argument);
  EXPECT_THROW(ndl_step({{1, 2}}, {}, c, 1.0), std::invalid_argument);
}

TEST(NdlProperty, DescentStepReducesLossOnSeparableToy) {
  for_all("ndl descent", [](Rng& rng) {
    DomainClassifier c = DomainClassifier::init(ClassifierShape{3, 4}, rng, 0.3);
    std::vector<Vec> f;
    std::vector<DomainLabel> lab;
    for (int i = 0; i < 8; ++i) {
      const bool tgt = i % 2 == 1;
      f.push_back({(tgt ? 1.0 : -1.0) + 0.1 * rng.normal(), 0.1 * rng.normal(), 0.1 * rng.normal()});
      lab.push_back(tgt ? DomainLabel::kTarget : DomainLabel::kSource);
    }
    const auto r = ndl_step(f, lab, c, 1.0);
    DomainClassifier next = c;
    next.params = sgd_step(c.params, r.classifier_grads, 1e-3);
    EXPECT_LT(ndl_step(f, lab, next, 1.0).loss, r.loss);
  });
}

}  // namespace
}  // namespace noda::adversarial
