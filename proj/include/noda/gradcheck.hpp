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
#ifndef NODA_GRADCHECK_HPP_
#define NODA_GRADCHECK_HPP_

// Registered finite-difference suites, one per differentiable operation.
// Each case draws fresh random inputs from its own stream and returns the
// max relative error of the analytic gradient.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "noda/adversarial.hpp"
#include "noda/contrastive.hpp"
#include "noda/detector.hpp"
#include "noda/geometry.hpp"
#include "noda/numerics.hpp"
#include "noda/rng.hpp"

namespace noda::gradcheck {

inline constexpr double kTolerance = 1e-4;
inline constexpr double kStep = 1e-5;
inline constexpr int kDefaultCases = 100;

struct Suite {
  std::string name;
  std::function<double(Rng&)> run_case;
};

struct SuiteResult {
  std::string name;
  int cases = 0;
  double max_rel_err = 0.0;
  double seconds = 0.0;

  bool passed() const { return max_rel_err < kTolerance; }
};

namespace detail {

inline Vec normal_vec(Rng& rng, int n) {
  Vec v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

inline std::vector<Vec> normal_set(Rng& rng, int count, int dim) {
  std::vector<Vec> s;
  for (int i = 0; i < count; ++i) s.push_back(normal_vec(rng, dim));
  return s;
}

// Flattening helpers so a loss over several vectors becomes f(x).
inline Vec concat(const std::vector<Vec>& a, const std::vector<Vec>& b = {}) {
  Vec out;
  for (const Vec& v : a) out.insert(out.end(), v.begin(), v.end());
  for (const Vec& v : b) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline std::vector<Vec> split(std::span<const double> x, std::size_t offset, int count, int dim) {
  std::vector<Vec> s;
  for (int i = 0; i < count; ++i) {
    const auto* p = x.data() + offset + static_cast<std::size_t>(i) * dim;
    s.emplace_back(p, p + dim);
  }
  return s;
}

inline Grid3 random_grid(Rng& rng, int c, int h, int w) {
  Grid3 g(c, h, w);
  for (double& v : g.values) v = rng.normal();
  return g;
}

inline std::vector<Grid3> grids_of(std::span<const double> x, std::size_t offset, int count,
                                   int c, int h, int w) {
  std::vector<Grid3> out;
  const std::size_t n = static_cast<std::size_t>(c) * h * w;
  for (int i = 0; i < count; ++i) {
    Grid3 g(c, h, w);
    std::copy_n(x.data() + offset + i * n, n, g.values.begin());
    out.push_back(std::move(g));
  }
  return out;
}

inline Vec flatten(const std::vector<Grid3>& a, const std::vector<Grid3>& b = {}) {
  Vec out;
  for (const Grid3& g : a) out.insert(out.end(), g.values.begin(), g.values.end());
  for (const Grid3& g : b) out.insert(out.end(), g.values.begin(), g.values.end());
  return out;
}

// ---------------------------------------------------------------- cases

inline double cosine_case(Rng& rng) {
  const int n = static_cast<int>(rng.uniform_int(2, 16));
  const Vec x = concat({normal_vec(rng, n), normal_vec(rng, n)});
  auto f = [n](std::span<const double> v) {
    return cosine_sim(v.subspan(0, n), v.subspan(n, n));
  };
  const SimGrad g = cosine_sim_grad(std::span(x).subspan(0, n), std::span(x).subspan(n, n));
  return finite_diff_check(f, x, concat({g.d_a, g.d_b}), kStep);
}

inline double separation_case(Rng& rng) {
  const int na = static_cast<int>(rng.uniform_int(1, 4));
  const int nb = static_cast<int>(rng.uniform_int(1, 4));
  const int d = static_cast<int>(rng.uniform_int(2, 8));
  const Vec x = concat(normal_set(rng, na, d), normal_set(rng, nb, d));
  auto f = [&](std::span<const double> v) {
    return contrastive::separation_loss(split(v, 0, na, d), split(v, na * d, nb, d)).loss;
  };
  const auto r = contrastive::separation_loss(split(x, 0, na, d), split(x, na * d, nb, d));
  return finite_diff_check(f, x, concat(r.grads_a, r.grads_b), kStep);
}

inline double attraction_case(Rng& rng) {
  const int n = static_cast<int>(rng.uniform_int(2, 5));
  const int d = static_cast<int>(rng.uniform_int(2, 8));
  const contrastive::RankWeightConfig cfg{rng.uniform(0.0, 2.0)};
  const Vec x = concat(normal_set(rng, n, d));
  auto f = [&](std::span<const double> v) {
    return contrastive::attraction_loss(split(v, 0, n, d), cfg).loss;
  };
  return finite_diff_check(f, x, concat(contrastive::attraction_loss(split(x, 0, n, d), cfg).grads),
                           kStep);
}

inline contrastive::ContrastiveConfig random_contrastive(Rng& rng) {
  contrastive::ContrastiveConfig cfg;
  cfg.lambda = rng.uniform();
  cfg.mu = rng.uniform(0.0, 2.0);
  cfg.p = static_cast<int>(rng.uniform_int(2, 6));
  cfg.q = static_cast<int>(rng.uniform_int(2, 6));
  return cfg;
}

inline double region_case(Rng& rng) {
  const auto cfg = random_contrastive(rng);
  int np = static_cast<int>(rng.uniform_int(0, 4));
  const int nn = static_cast<int>(rng.uniform_int(np == 0 ? 1 : 0, 4));
  const int d = static_cast<int>(rng.uniform_int(2, 8));
  const Vec x = concat(normal_set(rng, np, d), normal_set(rng, nn, d));
  auto f = [&](std::span<const double> v) {
    return contrastive::region_loss(split(v, 0, np, d), split(v, np * d, nn, d), cfg).loss;
  };
  const auto r = contrastive::region_loss(split(x, 0, np, d), split(x, np * d, nn, d), cfg);
  return finite_diff_check(f, x, concat(r.grads_pos, r.grads_neg), kStep);
}

struct GridSets {
  int np, nn, c, h, w;
  std::size_t stride() const { return static_cast<std::size_t>(c) * h * w; }
};

inline GridSets random_grid_sets(Rng& rng) {
  GridSets s;
  s.np = static_cast<int>(rng.uniform_int(0, 3));
  s.nn = static_cast<int>(rng.uniform_int(s.np == 0 ? 1 : 0, 3));
  s.c = static_cast<int>(rng.uniform_int(2, 6));
  s.h = static_cast<int>(rng.uniform_int(1, 3));
  s.w = static_cast<int>(rng.uniform_int(1, 3));
  return s;
}

inline Vec random_grids(Rng& rng, const GridSets& s) {
  std::vector<Grid3> a, b;
  for (int i = 0; i < s.np; ++i) a.push_back(random_grid(rng, s.c, s.h, s.w));
  for (int i = 0; i < s.nn; ++i) b.push_back(random_grid(rng, s.c, s.h, s.w));
  return flatten(a, b);
}

inline double pixel_case(Rng& rng) {
  const auto cfg = random_contrastive(rng);
  const GridSets s = random_grid_sets(rng);
  const Vec x = random_grids(rng, s);
  auto eval = [&](std::span<const double> v) {
    return contrastive::pixel_loss(grids_of(v, 0, s.np, s.c, s.h, s.w),
                                   grids_of(v, s.np * s.stride(), s.nn, s.c, s.h, s.w), cfg);
  };
  const auto r = eval(x);
  return finite_diff_check([&](std::span<const double> v) { return eval(v).loss; }, x,
                           flatten(r.grads_pos, r.grads_neg), kStep);
}

// lambda * region(flat ROI) + (1 - lambda) * pixel(ROI grid), both read from
// the same pooled grids.
inline double hierarchical_case(Rng& rng) {
  const auto cfg = random_contrastive(rng);
  const GridSets s = random_grid_sets(rng);
  const Vec x = random_grids(rng, s);
  const int d = static_cast<int>(s.stride());
  auto parts = [&](std::span<const double> v) {
    auto pos = grids_of(v, 0, s.np, s.c, s.h, s.w);
    auto neg = grids_of(v, s.np * s.stride(), s.nn, s.c, s.h, s.w);
    auto r = contrastive::region_loss(split(v, 0, s.np, d), split(v, s.np * s.stride(), s.nn, d),
                                      cfg);
    auto p = contrastive::pixel_loss(pos, neg, cfg);
    return std::pair(std::move(r), std::move(p));
  };
  auto f = [&](std::span<const double> v) {
    const auto [r, p] = parts(v);
    return contrastive::hierarchical_loss(r.loss, p.loss, cfg.lambda);
  };
  const auto [r, p] = parts(x);
  Vec g = concat(r.grads_pos, r.grads_neg);
  const Vec gp = flatten(p.grads_pos, p.grads_neg);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = cfg.lambda * g[i] + (1.0 - cfg.lambda) * gp[i];
  return finite_diff_check(f, x, g, kStep);
}

inline double domain_loss_case(Rng& rng) {
  const Vec x{rng.uniform(0.01, 0.99)};
  const auto label =
      rng.bernoulli(0.5) ? adversarial::DomainLabel::kTarget : adversarial::DomainLabel::kSource;
  auto f = [&](std::span<const double> v) { return adversarial::domain_cls_loss(v[0], label).loss; };
  return finite_diff_check(f, x, Vec{adversarial::domain_cls_loss(x[0], label).d_prob}, kStep);
}

struct NdlProblem {
  adversarial::DomainClassifier clf;
  std::vector<Vec> features;
  std::vector<adversarial::DomainLabel> labels;
  double gamma = 1.0;
};

inline NdlProblem random_ndl(Rng& rng) {
  NdlProblem p;
  const adversarial::ClassifierShape shape{static_cast<int>(rng.uniform_int(2, 8)),
                                           static_cast<int>(rng.uniform_int(2, 6))};
  p.clf = adversarial::DomainClassifier::init(shape, rng, 0.8);
  const int n = static_cast<int>(rng.uniform_int(1, 4));
  p.features = normal_set(rng, n, shape.input);
  for (int i = 0; i < n; ++i) {
    p.labels.push_back(rng.bernoulli(0.5) ? adversarial::DomainLabel::kTarget
                                          : adversarial::DomainLabel::kSource);
  }
  p.gamma = rng.uniform(0.1, 2.0);
  return p;
}

inline double ndl_classifier_case(Rng& rng) {
  const NdlProblem p = random_ndl(rng);
  auto f = [&](std::span<const double> v) {
    adversarial::DomainClassifier c = p.clf;
    c.params.assign(v.begin(), v.end());
    return adversarial::ndl_step(p.features, p.labels, c, p.gamma).loss;
  };
  const auto r = adversarial::ndl_step(p.features, p.labels, p.clf, p.gamma);
  return finite_diff_check(f, p.clf.params, r.classifier_grads, kStep);
}

// The reported feature gradient must be -gamma times dL/d(feature).
inline double ndl_feature_case(Rng& rng) {
  const NdlProblem p = random_ndl(rng);
  const int d = p.clf.shape.input;
  const int n = static_cast<int>(p.features.size());
  auto f = [&](std::span<const double> v) {
    return -p.gamma * adversarial::ndl_step(split(v, 0, n, d), p.labels, p.clf, p.gamma).loss;
  };
  const auto r = adversarial::ndl_step(p.features, p.labels, p.clf, p.gamma);
  return finite_diff_check(f, concat(p.features), concat(r.feature_grads), kStep);
}

// detection_loss(heads(roi_pool(encode(image)))) on a 16x16 image. Each case
// probes a random subset of parameters drawn from every layer.
inline double detector_case(Rng& rng) {
  using namespace detector;
  constexpr int kSize = 16;
  Grid3 image(1, kSize, kSize);
  for (double& v : image.values) v = rng.uniform();
  const ParamVec params = init_params(rng, 0.3, 1.0, 0.3);

  std::vector<Box> labels;
  const double s = rng.uniform(4.0, 8.0);
  const double x0 = rng.uniform(0.0, kSize - s);
  const double y0 = rng.uniform(0.0, kSize - s);
  labels.emplace_back(x0, y0, x0 + s, y0 + s);

  std::vector<Box> proposals;
  for (const Proposal& p : propose(kSize, kSize, 4, {6, 10})) proposals.push_back(p.box);
  DetectorConfig jcfg;
  jcfg.jitter_copies = 3;
  for (const Proposal& p : jittered_proposals(labels, kSize, kSize, jcfg, rng)) {
    proposals.push_back(p.box);
  }
  const ProposalMatch match = match_proposals(proposals, labels, 0.5);

  auto f = [&](std::span<const double> v) {
    const ForwardPass fp = forward(image, v, proposals);
    return detection_loss(fp.outputs, proposals, match, labels).loss;
  };
  const ForwardPass fp = forward(image, params, proposals);
  const DetectionLoss loss = detection_loss(fp.outputs, proposals, match, labels);
  RoiGrads up(proposals.size());
  up.d_logit = loss.d_logit;
  up.d_deltas = loss.d_deltas;
  ParamVec grads(params.size(), 0.0);
  backward(fp, up, 1.0, params, grads);

  const std::size_t bounds[] = {Layout::kConv1W, Layout::kConv1B, Layout::kConv2W,
                                Layout::kConv2B, Layout::kObjW,   Layout::kObjB,
                                Layout::kDeltaW, Layout::kDeltaB, Layout::kSize};
  std::vector<std::size_t> probe;
  for (int b = 0; b + 1 < 9; ++b) {
    const auto lo = static_cast<std::int64_t>(bounds[b]);
    const auto hi = static_cast<std::int64_t>(bounds[b + 1]) - 1;
    for (int k = 0; k < 6; ++k) probe.push_back(static_cast<std::size_t>(rng.uniform_int(lo, hi)));
  }
  return finite_diff_check(f, params, grads, kStep, probe);
}

}  // namespace detail

inline const std::vector<Suite>& suites() {
  static const std::vector<Suite> all = {
      {"cosine", detail::cosine_case},
      {"separation", detail::separation_case},
      {"attraction", detail::attraction_case},
      {"region", detail::region_case},
      {"pixel", detail::pixel_case},
      {"hierarchical", detail::hierarchical_case},
      {"domain_loss", detail::domain_loss_case},
      {"ndl_classifier", detail::ndl_classifier_case},
      {"ndl_feature_grl", detail::ndl_feature_case},
      {"detector_e2e", detail::detector_case},
  };
  return all;
}

inline SuiteResult run_suite(const Suite& suite, int cases, std::uint64_t seed) {
  if (cases < 1) throw std::invalid_argument("gradcheck: cases must be >= 1");
  SuiteResult r{suite.name, cases, 0.0, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  // Suite-specific stream so suites can be run alone with the same inputs.
  std::uint64_t key = 0;
  for (char c : suite.name) key = key * 131 + static_cast<unsigned char>(c);
  const Rng base = Rng(seed).split(key);
  for (int i = 0; i < cases; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    r.max_rel_err = std::max(r.max_rel_err, suite.run_case(rng));
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::vector<SuiteResult> run_all(int cases = kDefaultCases, std::uint64_t seed = 0) {
  std::vector<SuiteResult> out;
  for (const Suite& s : suites()) out.push_back(run_suite(s, cases, seed));
  return out;
}

}  // namespace noda::gradcheck

#endif  // NODA_GRADCHECK_HPP_
