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
#ifndef NODA_CONTRASTIVE_HPP_
#define NODA_CONTRASTIVE_HPP_

// Hierarchical foreground/background contrastive losses.
//
// Two building blocks operate on sets of feature vectors:
//
//   separation  D(A,B)  = -1/(|A||B|) sum_{a,b} log(1 - sim(a,b))
//   attraction  Dbar(A) = -1/(|A|(|A|-1)) sum_{a1 != a2} w(a1,a2) sim(a1,a2)
//
// where w = exp(-mu * rank) and rank is the 0-based position of the pair in
// descending-similarity order over all ordered pairs. Region and pixel losses
// are D(pos,neg) + Dbar(pos) + Dbar(neg) on proposal embeddings and on
// salient pixel vectors respectively, and the hierarchical loss mixes them as
// lambda * region + (1 - lambda) * pixel.
//
// Rank weights and salient-pixel selections are piecewise constant in the
// inputs and are held fixed when differentiating.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "noda/numerics.hpp"

namespace noda::contrastive {

struct RankWeightConfig {
  double mu = 0.5;
};

struct ContrastiveConfig {
  double lambda = 0.7;
  double mu = 0.5;
  double sim_clamp_eps = 1e-6;
  int p = 16;
  int q = 16;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw std::invalid_argument("lambda must be in [0, 1], got " +
                                  std::to_string(lambda));
    }
    if (!(mu >= 0.0) || !std::isfinite(mu)) {
      throw std::invalid_argument("mu must be finite and >= 0");
    }
    if (!(sim_clamp_eps > 0.0 && sim_clamp_eps < 1.0)) {
      throw std::invalid_argument("sim_clamp_eps must be in (0, 1)");
    }
    if (p < 1 || q < 1) throw std::invalid_argument("p and q must be >= 1");
  }
};

// Loss value plus the gradient with respect to every input item.
struct SetLoss {
  double loss = 0.0;
  std::vector<Vec> grads;
};

struct PairLoss {
  double loss = 0.0;
  std::vector<Vec> grads_a;
  std::vector<Vec> grads_b;
};

namespace detail {

inline void check_set(const std::vector<Vec>& s, const char* what) {
  if (s.empty()) throw std::invalid_argument(std::string(what) + ": empty set");
  const std::size_t dim = s.front().size();
  for (const Vec& v : s) {
    if (v.size() != dim) {
      throw std::invalid_argument(std::string(what) + ": dimension mismatch");
    }
  }
}

inline std::vector<Vec> zeros_like(const std::vector<Vec>& s) {
  std::vector<Vec> out;
  out.reserve(s.size());
  for (const Vec& v : s) out.emplace_back(v.size(), 0.0);
  return out;
}

}  // namespace detail

inline PairLoss separation_loss(const std::vector<Vec>& a,
                                const std::vector<Vec>& b,
                                double sim_clamp_eps = 1e-6) {
  detail::check_set(a, "separation_loss");
  detail::check_set(b, "separation_loss");
  if (a.front().size() != b.front().size()) {
    throw std::invalid_argument("separation_loss: dimension mismatch");
  }
  const double scale = 1.0 / (static_cast<double>(a.size()) * b.size());
  const double cap = 1.0 - sim_clamp_eps;
  PairLoss out{0.0, detail::zeros_like(a), detail::zeros_like(b)};
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double s = cosine_sim(a[i], b[j]);
      if (s >= cap) {
        sum += std::log(sim_clamp_eps);
        continue;  // clamped: zero gradient
      }
      sum += std::log(1.0 - s);
      const double ds = scale / (1.0 - s);
      const SimGrad g = cosine_sim_grad(a[i], b[j]);
      axpy(ds, g.d_a, out.grads_a[i]);
      axpy(ds, g.d_b, out.grads_b[j]);
    }
  }
  out.loss = -scale * sum;
  return out;
}

/// exp(-mu * rank) with 0-based descending-similarity ranks; ties keep input
/// order, so the first of two equal similarities gets the larger weight.
inline std::vector<double> rank_weights(const std::vector<double>& sims,
                                        double mu) {
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sims[x] > sims[y]; });
  std::vector<double> w(sims.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    w[order[r]] = std::exp(-mu * static_cast<double>(r));
  }
  return w;
}

/// Rank-weighted attraction over all ordered pairs (i, j), i != j, enumerated
/// row-major. Requires at least two items.
inline SetLoss attraction_loss(const std::vector<Vec>& a,
                               const RankWeightConfig& cfg) {
  detail::check_set(a, "attraction_loss");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("attraction_loss: need >= 2 items");

  std::vector<double> sims;
  sims.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) sims.push_back(cosine_sim(a[i], a[j]));
    }
  }
  const std::vector<double> w = rank_weights(sims, cfg.mu);
  const double scale = 1.0 / (static_cast<double>(n) * (n - 1));

  SetLoss out{0.0, detail::zeros_like(a)};
  double sum = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum += w[k] * sims[k];
      const SimGrad g = cosine_sim_grad(a[i], a[j]);
      axpy(-scale * w[k], g.d_a, out.grads[i]);
      axpy(-scale * w[k], g.d_b, out.grads[j]);
      ++k;
    }
  }
  out.loss = -scale * sum;
  return out;
}

// Which of the three terms were evaluated, and their values.
struct LossBreakdown {
  double separation = 0.0;
  double attract_pos = 0.0;
  double attract_neg = 0.0;
  bool has_separation = false;
  bool has_attract_pos = false;
  bool has_attract_neg = false;

  double total() const { return separation + attract_pos + attract_neg; }
};

struct TripleLoss {
  double loss = 0.0;
  LossBreakdown breakdown;
  std::vector<Vec> grads_pos;
  std::vector<Vec> grads_neg;
};

/// D(pos, neg) + Dbar(pos) + Dbar(neg). A set with fewer than two items
/// skips its attraction term; an empty set also skips the separation term.
/// Both sets empty is an error.
inline TripleLoss region_loss(const std::vector<Vec>& pos,
                              const std::vector<Vec>& neg,
                              const ContrastiveConfig& cfg) {
  if (pos.empty() && neg.empty()) {
    throw std::invalid_argument("region_loss: both sets empty");
  }
  TripleLoss out;
  out.grads_pos = detail::zeros_like(pos);
  out.grads_neg = detail::zeros_like(neg);
  auto add = [](std::vector<Vec>& dst, const std::vector<Vec>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) axpy(1.0, src[i], dst[i]);
  };
  if (!pos.empty() && !neg.empty()) {
    PairLoss d = separation_loss(pos, neg, cfg.sim_clamp_eps);
    out.breakdown.separation = d.loss;
    out.breakdown.has_separation = true;
    add(out.grads_pos, d.grads_a);
    add(out.grads_neg, d.grads_b);
  }
  const RankWeightConfig rw{cfg.mu};
  if (pos.size() >= 2) {
    SetLoss s = attraction_loss(pos, rw);
    out.breakdown.attract_pos = s.loss;
    out.breakdown.has_attract_pos = true;
    add(out.grads_pos, s.grads);
  }
  if (neg.size() >= 2) {
    SetLoss s = attraction_loss(neg, rw);
    out.breakdown.attract_neg = s.loss;
    out.breakdown.has_attract_neg = true;
    add(out.grads_neg, s.grads);
  }
  out.loss = out.breakdown.total();
  return out;
}

struct PixelRef {
  std::size_t region = 0;
  int y = 0;
  int x = 0;
};

struct SalientPixels {
  std::vector<Vec> items;
  std::vector<PixelRef> refs;
};

/// Pools every spatial location of every region, scores it by the sum of its
/// channel values, and returns the top `count` channel vectors (stable on
/// ties, so equal saliency falls back to region-then-scan order).
inline SalientPixels sample_salient_pixels(const std::vector<Grid3>& regions,
                                           int count) {
  if (regions.empty()) {
    throw std::invalid_argument("sample_salient_pixels: no regions");
  }
  if (count < 1) throw std::invalid_argument("sample_salient_pixels: count < 1");
  const int channels = regions.front().channels;
  std::vector<PixelRef> all;
  std::vector<double> saliency;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const Grid3& g = regions[r];
    if (g.channels != channels) {
      throw std::invalid_argument("sample_salient_pixels: channel mismatch");
    }
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        double s = 0.0;
        for (int c = 0; c < channels; ++c) s += g.at(c, y, x);
        all.push_back({r, y, x});
        saliency.push_back(s);
      }
    }
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return saliency[a] > saliency[b];
  });
  const std::size_t take = std::min<std::size_t>(count, all.size());
  SalientPixels out;
  for (std::size_t k = 0; k < take; ++k) {
    const PixelRef ref = all[order[k]];
    const Grid3& g = regions[ref.region];
    Vec v(channels);
    for (int c = 0; c < channels; ++c) v[c] = g.at(c, ref.y, ref.x);
    out.items.push_back(std::move(v));
    out.refs.push_back(ref);
  }
  return out;
}

struct PixelLoss {
  double loss = 0.0;
  LossBreakdown breakdown;
  std::vector<Grid3> grads_pos;
  std::vector<Grid3> grads_neg;
};

/// Pixel-level term: salient pixels from each polarity, then the same
/// three-term objective as the region level. Gradients land only on the
/// sampled locations. Either side may be empty (its terms are skipped).
inline PixelLoss pixel_loss(const std::vector<Grid3>& pos_regions,
                            const std::vector<Grid3>& neg_regions,
                            const ContrastiveConfig& cfg) {
  if (pos_regions.empty() && neg_regions.empty()) {
    throw std::invalid_argument("pixel_loss: both region sets empty");
  }
  SalientPixels sp, sn;
  if (!pos_regions.empty()) sp = sample_salient_pixels(pos_regions, cfg.p);
  if (!neg_regions.empty()) sn = sample_salient_pixels(neg_regions, cfg.q);
  TripleLoss t = region_loss(sp.items, sn.items, cfg);

  PixelLoss out;
  out.loss = t.loss;
  out.breakdown = t.breakdown;
  auto scatter = [](const std::vector<Grid3>& regions, const SalientPixels& s,
                    const std::vector<Vec>& grads, std::vector<Grid3>& dst) {
    dst.reserve(regions.size());
    for (const Grid3& g : regions) dst.emplace_back(g.channels, g.height, g.width);
    for (std::size_t k = 0; k < s.refs.size(); ++k) {
      const PixelRef& r = s.refs[k];
      for (int c = 0; c < dst[r.region].channels; ++c) {
        dst[r.region].at(c, r.y, r.x) += grads[k][c];
      }
    }
  };
  scatter(pos_regions, sp, t.grads_pos, out.grads_pos);
  scatter(neg_regions, sn, t.grads_neg, out.grads_neg);
  return out;
}

inline double hierarchical_loss(double region_term, double pixel_term,
                                double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("hierarchical_loss: lambda must be in [0, 1]");
  }
  return lambda * region_term + (1.0 - lambda) * pixel_term;
}

}  // namespace noda::contrastive

#endif  // NODA_CONTRASTIVE_HPP_
