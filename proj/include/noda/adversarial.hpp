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
#ifndef NODA_ADVERSARIAL_HPP_
#define NODA_ADVERSARIAL_HPP_

// Nodule-level domain alignment: a two-layer domain classifier over ROI
// embeddings, binary cross-entropy against the domain label, and a gradient
// reversal layer between the encoder and the classifier.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "noda/numerics.hpp"
#include "noda/rng.hpp"

namespace noda::adversarial {

enum class DomainLabel : int { kSource = 0, kTarget = 1 };

inline constexpr double kLogitClamp = 30.0;

// Layout inside the flat parameter vector:
//   w1 [hidden x input] row-major, b1 [hidden], w2 [hidden], b2 [1].
struct ClassifierShape {
  int input = 256;
  int hidden = 64;

  std::size_t w1() const { return 0; }
  std::size_t b1() const { return w1() + static_cast<std::size_t>(hidden) * input; }
  std::size_t w2() const { return b1() + hidden; }
  std::size_t b2() const { return w2() + hidden; }
  std::size_t size() const { return b2() + 1; }
};

struct DomainClassifier {
  ClassifierShape shape;
  ParamVec params;

  DomainClassifier() = default;
  explicit DomainClassifier(ClassifierShape s)
      : shape(s), params(s.size(), 0.0) {}

  static DomainClassifier init(ClassifierShape s, Rng& rng, double scale = 0.05) {
    DomainClassifier c(s);
    for (double& p : c.params) p = rng.uniform(-scale, scale);
    return c;
  }
};

struct ClassifierTrace {
  std::vector<double> hidden;  // tanh activations
  double logit = 0.0;          // clamped
  bool clamped = false;
  double prob = 0.5;
};

inline ClassifierTrace classifier_trace(std::span<const double> feature,
                                        const DomainClassifier& clf) {
  const ClassifierShape& s = clf.shape;
  if (static_cast<int>(feature.size()) != s.input) {
    throw std::invalid_argument("classifier_forward: feature dim mismatch");
  }
  if (clf.params.size() != s.size()) {
    throw std::invalid_argument("classifier_forward: parameter size mismatch");
  }
  const double* p = clf.params.data();
  ClassifierTrace t;
  t.hidden.resize(s.hidden);
  double z = p[s.b2()];
  for (int h = 0; h < s.hidden; ++h) {
    const double* row = p + s.w1() + static_cast<std::size_t>(h) * s.input;
    double a = p[s.b1() + h];
    for (int i = 0; i < s.input; ++i) a += row[i] * feature[i];
    t.hidden[h] = std::tanh(a);
    z += p[s.w2() + h] * t.hidden[h];
  }
  t.clamped = z > kLogitClamp || z < -kLogitClamp;
  t.logit = std::clamp(z, -kLogitClamp, kLogitClamp);
  t.prob = 1.0 / (1.0 + std::exp(-t.logit));
  return t;
}

/// sigmoid(affine2(tanh(affine1(feature)))), logit clamped to +-30 so the
/// result stays strictly inside (0, 1).
inline double classifier_forward(std::span<const double> feature,
                                 const DomainClassifier& clf) {
  return classifier_trace(feature, clf).prob;
}

struct ClsLoss {
  double loss = 0.0;
  double d_prob = 0.0;
};

// -T log P - (1 - T) log(1 - P)
inline ClsLoss domain_cls_loss(double prob, DomainLabel label) {
  assert(prob > 0.0 && prob < 1.0);
  if (!(prob > 0.0 && prob < 1.0)) {
    throw std::domain_error("domain_cls_loss: probability must be in (0, 1)");
  }
  const double t = label == DomainLabel::kTarget ? 1.0 : 0.0;
  return {-t * std::log(prob) - (1.0 - t) * std::log1p(-prob),
          -t / prob + (1.0 - t) / (1.0 - prob)};
}

// Backward rule of the gradient reversal layer. The forward pass is the
// identity.
inline Vec grl_transform(std::span<const double> upstream, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("grl_transform: gamma < 0");
  Vec out(upstream.size());
  for (std::size_t i = 0; i < upstream.size(); ++i) out[i] = -gamma * upstream[i];
  return out;
}

struct NdlResult {
  double loss = 0.0;             // mean classifier loss over the batch
  ParamVec classifier_grads;     // d loss / d classifier params
  std::vector<Vec> feature_grads;  // after gradient reversal
};

/// One NDL evaluation: mean domain loss, its gradient for the classifier
/// (to descend) and the reversed gradient for each input feature (so the
/// encoder ascends the same loss).
inline NdlResult ndl_step(const std::vector<Vec>& features,
                          const std::vector<DomainLabel>& labels,
                          const DomainClassifier& clf, double gamma) {
  if (features.empty()) throw std::invalid_argument("ndl_step: empty batch");
  if (features.size() != labels.size()) {
    throw std::invalid_argument("ndl_step: feature/label count mismatch");
  }
  const ClassifierShape& s = clf.shape;
  const double inv_n = 1.0 / static_cast<double>(features.size());
  const double* p = clf.params.data();

  NdlResult out;
  out.classifier_grads.assign(s.size(), 0.0);
  double* g = out.classifier_grads.data();
  double sum = 0.0;
  for (std::size_t n = 0; n < features.size(); ++n) {
    const Vec& f = features[n];
    const ClassifierTrace t = classifier_trace(f, clf);
    const ClsLoss l = domain_cls_loss(t.prob, labels[n]);
    sum += l.loss;
    // dL/dz through the sigmoid; zero when the logit sat on the clamp.
    const double dz =
        t.clamped ? 0.0 : inv_n * l.d_prob * t.prob * (1.0 - t.prob);
    Vec df(f.size(), 0.0);
    g[s.b2()] += dz;
    for (int h = 0; h < s.hidden; ++h) {
      g[s.w2() + h] += dz * t.hidden[h];
      const double da = dz * p[s.w2() + h] * (1.0 - t.hidden[h] * t.hidden[h]);
      g[s.b1() + h] += da;
      double* grow = g + s.w1() + static_cast<std::size_t>(h) * s.input;
      const double* prow = p + s.w1() + static_cast<std::size_t>(h) * s.input;
      for (int i = 0; i < s.input; ++i) {
        grow[i] += da * f[i];
        df[i] += da * prow[i];
      }
    }
    out.feature_grads.push_back(grl_transform(df, gamma));
  }
  out.loss = sum * inv_n;
  return out;
}

}  // namespace noda::adversarial

#endif  // NODA_ADVERSARIAL_HPP_
