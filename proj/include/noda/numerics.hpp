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
#ifndef NODA_NUMERICS_HPP_
#define NODA_NUMERICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace noda {

// Flat embedding / gradient vector. All arithmetic in the library is double.
using Vec = std::vector<double>;

// Every trainable parameter of one model, in a fixed architecture-defined order.
using ParamVec = std::vector<double>;

// Channel-major C x H x W grid of reals.
struct Grid3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid3() = default;
  Grid3(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w) {
    if (c < 1 || h < 1 || w < 1) {
      throw std::invalid_argument("Grid3: dimensions must be >= 1");
    }
    values.assign(static_cast<std::size_t>(c) * h * w, fill);
  }

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  double& at(int c, int y, int x) { return values[index(c, y, x)]; }
  double at(int c, int y, int x) const { return values[index(c, y, x)]; }
  std::size_t size() const { return values.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  bool operator==(const Grid3&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace detail {

inline void check_similarity_inputs(std::span<const double> a,
                                    std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_sim: length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument("cosine_sim: empty vector");
}

inline void check_nonzero(double na, double nb) {
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw std::domain_error("cosine_sim: zero-norm input");
  }
}

}  // namespace detail

/// Cosine similarity a.b / (|a||b|), clamped to [-1, 1]. Zero-norm inputs
/// throw std::domain_error instead of producing NaN.
inline double cosine_sim(std::span<const double> a, std::span<const double> b) {
  detail::check_similarity_inputs(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  detail::check_nonzero(na, nb);
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

struct SimGrad {
  Vec d_a;
  Vec d_b;
};

/// Analytic gradient of cosine_sim with respect to both arguments:
///   dA = b/(|a||b|) - sim * a/|a|^2, dB symmetric.
inline SimGrad cosine_sim_grad(std::span<const double> a,
                               std::span<const double> b) {
  detail::check_similarity_inputs(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  detail::check_nonzero(na, nb);
  const double inv = 1.0 / (na * nb);
  const double sim = dot(a, b) * inv;
  const double ka = sim / (na * na);
  const double kb = sim / (nb * nb);
  SimGrad g{Vec(a.size()), Vec(b.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    g.d_a[i] = b[i] * inv - ka * a[i];
    g.d_b[i] = a[i] * inv - kb * b[i];
  }
  return g;
}

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central-difference gradient verification. Compares the analytic gradient
/// entrywise against (f(x+eps e_i) - f(x-eps e_i)) / 2eps and returns
/// max_i |fd - an| / max(1, |fd|, |an|). Only the entries listed in `indices`
/// are probed; an empty list probes all of them.
inline double finite_diff_check(const ScalarFn& f, std::span<const double> x,
                                std::span<const double> analytic, double eps,
                                std::span<const std::size_t> indices = {}) {
  if (analytic.size() != x.size()) {
    throw std::invalid_argument("finite_diff_check: gradient length mismatch");
  }
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  auto check_entry = [&](std::size_t i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double fp = f(probe);
    probe[i] = saved - eps;
    const double fm = f(probe);
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error("finite_diff_check: non-finite function value");
    }
    const double fd = (fp - fm) / (2.0 * eps);
    const double an = analytic[i];
    const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
    worst = std::max(worst, std::abs(fd - an) / denom);
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) check_entry(i);
  } else {
    for (std::size_t i : indices) check_entry(i);
  }
  return worst;
}

/// params - lr * grads.
inline ParamVec sgd_step(std::span<const double> params,
                         std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("sgd_step: length mismatch");
  }
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd_step: lr must be >= 0");
  ParamVec out(params.begin(), params.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * grads[i];
  return out;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double d) { return std::isfinite(d); });
}

}  // namespace noda

#endif  // NODA_NUMERICS_HPP_
