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
#ifndef NODA_BENCHMARK_HPP_
#define NODA_BENCHMARK_HPP_

// The synthetic source -> target benchmark: training and held-out splits for
// both domains, and the ablation variants of the adaptation objective.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "noda/config.hpp"
#include "noda/mean_teacher.hpp"
#include "noda/rng.hpp"
#include "noda/synthdata.hpp"

namespace noda::benchmark {

inline constexpr int kTestSamples = 100;

enum class Split : std::uint64_t { kSourceTrain = 0, kTargetTrain = 1, kSourceTest = 2, kTargetTest = 3 };

/// Dataset seed for one split of one benchmark seed. synth-gen with this seed
/// reproduces the split.
inline std::uint64_t split_seed(std::uint64_t seed, Split s) {
  return Rng(seed).split(static_cast<std::uint64_t>(s)).next();
}

struct Data {
  std::vector<synth::SynthSample> source_train, target_train, source_test, target_test;
};

inline Data make_data(const config::RunConfig& c) {
  const auto n = static_cast<std::size_t>(c.samples);
  using synth::DomainTag;
  return {synth::make_dataset(c.source, n, split_seed(c.seed, Split::kSourceTrain), DomainTag::kSource),
          synth::make_dataset(c.target, n, split_seed(c.seed, Split::kTargetTrain), DomainTag::kTarget),
          synth::make_dataset(c.source, kTestSamples, split_seed(c.seed, Split::kSourceTest),
                              DomainTag::kSource),
          synth::make_dataset(c.target, kTestSamples, split_seed(c.seed, Split::kTargetTest),
                              DomainTag::kTarget)};
}

struct Variant {
  std::string label;
  std::vector<std::string> overrides;  // --set form
};

/// baseline: plain mean teacher. +region: region-level contrast only.
/// +region+pixel: hierarchical contrast, no domain classifier. full: all.
inline const std::array<Variant, 4>& ablation_variants() {
  static const std::array<Variant, 4> v = {{
      {"baseline", {"w_contrs=0", "w_cls=0"}},
      {"+region", {"lambda=1", "w_cls=0"}},
      {"+region+pixel", {"w_cls=0"}},
      {"full", {}},
  }};
  return v;
}

inline config::RunConfig with_variant(config::RunConfig c, const Variant& v) {
  for (const auto& o : v.overrides) config::apply_override(c, o);
  config::validate(c);
  return c;
}

}  // namespace noda::benchmark

#endif  // NODA_BENCHMARK_HPP_
