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
#ifndef NODA_TESTS_PROPERTY_HPP_
#define NODA_TESTS_PROPERTY_HPP_

// Minimal property-test driver: runs a body over `cases` independent
// generator streams and reports the first failing case index so it can be
// replayed with the same seed.

#include <cstdint>
#include <string>

#include <gtest/gtest.h>

#include "noda/geometry.hpp"
#include "noda/rng.hpp"

namespace noda::testing {

inline constexpr int kPropertyCases = 200;

template <typename Body>
void for_all(const std::string& name, Body body, int cases = kPropertyCases,
             std::uint64_t seed = 20260101) {
  const Rng base(seed);
  for (int i = 0; i < cases; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    SCOPED_TRACE(name + " case " + std::to_string(i) + " seed " + std::to_string(seed));
    body(rng);
    if (::testing::Test::HasFailure()) return;
  }
}

inline Box random_box(Rng& rng, double extent = 100.0, double min_side = 1.0,
                      double max_side = 40.0) {
  const double w = rng.uniform(min_side, max_side);
  const double h = rng.uniform(min_side, max_side);
  const double x = rng.uniform(0.0, extent - w);
  const double y = rng.uniform(0.0, extent - h);
  return Box(x, y, x + w, y + h);
}

}  // namespace noda::testing

#endif  // NODA_TESTS_PROPERTY_HPP_
