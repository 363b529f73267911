/* Copyright 2026 The shiftq Authors. All Rights Reserved.

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

#ifndef SHIFTQ_TESTS_TEST_UTIL_H_
#define SHIFTQ_TESTS_TEST_UTIL_H_

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "shiftq/quantfn.h"

namespace shiftq::testing {

// Mix of uniform values, exact level boundaries and their float neighbours,
// which is where two quantizer implementations are most likely to disagree.
inline double adversarial_input(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<int> exponent(-20, 2);
  std::uniform_real_distribution<double> wide(-3.0, 3.0);
  std::bernoulli_distribution negative(0.5);
  const double sign = negative(rng) ? -1.0 : 1.0;
  const double boundary = std::ldexp(1.0, exponent(rng));
  switch (kind(rng)) {
    case 0:
      return wide(rng);
    case 1:
      return sign * boundary;
    case 2:
      return std::nextafter(sign * boundary, 10.0);
    default:
      return std::nextafter(sign * boundary, -10.0);
  }
}

// Level value by linear search over the enumerated levels; a third route
// independent of both the frexp and the ladder implementations.
inline double table_level_value(const std::vector<QuantLevel>& levels,
                                double x) {
  for (const QuantLevel& level : levels) {
    if (x > level.lo && x <= level.hi) return level.value;
  }
  return std::nan("");
}

inline std::vector<QuantSpec> all_specs(double lambda) {
  std::vector<QuantSpec> specs;
  for (int q = 1; q <= 4; ++q) specs.push_back(QuantSpec::uniform(q, lambda));
  for (int s = 0; s <= 4; ++s) specs.push_back(QuantSpec::shift(s, lambda));
  return specs;
}

}  // namespace shiftq::testing

#endif  // SHIFTQ_TESTS_TEST_UTIL_H_
