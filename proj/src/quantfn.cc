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

#include "shiftq/quantfn.h"

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>

namespace shiftq {
namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda must be in [0, 1], got " +
                                std::to_string(lambda));
  }
}

void check_uniform_bits(int q) {
  // 2^q levels; 30 keeps every level value an exact int.
  if (q < 1 || q > 30) {
    throw std::invalid_argument("uniform bits must be in [1, 30], got " +
                                std::to_string(q));
  }
}

void check_finite(double x) {
  if (!std::isfinite(x)) throw std::domain_error("non-finite input");
}

// Shift level as (sign, depth j): value = +-1 / 2^j, j in [0, 2^s - 1].
struct ShiftLevel {
  bool positive;
  int depth;
};

// Locates the level through the binary exponent of |x|. Independent of the
// comparison ladder in branch_eval.
ShiftLevel locate_shift_level(double x, int s) {
  const int deepest = (1 << s) - 1;
  int exponent = 0;
  if (x > 0.0) {
    if (x > 1.0) return {true, 0};
    // x = m * 2^e, m in [0.5, 1). Levels are (1/2^(j+1), 1/2^j], so an exact
    // power of two belongs to the level it bounds from above.
    const double m = std::frexp(x, &exponent);
    const int depth = (m == 0.5) ? 1 - exponent : -exponent;
    return {true, std::min(depth, deepest)};
  }
  const double ax = -x;
  if (ax >= 1.0) return {false, 0};
  if (ax == 0.0) return {false, deepest};
  // Negative levels are (-1/2^j, -1/2^(j+1)], i.e. |x| in [1/2^(j+1), 1/2^j).
  std::frexp(ax, &exponent);
  return {false, std::min(-exponent, deepest)};
}

double level_value(ShiftLevel level) {
  const double magnitude = std::ldexp(1.0, -level.depth);
  return level.positive ? magnitude : -magnitude;
}

double blend(double x, double lambda, double value) {
  return lambda * x + value * (1.0 - lambda);
}

constexpr std::array<double, 16> kNegativePowersOfTwo = {
    1.0,           0.5,            0.25,           0.125,
    0.0625,        0.03125,        0.015625,       0.0078125,
    0.00390625,    0.001953125,    0.0009765625,   0.00048828125,
    0.000244140625, 0.0001220703125, 6.103515625e-05, 3.0517578125e-05};

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

QuantSpec::QuantSpec(QuantMode mode, int bits, double lambda, bool grad_scale)
    : mode_(mode), bits_(bits), lambda_(lambda), grad_scale_(grad_scale) {
  if (mode == QuantMode::kUniform) {
    check_uniform_bits(bits);
  } else {
    check_shift_bits(bits);
  }
  check_lambda(lambda);
  if (grad_scale && lambda == 0.0) {
    throw std::invalid_argument(
        "gradient scaling requires lambda > 0 (g / lambda is undefined)");
  }
}

QuantSpec QuantSpec::uniform(int bits, double lambda, bool grad_scale) {
  return QuantSpec(QuantMode::kUniform, bits, lambda, grad_scale);
}

QuantSpec QuantSpec::shift(int bits, double lambda, bool grad_scale) {
  return QuantSpec(QuantMode::kShift, bits, lambda, grad_scale);
}

QuantSpec QuantSpec::at_lambda(double lambda) const {
  return QuantSpec(mode_, bits_, lambda, grad_scale_ && lambda > 0.0);
}

void GaussianStats::validate() const {
  if (!(sigma_in > 0.0) || !(sigma_out > 0.0) || !std::isfinite(sigma_in) ||
      !std::isfinite(sigma_out) || !std::isfinite(mu)) {
    throw std::domain_error("degenerate distribution");
  }
}

double uniform_level_value(double x, int q) {
  check_finite(x);
  const double outer = std::ldexp(1.0, q - 1);
  if (x > 0.0) return std::min(std::ceil(x), outer);
  return -std::min(std::floor(-x) + 1.0, outer);
}

double shift_level_value(double x, int s) {
  check_finite(x);
  check_shift_bits(s);
  return level_value(locate_shift_level(x, s));
}

double eval_uniform(double x, double lambda, int q) {
  check_lambda(lambda);
  check_uniform_bits(q);
  return blend(x, lambda, uniform_level_value(x, q));
}

double eval_shift(double x, double lambda, int s) {
  check_lambda(lambda);
  return blend(x, lambda, shift_level_value(x, s));
}

double eval_shift_scaled(double x, double lambda, int s) {
  return shift_scale(s) * eval_shift(x, lambda, s);
}

ShiftCode encode_shift(double x, int s) {
  check_finite(x);
  check_shift_bits(s);
  const ShiftLevel level = locate_shift_level(x, s);
  const int deepest = (1 << s) - 1;
  return ShiftCode{level.positive,
                   static_cast<std::uint8_t>(deepest - level.depth)};
}

double eval(double x, const QuantSpec& spec) {
  return spec.mode() == QuantMode::kUniform
             ? eval_uniform(x, spec.lambda(), spec.bits())
             : eval_shift(x, spec.lambda(), spec.bits());
}

double eval_gaussian(double x, const QuantSpec& spec,
                     const GaussianStats& stats) {
  stats.validate();
  const double z = normalize(x, stats);
  if (spec.mode() == QuantMode::kShift) {
    return eval_shift(z, spec.lambda(), spec.bits()) * (3.0 * stats.sigma_out);
  }
  const double stretch = std::ldexp(1.0, spec.bits() - 1);
  return eval_uniform(z * stretch, spec.lambda(), spec.bits()) / stretch *
         (3.0 * stats.sigma_out);
}

double grad(double /*x*/, const QuantSpec& spec) { return spec.lambda(); }

double scaled_grad(double g, double lambda) {
  if (lambda == 0.0) {
    throw std::domain_error(
        "gradient scaling undefined at complete quantization");
  }
  check_lambda(lambda);
  return g / lambda;
}

std::vector<QuantLevel> quantize_levels(const QuantSpec& spec) {
  std::vector<QuantLevel> levels;
  if (spec.mode() == QuantMode::kUniform) {
    const int outer = 1 << (spec.bits() - 1);
    for (int k = outer; k >= 1; --k) {
      levels.push_back({k == outer ? -kInf : -static_cast<double>(k),
                        -static_cast<double>(k) + 1.0,
                        -static_cast<double>(k), 0});
    }
    for (int k = 1; k <= outer; ++k) {
      levels.push_back({static_cast<double>(k) - 1.0,
                        k == outer ? kInf : static_cast<double>(k),
                        static_cast<double>(k), 0});
    }
  } else {
    const int deepest = (1 << spec.bits()) - 1;
    for (int j = 0; j <= deepest; ++j) {
      levels.push_back({j == 0 ? -kInf : -std::ldexp(1.0, -j),
                        j == deepest ? 0.0 : -std::ldexp(1.0, -(j + 1)),
                        -std::ldexp(1.0, -j), 0});
    }
    for (int j = deepest; j >= 0; --j) {
      levels.push_back({j == deepest ? 0.0 : std::ldexp(1.0, -(j + 1)),
                        j == 0 ? kInf : std::ldexp(1.0, -j),
                        std::ldexp(1.0, -j), 0});
    }
  }
  for (std::size_t i = 0; i < levels.size(); ++i) {
    levels[i].code = static_cast<int>(i);
  }
  return levels;
}

double branch_eval(double x, double lambda, int s) {
  check_lambda(lambda);
  check_shift_bits(s);
  check_finite(x);
  const int deepest = (1 << s) - 1;
  const double ax = std::abs(x);
  if (x <= 0.0) {
    for (int j = deepest; j >= 1; --j) {
      if (ax < kNegativePowersOfTwo[j]) {
        return blend(x, lambda, -kNegativePowersOfTwo[j]);
      }
    }
    return blend(x, lambda, -1.0);
  }
  for (int j = deepest; j >= 1; --j) {
    if (ax <= kNegativePowersOfTwo[j]) {
      return blend(x, lambda, kNegativePowersOfTwo[j]);
    }
  }
  return blend(x, lambda, 1.0);
}

}  // namespace shiftq
