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

// The lambda-slope quantizer family.
//
// Every quantizer here is piecewise linear with slope lambda inside each
// quantize level (a, b]. lambda = 1 is the identity, lambda = 0 is complete
// quantization: the output is the level value. In between the output is
//
//   lambda * x + level_value * (1 - lambda).
//
// Uniform(q) levels take the values {-2^(q-1), ..., -1, 1, ..., 2^(q-1)} with
// unit-width intervals around the origin and unbounded tails. Shift(s) levels
// take the values {+-1 / 2^k : 0 <= k <= 2^s - 1}; level boundaries are the
// powers of two 1 / 2^k which are exact in binary floating point.

#ifndef SHIFTQ_QUANTFN_H_
#define SHIFTQ_QUANTFN_H_

#include <cmath>
#include <limits>
#include <vector>

#include "shiftq/shift_code.h"

namespace shiftq {

enum class QuantMode { kUniform, kShift };

class QuantSpec {
 public:
  // Throws std::invalid_argument on bits or lambda out of range, and when
  // grad_scale is requested at lambda = 0.
  static QuantSpec uniform(int bits, double lambda, bool grad_scale = false);
  static QuantSpec shift(int bits, double lambda, bool grad_scale = false);

  QuantMode mode() const { return mode_; }
  int bits() const { return bits_; }
  double lambda() const { return lambda_; }
  bool grad_scale() const { return grad_scale_; }

  // Same mode and bits at another slope. grad_scale is kept for lambda > 0
  // and dropped at lambda = 0, where scaling is undefined.
  QuantSpec at_lambda(double lambda) const;

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;

 private:
  QuantSpec(QuantMode mode, int bits, double lambda, bool grad_scale);

  QuantMode mode_;
  int bits_;
  double lambda_;
  bool grad_scale_;
};

// Half-open interval (lo, hi] with its lambda = 0 output. The outermost levels
// have lo = -inf or hi = +inf.
struct QuantLevel {
  double lo;
  double hi;
  double value;
  int code;
};

struct GaussianStats {
  double mu = 0.0;
  double sigma_in = 1.0;
  double sigma_out = 1.0;

  // Throws std::domain_error("degenerate distribution") unless both sigmas
  // are positive and finite.
  void validate() const;
};

// Level values at lambda = 0. Inputs must be finite.
double uniform_level_value(double x, int q);
double shift_level_value(double x, int s);

double eval_uniform(double x, double lambda, int q);
double eval_shift(double x, double lambda, int s);

// 2^(2^s - 1) * eval_shift(x, lambda, s). At lambda = 0 the output is an
// integer +-2^k with k in [0, 2^s - 1].
double eval_shift_scaled(double x, double lambda, int s);

// Sign-magnitude code of eval_shift_scaled(x, 0, s).
ShiftCode encode_shift(double x, int s);

// Dispatches on spec.mode().
double eval(double x, const QuantSpec& spec);

// (x - mu) / (3 sigma_in): the quantizer input of the Gaussian wrapper.
inline double normalize(double x, const GaussianStats& stats) {
  return (x - stats.mu) / (3.0 * stats.sigma_in);
}

// Gaussian wrapper: normalizes to (x - mu) / (3 sigma_in), quantizes, and
// maps back with 3 sigma_out. The mean is not restored. Uniform mode also
// stretches the normalized input by 2^(q-1) and shrinks the output by the
// same factor so the outer levels sit at +-3 sigma.
double eval_gaussian(double x, const QuantSpec& spec,
                     const GaussianStats& stats);

// d eval / dx. Equals lambda everywhere, boundaries included (the slope of
// the (a, b] piece that contains the point).
double grad(double x, const QuantSpec& spec);

// g / lambda. Throws std::domain_error at lambda = 0.
double scaled_grad(double g, double lambda);

// All levels ordered by interval; the intervals tile the real line.
std::vector<QuantLevel> quantize_levels(const QuantSpec& spec);

// Shift quantizer evaluated with one abs() and a comparison ladder, the way
// an inference runtime would. Bit-identical to eval_shift.
double branch_eval(double x, double lambda, int s);

// 2^(2^s - 1): the largest shift-level magnitude after rescaling.
inline double shift_scale(int s) {
  return std::ldexp(1.0, (1 << s) - 1);
}

}  // namespace shiftq

#endif  // SHIFTQ_QUANTFN_H_
