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

// Integer kernels for shift-quantized inference.
//
// A product of two shift codes is sign_a * sign_b * 2^(mag_a + mag_b). The
// accumulator keeps one XNOR/popcount lane per combined shift p = mag_a +
// mag_b: product signs are buffered as bits and folded into a running total
// with a single popcount once a word fills up. The final sum is
// sum_p (total_p << p).

#ifndef SHIFTQ_BITKERNEL_H_
#define SHIFTQ_BITKERNEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "shiftq/shift_code.h"

namespace shiftq {

// Up to 64 +-1 values; bit i set means element i is +1.
struct BitWord {
  std::uint64_t bits = 0;
  int length = 0;

  // "10110" -> element 0 is '1', element 4 is '0'.
  static BitWord from_string(std::string_view text);
};

// 2 * popcount(xnor(a, b)) - length. Throws std::invalid_argument when the
// lengths differ.
int xnor_popcount_dot(BitWord a, BitWord b);

// Same over a packed stream of `length` sign bits (bit i of word i / 64).
std::int64_t xnor_popcount_dot(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b,
                               std::size_t length);

class AccumulatorBank {
 public:
  // word_width is the popcount operand size: 32 or 64.
  explicit AccumulatorBank(int s_bits, int word_width = 32);

  void push(ShiftCode a, ShiftCode b) {
    push_packed(a.packed(s_bits_), b.packed(s_bits_));
  }

  // Operands in the (sign << s) | mag layout.
  void push_packed(std::uint32_t a, std::uint32_t b) {
    const std::uint32_t p = (a & mag_mask_) + (b & mag_mask_);
    const std::uint64_t same_sign = ((~(a ^ b)) >> s_bits_) & 1u;
    Lane& lane = lanes_[p];
    lane.signs = (lane.signs << 1) | same_sign;
    if (++lane.count == word_width_) {
      lane.total += 2 * static_cast<std::int64_t>(popcount(lane.signs)) -
                    word_width_;
      lane.signs = 0;
      lane.count = 0;
    }
  }

  // Sum of every product pushed so far. Partial buffers contribute
  // 2 * popcount - count; the bank itself is left untouched.
  std::int64_t finalize() const;

  void reset();

  int s_bits() const { return s_bits_; }
  int word_width() const { return word_width_; }
  // 2^(s+1) - 1 combined shifts.
  int lane_count() const { return static_cast<int>(lanes_.size()); }
  int buffered(int p) const { return lanes_.at(p).count; }
  std::int64_t running_total(int p) const { return lanes_.at(p).total; }

 private:
  struct Lane {
    std::int64_t total = 0;
    std::uint64_t signs = 0;
    int count = 0;
  };

  static int popcount(std::uint64_t v);

  int s_bits_;
  int word_width_;
  std::uint32_t mag_mask_;
  std::vector<Lane> lanes_;
};

using CodePair = std::pair<ShiftCode, ShiftCode>;

// Reference MAC: plain sum of sign * 2^(mag_a + mag_b).
std::int64_t mac_oracle(std::span<const CodePair> pairs);

// Convenience: pushes every pair through a fresh bank and finalizes.
std::int64_t mac_bank(std::span<const CodePair> pairs, int s_bits,
                      int word_width = 32);

// Exponent-field bit that multiplies a binary32 by 2^m: pattern bit 23 + k
// with 2^k = m. Only m = 8 and m = 16 are supported.
int exponent_bit_for(int m);

// True when f is zero or normal and OR-ing the exponent bit for m is an
// exact multiplication by 2^m (bit clear, no overflow into inf/NaN).
bool exponent_bit_clear(float f, int m);

// f * 2^m by setting one exponent bit, with no arithmetic on the value.
// Throws std::domain_error when the bit is already set or the result would
// not be finite.
float or_exponent_bit(float f, int m);

// round-to-nearest-even(f * 2^m). Uses or_exponent_bit when its
// precondition holds; otherwise raises the biased exponent by m on the bit
// pattern. Throws std::domain_error("activation magnitude too large") when
// the result leaves the int64 range and for non-finite input. Subnormals
// round to 0.
std::int64_t cheap_scale_round(float f, int m);

// sum_i sign_i * (cheap_scale_round(acts_i, m) << mag_i). The caller divides
// the folded scale by 2^m.
std::int64_t weight_only_dot(std::span<const float> acts,
                             std::span<const ShiftCode> codes, int m);

// (s + 1)-bit codes packed back to back into 32-bit words. Code i occupies
// stream bits [i (s+1), (i+1)(s+1)); stream bit j is bit j % 32 of word
// j / 32, so codes may straddle a word boundary.
class PackedCodeVector {
 public:
  PackedCodeVector() = default;
  PackedCodeVector(int s_bits, std::size_t length,
                   std::vector<std::uint32_t> words);

  int s_bits() const { return s_bits_; }
  std::size_t size() const { return length_; }
  const std::vector<std::uint32_t>& words() const { return words_; }
  std::uint32_t packed_at(std::size_t i) const;
  ShiftCode at(std::size_t i) const {
    return ShiftCode::from_packed(packed_at(i), s_bits_);
  }

  static std::size_t word_count(int s_bits, std::size_t length) {
    const std::size_t bits = length * static_cast<std::size_t>(s_bits + 1);
    return (bits + 31) / 32;
  }

 private:
  int s_bits_ = 0;
  std::size_t length_ = 0;
  std::vector<std::uint32_t> words_;
};

PackedCodeVector pack_codes(std::span<const ShiftCode> codes, int s_bits);
std::vector<ShiftCode> unpack_codes(const PackedCodeVector& packed);

}  // namespace shiftq

#endif  // SHIFTQ_BITKERNEL_H_
