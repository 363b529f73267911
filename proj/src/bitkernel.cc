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

#include "shiftq/bitkernel.h"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace shiftq {
namespace {

constexpr std::uint32_t kExponentMask = 0xFFu;
constexpr int kMantissaBits = 23;

std::uint32_t exponent_field(std::uint32_t bits) {
  return (bits >> kMantissaBits) & kExponentMask;
}

bool is_zero(std::uint32_t bits) { return (bits & 0x7FFFFFFFu) == 0; }

}  // namespace

BitWord BitWord::from_string(std::string_view text) {
  if (text.size() > 64) {
    throw std::invalid_argument("bit word longer than 64 elements");
  }
  BitWord word;
  word.length = static_cast<int>(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '1') {
      word.bits |= std::uint64_t{1} << i;
    } else if (text[i] != '0') {
      throw std::invalid_argument("bit word may only contain '0' and '1'");
    }
  }
  return word;
}

int xnor_popcount_dot(BitWord a, BitWord b) {
  if (a.length != b.length) {
    throw std::invalid_argument("xnor_popcount_dot: length mismatch");
  }
  if (a.length < 0 || a.length > 64) {
    throw std::invalid_argument("xnor_popcount_dot: length exceeds word");
  }
  const std::uint64_t mask =
      a.length == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << a.length) - 1;
  const std::uint64_t agree = ~(a.bits ^ b.bits) & mask;
  return 2 * std::popcount(agree) - a.length;
}

std::int64_t xnor_popcount_dot(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b,
                               std::size_t length) {
  const std::size_t words = (length + 63) / 64;
  if (a.size() < words || b.size() < words) {
    throw std::invalid_argument("xnor_popcount_dot: stream shorter than length");
  }
  std::int64_t agree = 0;
  const std::size_t full = length / 64;
  for (std::size_t w = 0; w < full; ++w) {
    agree += std::popcount(~(a[w] ^ b[w]));
  }
  if (const std::size_t tail = length % 64; tail != 0) {
    const std::uint64_t mask = (std::uint64_t{1} << tail) - 1;
    agree += std::popcount(~(a[full] ^ b[full]) & mask);
  }
  return 2 * agree - static_cast<std::int64_t>(length);
}

AccumulatorBank::AccumulatorBank(int s_bits, int word_width)
    : s_bits_(s_bits), word_width_(word_width) {
  check_shift_bits(s_bits);
  if (word_width != 32 && word_width != 64) {
    throw std::invalid_argument("word width must be 32 or 64");
  }
  mag_mask_ = (1u << s_bits) - 1u;
  lanes_.resize((std::size_t{1} << (s_bits + 1)) - 1);
}

int AccumulatorBank::popcount(std::uint64_t v) { return std::popcount(v); }

std::int64_t AccumulatorBank::finalize() const {
  std::int64_t result = 0;
  for (std::size_t p = 0; p < lanes_.size(); ++p) {
    const Lane& lane = lanes_[p];
    const std::int64_t lane_sum =
        lane.total + 2 * static_cast<std::int64_t>(popcount(lane.signs)) -
        lane.count;
    result += lane_sum << p;
  }
  return result;
}

void AccumulatorBank::reset() {
  for (Lane& lane : lanes_) lane = Lane{};
}

std::int64_t mac_oracle(std::span<const CodePair> pairs) {
  std::int64_t sum = 0;
  for (const auto& [a, b] : pairs) {
    std::int64_t magnitude = 1;
    for (int i = 0; i < a.mag + b.mag; ++i) magnitude *= 2;
    sum += (a.positive == b.positive) ? magnitude : -magnitude;
  }
  return sum;
}

std::int64_t mac_bank(std::span<const CodePair> pairs, int s_bits,
                      int word_width) {
  AccumulatorBank bank(s_bits, word_width);
  for (const auto& [a, b] : pairs) bank.push(a, b);
  return bank.finalize();
}

int exponent_bit_for(int m) {
  switch (m) {
    case 8:
      return 3;
    case 16:
      return 4;
    default:
      throw std::invalid_argument("m must be 8 or 16, got " +
                                  std::to_string(m));
  }
}

bool exponent_bit_clear(float f, int m) {
  const int k = exponent_bit_for(m);
  const auto bits = std::bit_cast<std::uint32_t>(f);
  if (is_zero(bits)) return true;
  const std::uint32_t exponent = exponent_field(bits);
  if (exponent == 0 || exponent == kExponentMask) return false;
  if ((exponent >> k) & 1u) return false;
  return exponent + static_cast<std::uint32_t>(m) < kExponentMask;
}

float or_exponent_bit(float f, int m) {
  if (!exponent_bit_clear(f, m)) {
    throw std::domain_error(
        "activation magnitude too large: exponent bit already set");
  }
  auto bits = std::bit_cast<std::uint32_t>(f);
  if (is_zero(bits)) return f;
  bits |= std::uint32_t{1} << (kMantissaBits + exponent_bit_for(m));
  return std::bit_cast<float>(bits);
}

std::int64_t cheap_scale_round(float f, int m) {
  exponent_bit_for(m);
  const auto bits = std::bit_cast<std::uint32_t>(f);
  if (is_zero(bits)) return 0;
  const std::uint32_t exponent = exponent_field(bits);
  if (exponent == kExponentMask) {
    throw std::domain_error("activation is non-finite");
  }
  // |f| < 2^-126, so |f * 2^m| is far below one half.
  if (exponent == 0) return 0;
  // |f * 2^m| < 2^63 keeps llrint defined.
  if (static_cast<int>(exponent) + m > 127 + 62) {
    throw std::domain_error("activation magnitude too large");
  }
  const float scaled =
      exponent_bit_clear(f, m)
          ? or_exponent_bit(f, m)
          : std::bit_cast<float>(bits + (static_cast<std::uint32_t>(m)
                                         << kMantissaBits));
  return std::llrint(scaled);
}

std::int64_t weight_only_dot(std::span<const float> acts,
                             std::span<const ShiftCode> codes, int m) {
  if (acts.size() != codes.size()) {
    throw std::invalid_argument("weight_only_dot: length mismatch");
  }
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const std::int64_t term = cheap_scale_round(acts[i], m) << codes[i].mag;
    sum += codes[i].positive ? term : -term;
  }
  return sum;
}

PackedCodeVector::PackedCodeVector(int s_bits, std::size_t length,
                                   std::vector<std::uint32_t> words)
    : s_bits_(s_bits), length_(length), words_(std::move(words)) {
  check_shift_bits(s_bits);
  if (words_.size() != word_count(s_bits, length)) {
    throw std::invalid_argument("packed code storage has wrong word count");
  }
}

std::uint32_t PackedCodeVector::packed_at(std::size_t i) const {
  if (i >= length_) throw std::out_of_range("packed code index");
  const std::size_t width = static_cast<std::size_t>(s_bits_) + 1;
  const std::size_t first = i * width;
  std::uint32_t code = 0;
  for (std::size_t b = 0; b < width; ++b) {
    const std::size_t bit = first + b;
    code |= ((words_[bit / 32] >> (bit % 32)) & 1u) << b;
  }
  return code;
}

PackedCodeVector pack_codes(std::span<const ShiftCode> codes, int s_bits) {
  check_shift_bits(s_bits);
  const std::size_t width = static_cast<std::size_t>(s_bits) + 1;
  std::vector<std::uint32_t> words(
      PackedCodeVector::word_count(s_bits, codes.size()), 0u);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i].mag >= (1u << s_bits)) {
      throw std::invalid_argument("shift code magnitude exceeds s bits");
    }
    const std::uint32_t code = codes[i].packed(s_bits);
    for (std::size_t b = 0; b < width; ++b) {
      const std::size_t bit = i * width + b;
      words[bit / 32] |= ((code >> b) & 1u) << (bit % 32);
    }
  }
  return PackedCodeVector(s_bits, codes.size(), std::move(words));
}

std::vector<ShiftCode> unpack_codes(const PackedCodeVector& packed) {
  std::vector<ShiftCode> codes;
  codes.reserve(packed.size());
  for (std::size_t i = 0; i < packed.size(); ++i) codes.push_back(packed.at(i));
  return codes;
}

}  // namespace shiftq
