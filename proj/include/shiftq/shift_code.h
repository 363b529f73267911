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

#ifndef SHIFTQ_SHIFT_CODE_H_
#define SHIFTQ_SHIFT_CODE_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace shiftq {

// Largest supported number of shift bits. Combined shifts of two 4-bit codes
// reach 2 * (2^4 - 1) = 30, which still fits a 32-bit word.
inline constexpr int kMaxShiftBits = 4;

inline void check_shift_bits(int s) {
  if (s < 0 || s > kMaxShiftBits) {
    throw std::invalid_argument("shift bits must be in [0, 4], got " +
                                std::to_string(s));
  }
}

// Sign-magnitude shift code: decodes to (positive ? +1 : -1) * 2^mag.
// Note that both mag == 0 codes are non-zero values (+1 and -1).
struct ShiftCode {
  bool positive = true;
  std::uint8_t mag = 0;

  // Validates mag < 2^s.
  static ShiftCode make(bool positive, int mag, int s) {
    check_shift_bits(s);
    if (mag < 0 || mag >= (1 << s)) {
      throw std::invalid_argument("shift magnitude " + std::to_string(mag) +
                                  " out of range for s=" + std::to_string(s));
    }
    return ShiftCode{positive, static_cast<std::uint8_t>(mag)};
  }

  // (sign << s) | mag, in s + 1 bits.
  std::uint32_t packed(int s) const {
    return (static_cast<std::uint32_t>(positive) << s) | mag;
  }

  static ShiftCode from_packed(std::uint32_t bits, int s) {
    const std::uint32_t mask = (1u << s) - 1u;
    return ShiftCode{((bits >> s) & 1u) != 0,
                     static_cast<std::uint8_t>(bits & mask)};
  }

  std::int64_t value() const {
    const std::int64_t magnitude = std::int64_t{1} << mag;
    return positive ? magnitude : -magnitude;
  }

  friend bool operator==(const ShiftCode&, const ShiftCode&) = default;
};

inline double decode(ShiftCode code) {
  return static_cast<double>(code.value());
}

}  // namespace shiftq

#endif  // SHIFTQ_SHIFT_CODE_H_
