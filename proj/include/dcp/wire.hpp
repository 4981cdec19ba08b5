#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>

namespace dcp {

/// Round-to-nearest-even conversion of a binary32 value into the IEEE
/// binary16 layout and back. Overflow saturates to +-inf; subnormals are
/// produced below 2^-14.
inline float float_through_half(float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  const std::uint32_t sign = (bits >> 16) & 0x8000u;
  const std::uint32_t abs = bits & 0x7fffffffu;

  std::uint16_t half;
  if (abs >= 0x7f800000u) {
    // Inf or NaN.
    half = static_cast<std::uint16_t>(sign | 0x7c00u | (abs > 0x7f800000u ? 0x200u : 0u));
  } else if (abs >= 0x47800000u) {
    // Magnitude >= 65536: overflows the half range.
    half = static_cast<std::uint16_t>(sign | 0x7c00u);
  } else if (abs >= 0x38800000u) {
    // Normal half. Re-bias the exponent, then RNE on the 13 dropped bits.
    const std::uint32_t mant = abs - 0x38000000u;
    const std::uint32_t rounded = mant + 0xfffu + ((mant >> 13) & 1u);
    half = static_cast<std::uint16_t>(sign | (rounded >> 13));
    if ((half & 0x7fffu) > 0x7c00u) half = static_cast<std::uint16_t>(sign | 0x7c00u);
  } else if (abs >= 0x33000001u) {
    // Subnormal half: integer value round(|x| * 2^24).
    const int shift = 126 - static_cast<int>(abs >> 23);
    const std::uint32_t mant24 = (abs & 0x7fffffu) | 0x800000u;
    const std::uint32_t half_ulp = 1u << (shift - 1);
    std::uint32_t q = mant24 >> shift;
    const std::uint32_t rem = mant24 & ((1u << shift) - 1u);
    if (rem > half_ulp || (rem == half_ulp && (q & 1u))) ++q;
    half = static_cast<std::uint16_t>(sign | q);
  } else {
    half = static_cast<std::uint16_t>(sign);  // rounds to +-0
  }

  // Back to binary32.
  const std::uint32_t hsign = static_cast<std::uint32_t>(half & 0x8000u) << 16;
  const std::uint32_t hexp = (half >> 10) & 0x1fu;
  const std::uint32_t hmant = half & 0x3ffu;
  std::uint32_t fbits;
  if (hexp == 0x1fu) {
    fbits = hsign | 0x7f800000u | (hmant << 13);
  } else if (hexp == 0u) {
    if (hmant == 0u) {
      fbits = hsign;
    } else {
      std::uint32_t mant = hmant;
      int shifts = 0;
      while ((mant & 0x400u) == 0u) {
        mant <<= 1;
        ++shifts;
      }
      mant &= 0x3ffu;
      fbits = hsign | (static_cast<std::uint32_t>(113 - shifts) << 23) | (mant << 13);
    }
  } else {
    fbits = hsign | ((hexp + 112u) << 23) | (hmant << 13);
  }
  float out;
  std::memcpy(&out, &fbits, sizeof(out));
  return out;
}

/// Emulates transmitting a scalar with an f-bit IEEE float payload. Local
/// arithmetic stays in binary64; only values crossing the simulated wire go
/// through this.
inline double round_to_width(double value, int float_width) {
  switch (float_width) {
    case 64: return value;
    case 32: return static_cast<double>(static_cast<float>(value));
    case 16: return static_cast<double>(float_through_half(static_cast<float>(value)));
    default: throw std::invalid_argument("float_width must be 16, 32, or 64");
  }
}

}  // namespace dcp
