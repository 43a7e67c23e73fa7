#pragma once

#include <cfenv>
#include <cmath>
#include <limits>

namespace rtbev {

// Rounds to the nearest IEEE 754 binary16 value (ties to even) and returns it
// widened back to double. Magnitudes past the binary16 range become infinity.
inline double round_to_half(double x) noexcept {
  if (!std::isfinite(x) || x == 0.0) return x;
  constexpr double kOverflow = 65520.0;  // halfway between 65504 and 2^16
  const double mag = std::fabs(x);
  if (mag >= kOverflow) return std::copysign(std::numeric_limits<double>::infinity(), x);
  int exp = 0;
  std::frexp(mag, &exp);  // mag in [2^(exp-1), 2^exp)
  // binary16 has 10 fraction bits; subnormals share the 2^-24 spacing.
  const int unbiased = exp - 1;
  const int spacing_exp = unbiased < -14 ? -24 : unbiased - 10;
  const double scaled = std::ldexp(x, -spacing_exp);
  return std::ldexp(std::nearbyint(scaled), spacing_exp);
}

}  // namespace rtbev
