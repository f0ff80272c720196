#pragma once

#include <cmath>
#include <compare>
#include <stdexcept>
#include <string>

namespace srspin {

/// Half-integer quantum number stored as twice its value (m = twice / 2).
struct HalfInt {
  int twice = 0;

  constexpr HalfInt() = default;
  constexpr explicit HalfInt(int twice_value) : twice(twice_value) {}

  static HalfInt from_double(double v) {
    const double t = 2.0 * v;
    const double r = std::round(t);
    if (!std::isfinite(v) || std::abs(t - r) > 1e-9) {
      throw std::invalid_argument("value is not a half-integer: " + std::to_string(v));
    }
    return HalfInt(static_cast<int>(r));
  }

  constexpr double value() const { return 0.5 * twice; }
  constexpr HalfInt abs() const { return HalfInt(twice < 0 ? -twice : twice); }
  constexpr HalfInt operator-() const { return HalfInt(-twice); }

  friend constexpr auto operator<=>(HalfInt, HalfInt) = default;

  std::string str() const {
    if (twice % 2 == 0) return std::to_string(twice / 2);
    return std::to_string(twice) + "/2";
  }
};

inline constexpr HalfInt kSr87Spin{9};

}  // namespace srspin
