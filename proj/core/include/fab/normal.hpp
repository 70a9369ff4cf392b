#pragma once

#include <cmath>

namespace fab {

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double norm_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

// Phi(z). erfc keeps relative accuracy in the left tail.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

// 1 - Phi(z), accurate in the right tail.
inline double norm_sf(double z) { return 0.5 * std::erfc(z / kSqrt2); }

} // namespace fab
