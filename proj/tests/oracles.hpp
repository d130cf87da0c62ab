#pragma once

// Closed-form references used only by the tests.

#include <cmath>
#include <numbers>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

// integral over R^d of (1 - cos h_1) |h|^{-d-alpha} dh.
inline double stable_constant(double alpha, int d) {
  return std::pow(kPi, d / 2.0) * std::tgamma(1.0 - alpha / 2.0) /
         (alpha * std::pow(2.0, alpha - 1.0) * std::tgamma((d + alpha) / 2.0));
}

inline double cauchy_pdf(double x, double scale) {
  return scale / (kPi * (scale * scale + x * x));
}

inline double cauchy_cdf(double x, double scale) { return 0.5 + std::atan(x / scale) / kPi; }

// Density of the isotropic 2D process with symbol c |u|.
inline double cauchy2d_pdf(double r, double c) {
  return c / (2.0 * kPi * std::pow(c * c + r * r, 1.5));
}

}  // namespace oracle
