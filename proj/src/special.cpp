#include "countsynth/special.hpp"

#include <cmath>
#include <numbers>

namespace countsynth {

namespace {

constexpr double kLanczosG = 7.0;
constexpr double kLanczosCoeff[9] = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Direct summation is exact enough and cheaper than two series evaluations
// for short runs.
constexpr double kDirectSumLimit = 32.0;
constexpr double kStirlingMin = 15.0;

}  // namespace

double log_gamma(double x) {
  if (x < 0.5) {
    // Reflection keeps the Lanczos sum in its accurate half-plane.
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) -
           log_gamma(1.0 - x);
  }
  if (x >= kStirlingMin) {
    return (x - 0.5) * std::log(x) - x + kHalfLog2Pi + stirling_correction(x);
  }
  x -= 1.0;
  double a = kLanczosCoeff[0];
  for (int i = 1; i < 9; ++i) a += kLanczosCoeff[i] / (x + i);
  const double t = x + kLanczosG + 0.5;
  return kHalfLog2Pi + (x + 0.5) * std::log(t) - t + std::log(a);
}

double log_factorial(double n) { return log_gamma(n + 1.0); }

double stirling_correction(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // 1/(12x) − 1/(360x³) + 1/(1260x⁵) − 1/(1680x⁷) + 1/(1188x⁹)
  return inv * (1.0 / 12.0 -
                inv2 * (1.0 / 360.0 -
                        inv2 * (1.0 / 1260.0 -
                                inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
}

double log_rising_scaled(double r, double y) {
  if (y <= 0.0) return 0.0;
  if (y < kDirectSumLimit) {
    double s = 0.0;
    for (double j = 1.0; j < y; j += 1.0) s += std::log1p(j / r);
    return s;
  }
  if (r >= kStirlingMin) {
    // Stirling on both gammas; the leading terms combine into a log1p.
    return (r + y - 0.5) * std::log1p(y / r) - y + stirling_correction(r + y) -
           stirling_correction(r);
  }
  return log_gamma(r + y) - log_gamma(r) - y * std::log(r);
}

}  // namespace countsynth
