#pragma once

// Special functions used by the count likelihoods.

namespace countsynth {

// log Γ(x) for x > 0 (Lanczos, g = 7, nine terms). Relative error stays
// below 1e-13 across the range used by the model.
double log_gamma(double x);

// log Γ(n + 1).
double log_factorial(double n);

// Σ_{j=0}^{y-1} log1p(j / r) = log Γ(r + y) − log Γ(r) − y log r.
// Stable for very large r where the plain log-gamma difference cancels.
double log_rising_scaled(double r, double y);

// Stirling-series remainder of log Γ(x) for x ≥ 15.
double stirling_correction(double x);

}  // namespace countsynth
