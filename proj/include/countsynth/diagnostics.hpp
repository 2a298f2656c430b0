#pragma once

// Convergence diagnostics and posterior summaries.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "countsynth/mcmc.hpp"

namespace countsynth {

class InsufficientDraws : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Split-chain potential scale reduction (each chain halved, then the
// Gelman-Rubin ratio over 2m half-chains). Needs ≥ 2 chains of ≥ 100 draws.
double rhat(std::span<const std::vector<double>> chains);
double rhat(const PosteriorSamples& samples, const std::string& param);

// Multi-chain effective sample size: autocorrelations from the combined
// variance estimate, truncated by Geyer's initial monotone sequence.
double ess(std::span<const std::vector<double>> chains);
double ess(const PosteriorSamples& samples, const std::string& param);

// Type-7 empirical quantile (linear interpolation between order statistics).
double quantile_sorted(std::span<const double> sorted, double prob);
double quantile(std::vector<double> values, double prob);

struct TailProbability {
  double value = 1.0;
  bool upper_bound = false;  // true: one tail was empty, value is 2/N
};

// 2·min(P(draw ≤ 0), P(draw ≥ 0)), capped at 1; "< 2/N" when a tail is empty.
TailProbability posterior_tail_probability(std::span<const double> draws);

struct PosteriorSummary {
  double median = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::optional<TailProbability> p_b;
  double rhat = std::numeric_limits<double>::quiet_NaN();
  double ess = std::numeric_limits<double>::quiet_NaN();
};

// Quantiles and, when requested, p_b of a pooled draw vector.
PosteriorSummary summarize_draws(std::span<const double> draws, bool with_tail_probability);

// Full summary for one parameter; p_b is attached to regression
// coefficients (names starting with "beta"). rhat/ess are NaN when there are
// too few chains or draws.
PosteriorSummary summarize(const PosteriorSamples& samples, const std::string& param);

}  // namespace countsynth
