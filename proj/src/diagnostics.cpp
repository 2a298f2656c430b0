#include "countsynth/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace countsynth {

namespace {

constexpr std::size_t kMinChains = 2;
constexpr std::size_t kMinDraws = 100;

void check_chains(std::span<const std::vector<double>> chains) {
  if (chains.size() < kMinChains)
    throw InsufficientDraws("need at least 2 chains, got " + std::to_string(chains.size()));
  const std::size_t n = chains[0].size();
  for (const auto& c : chains) {
    if (c.size() != n) throw InsufficientDraws("chains differ in length");
  }
  if (n < kMinDraws)
    throw InsufficientDraws("need at least 100 draws per chain, got " + std::to_string(n));
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_var(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

std::vector<std::vector<double>> chains_of(const PosteriorSamples& s, const std::string& p) {
  return s.draws.at(s.index(p));
}

}  // namespace

double rhat(std::span<const std::vector<double>> chains) {
  check_chains(chains);
  const std::size_t half = chains[0].size() / 2;
  std::vector<std::span<const double>> parts;
  for (const auto& c : chains) {
    const std::span<const double> all(c);
    parts.push_back(all.first(half));
    parts.push_back(all.last(half));
  }
  const double m = static_cast<double>(parts.size());
  const double n = static_cast<double>(half);
  std::vector<double> means, vars;
  for (auto p : parts) {
    means.push_back(mean_of(p));
    vars.push_back(sample_var(p, means.back()));
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double rhat(const PosteriorSamples& samples, const std::string& param) {
  return rhat(chains_of(samples, param));
}

double ess(std::span<const std::vector<double>> chains) {
  check_chains(chains);
  const std::size_t m = chains.size();
  const std::size_t n = chains[0].size();
  const double dn = static_cast<double>(n);

  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = mean_of(chains[j]);
    vars[j] = sample_var(chains[j], means[j]);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= dn / (static_cast<double>(m) - 1.0);
  const double var_plus = (dn - 1.0) / dn * w + b / dn;
  const double total = static_cast<double>(m * n);
  if (!(var_plus > 0.0)) return total;

  // ρ_t = 1 − (W − mean_j γ_j(t)) / var⁺ with γ_j the biased autocovariance.
  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto& x = chains[j];
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - means[j]) * (x[i + lag] - means[j]);
      acov += s / dn;
    }
    acov /= static_cast<double>(m);
    return 1.0 - (w - acov) / var_plus;
  };

  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    const double rho_even = t == 0 ? 1.0 : rho(t);
    double pair = rho_even + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);  // initial monotone sequence
    sum_pairs += pair;
    prev_pair = pair;
  }
  const double tau = -1.0 + 2.0 * sum_pairs;
  if (!(tau > 0.0)) return total;
  return std::min(total, total / tau);
}

double ess(const PosteriorSamples& samples, const std::string& param) {
  return ess(chains_of(samples, param));
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::vector<double> values, double prob) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, prob);
}

TailProbability posterior_tail_probability(std::span<const double> draws) {
  const double n = static_cast<double>(draws.size());
  std::size_t le = 0, ge = 0;
  for (double d : draws) {
    le += d <= 0.0;
    ge += d >= 0.0;
  }
  if (le == 0 || ge == 0) return {2.0 / n, true};
  const double p = 2.0 * std::min(static_cast<double>(le), static_cast<double>(ge)) / n;
  return {std::min(1.0, p), false};
}

PosteriorSummary summarize_draws(std::span<const double> draws, bool with_tail_probability) {
  if (draws.empty()) throw std::invalid_argument("summarize: no draws");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  PosteriorSummary s;
  s.median = quantile_sorted(sorted, 0.5);
  s.ci_low = quantile_sorted(sorted, 0.025);
  s.ci_high = quantile_sorted(sorted, 0.975);
  if (with_tail_probability) s.p_b = posterior_tail_probability(draws);
  return s;
}

PosteriorSummary summarize(const PosteriorSamples& samples, const std::string& param) {
  const bool slope = param.rfind("beta", 0) == 0 && param != "beta0";
  const auto pooled = samples.pooled(param);
  PosteriorSummary s = summarize_draws(pooled, slope);
  if (samples.n_chains >= kMinChains && samples.n_draws >= kMinDraws) {
    s.rhat = rhat(samples, param);
    s.ess = ess(samples, param);
  }
  return s;
}

}  // namespace countsynth
