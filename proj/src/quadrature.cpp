#include "countsynth/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace countsynth {

namespace {

constexpr int kMinPoints = 400;

MarginalPosterior make_marginal(std::string name, const GridAxis& axis, std::vector<double> w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  MarginalPosterior m;
  m.name = std::move(name);
  m.axis = axis;
  m.mass = std::move(w);
  m.boundary_mass = m.mass.front() + m.mass.back();
  m.mode = axis.centre(static_cast<int>(std::max_element(m.mass.begin(), m.mass.end()) - m.mass.begin()));
  m.median = m.quantile(0.5);
  m.ci_low = m.quantile(0.025);
  m.ci_high = m.quantile(0.975);
  return m;
}

}  // namespace

double MarginalPosterior::quantile(double prob) const {
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  const double h = axis.step();
  double cum = 0.0;
  for (std::size_t j = 0; j < mass.size(); ++j) {
    if (cum + mass[j] >= prob && mass[j] > 0.0) {
      const double frac = std::clamp((prob - cum) / mass[j], 0.0, 1.0);
      return axis.lower + (static_cast<double>(j) + frac) * h;
    }
    cum += mass[j];
  }
  return axis.upper;
}

const MarginalPosterior& QuadratureResult::marginal(const std::string& name) const {
  for (const auto& m : marginals)
    if (m.name == name) return m;
  throw std::out_of_range("quadrature result has no marginal '" + name + "'");
}

QuadratureResult quadrature_posterior(const Dataset& ds, const DesignMatrix& design,
                                      double log_phi, const PriorSpec& prior,
                                      const LikelihoodOptions& likelihood, const GridAxis& intercept,
                                      const std::optional<GridAxis>& slope) {
  if (design.covariables.size() > 1)
    throw std::invalid_argument("quadrature supports at most one slope");
  if (design.covariables.size() == 1 && !slope)
    throw std::invalid_argument("a slope axis is required for a design with a covariable");
  if (design.covariables.empty() && slope)
    throw std::invalid_argument("slope axis given for a design without covariables");
  if (design.n_rows() != ds.size()) throw DimensionMismatch("design rows do not match studies");
  for (const GridAxis* a : {&intercept, slope ? &*slope : nullptr}) {
    if (!a) continue;
    if (a->points < kMinPoints) throw std::invalid_argument("quadrature needs at least 400 points per axis");
    if (!(a->upper > a->lower)) throw std::invalid_argument("empty grid axis");
  }
  prior.validate();

  const int n0 = intercept.points;
  const int n1 = slope ? slope->points : 1;
  std::vector<double> logp(static_cast<std::size_t>(n0) * static_cast<std::size_t>(n1));
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> beta(design.n_coefficients());
  for (int a = 0; a < n0; ++a) {
    beta[0] = intercept.centre(a);
    const double lp0 = uniform_log_pdf(beta[0], prior.beta0);
    for (int b = 0; b < n1; ++b) {
      double lp = lp0;
      if (slope) {
        beta[1] = slope->centre(b);
        lp += normal_log_pdf(beta[1], prior.beta_slope.mean, prior.beta_slope.sd);
      }
      for (std::size_t i = 0; i < ds.size() && std::isfinite(lp); ++i)
        lp += loglik_study(ds.records[i], design.linear_predictor(beta, i), log_phi, likelihood);
      if (std::isnan(lp)) throw std::runtime_error("quadrature: NaN log density");
      logp[static_cast<std::size_t>(a) * n1 + b] = lp;
      peak = std::max(peak, lp);
    }
  }
  if (!std::isfinite(peak)) throw GridTooCoarse("posterior has no mass on the grid");

  std::vector<double> m0(static_cast<std::size_t>(n0), 0.0), m1(static_cast<std::size_t>(n1), 0.0);
  for (int a = 0; a < n0; ++a) {
    for (int b = 0; b < n1; ++b) {
      const double w = std::exp(logp[static_cast<std::size_t>(a) * n1 + b] - peak);
      m0[static_cast<std::size_t>(a)] += w;
      m1[static_cast<std::size_t>(b)] += w;
    }
  }

  QuadratureResult out;
  out.marginals.push_back(make_marginal("beta0", intercept, std::move(m0)));
  if (slope) out.marginals.push_back(make_marginal("beta1", *slope, std::move(m1)));
  out.total_mass = std::accumulate(out.marginals[0].mass.begin(), out.marginals[0].mass.end(), 0.0);
  for (const auto& m : out.marginals) {
    if (m.boundary_mass > kMaxBoundaryMass)
      throw GridTooCoarse("marginal " + m.name + " has boundary mass " +
                          std::to_string(m.boundary_mass) + " on [" + std::to_string(m.axis.lower) +
                          ", " + std::to_string(m.axis.upper) + "]");
  }
  return out;
}

}  // namespace countsynth
