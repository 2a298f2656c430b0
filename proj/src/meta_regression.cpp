#include "countsynth/meta_regression.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <tuple>

namespace countsynth {

namespace {

constexpr double kZ975 = 1.959963984540054;

std::string parameter_label(const std::string& name, const DesignMatrix& design) {
  if (name == "beta0") return "Rate intercept beta0";
  if (name == "sigma_lambda") return "Rate random effect sigma_lambda";
  if (name == "mu_phi") return "Overdispersion mean mu_phi";
  if (name == "sigma_phi") return "Overdispersion random effect sigma_phi";
  const auto j = std::stoul(name.substr(4));
  return "Rate slope " + name + " (" + covariable_label(design.covariables.at(j - 1)) + ")";
}

}  // namespace

const ParameterRow& FitReport::parameter(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("fit report has no parameter '" + name + "'");
}

ConvergenceFailure::ConvergenceFailure(FitReport r)
    : std::runtime_error("MCMC did not converge (max R-hat " + std::to_string(r.max_rhat) +
                         " above threshold " + std::to_string(r.mcmc.rhat_threshold) + ")"),
      report(std::move(r)) {}

std::string fit_label(SubsetKind subset, const std::vector<std::string>& covariables,
                      std::size_t n_studies) {
  std::vector<std::string> adjust;
  for (const auto& c : covariables)
    if (c != "year") adjust.push_back(c == "sgrq" ? "SGRQ" : c == "fev1" ? "FEV1" : c);
  std::string adj;
  for (std::size_t i = 0; i < adjust.size(); ++i)
    adj += (i == 0 ? "" : i + 1 == adjust.size() ? " and " : ", ") + adjust[i];

  std::string base;
  switch (subset) {
    case SubsetKind::All:
      base = adjust.empty() ? "All studies" : "Adjusting for " + adj;
      break;
    case SubsetKind::TruePlacebo:
      base = adjust.empty() ? "True placebos" : "True placebos, adjusting for " + adj;
      break;
    case SubsetKind::IcsPlacebo:
      base = adjust.empty() ? "ICS-placebos" : "ICS-placebos, adjusting for " + adj;
      break;
  }
  return base + " (" + std::to_string(n_studies) + " studies)";
}

PosteriorSummary pct_change(std::span<const double> beta_draws, double horizon) {
  std::vector<double> t(beta_draws.size());
  std::transform(beta_draws.begin(), beta_draws.end(), t.begin(),
                 [horizon](double b) { return 100.0 * std::expm1(b * horizon); });
  return summarize_draws(t, false);
}

std::vector<ShrinkageRow> shrinkage_rates(const PosteriorSamples& samples, const Dataset& ds) {
  std::vector<ShrinkageRow> rows;
  for (const auto& rec : ds.records) {
    auto draws = samples.pooled("log_lambda[" + rec.study_id + "]");
    for (auto& d : draws) d = std::exp(d);
    rows.push_back({rec.study_id, rec.publication_year, evidence_format_name(rec.evidence),
                    summarize_draws(draws, false)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ShrinkageRow& a, const ShrinkageRow& b) {
    return std::tie(a.year, a.study_id) < std::tie(b.year, b.study_id);
  });
  return rows;
}

std::vector<TrendPoint> trend_curve(const PosteriorSamples& samples, const DesignMatrix& design,
                                    std::span<const int> year_grid) {
  if (!design.year_only())
    throw CovariableMismatch(
        "trend curve is only defined for unadjusted or year-only fits; this fit adjusts for "
        "other covariables");
  const auto b0 = samples.pooled("beta0");
  std::vector<double> b1;
  double offset = 0.0;
  if (!design.covariables.empty()) {
    b1 = samples.pooled("beta1");
    offset = design.offsets[0];
  }
  std::vector<TrendPoint> out;
  std::vector<double> rate(b0.size());
  for (const int y : year_grid) {
    const double x = static_cast<double>(y) - offset;
    for (std::size_t d = 0; d < b0.size(); ++d)
      rate[d] = std::exp(b0[d] + (b1.empty() ? 0.0 : b1[d] * x));
    const auto s = summarize_draws(rate, false);
    out.push_back({y, s.median, s.ci_low, s.ci_high});
  }
  return out;
}

FitReport fit_model(const Dataset& ds, const std::vector<std::string>& covariables,
                    SubsetKind subset, const PriorSpec& prior, const McmcConfig& mcmc,
                    const FitOptions& options, PosteriorSamples* samples_out) {
  mcmc.validate();
  if (!mcmc.store_effects) throw std::invalid_argument("a fit needs the study-effect draws");

  const Dataset sub = subset_filter(ds, subset);
  const DesignMatrix full_design = build_design(sub, covariables, options.centering);
  const Dataset fit_ds = restrict_to_design(sub, full_design);
  DesignMatrix design = full_design;
  for (std::size_t i = 0; i < design.included.size(); ++i) design.included[i] = i;

  const Model model(fit_ds, design, prior, options.likelihood);
  PosteriorSamples samples = run_chains(model, mcmc);

  FitReport rep;
  rep.subset = subset;
  rep.covariables = design.covariables;
  rep.centering_offsets = design.offsets;
  rep.n_included = fit_ds.size();
  rep.excluded = full_design.excluded;
  rep.label = fit_label(subset, design.covariables, rep.n_included);
  rep.mcmc = mcmc;
  rep.prior = prior;
  rep.likelihood = options.likelihood;

  std::vector<std::string> hyper;
  for (std::size_t j = 0; j < model.n_beta(); ++j) hyper.push_back("beta" + std::to_string(j));
  hyper.insert(hyper.end(), {"sigma_lambda", "mu_phi", "sigma_phi"});

  rep.max_rhat = 0.0;
  rep.min_ess = std::numeric_limits<double>::infinity();
  for (const auto& name : hyper) {
    ParameterRow row;
    row.name = name;
    row.label = parameter_label(name, design);
    row.summary = summarize(samples, name);
    if (name != "beta0" && name.rfind("beta", 0) == 0) {
      const auto draws = samples.pooled(name);
      row.pct_change = pct_change(draws, 1.0);
      const auto j = std::stoul(name.substr(4));
      if (design.covariables.at(j - 1) == "year") row.pct_change_decade = pct_change(draws, 10.0);
    }
    rep.max_rhat = std::max(rep.max_rhat, row.summary.rhat);
    rep.min_ess = std::min(rep.min_ess, row.summary.ess);
    if (row.summary.rhat > mcmc.rhat_threshold) rep.unconverged.push_back(name);
    rep.parameters.push_back(std::move(row));
  }
  rep.converged = rep.unconverged.empty();

  rep.shrinkage = shrinkage_rates(samples, fit_ds);
  if (design.year_only()) {
    std::vector<int> grid = options.trend_years;
    if (grid.empty()) {
      const auto [lo, hi] = std::minmax_element(
          fit_ds.records.begin(), fit_ds.records.end(),
          [](const auto& a, const auto& b) { return a.publication_year < b.publication_year; });
      for (int y = lo->publication_year; y <= hi->publication_year; ++y) grid.push_back(y);
    }
    rep.trend = trend_curve(samples, design, grid);
  }

  if (samples_out) *samples_out = std::move(samples);
  if (!rep.converged && !options.force) throw ConvergenceFailure(std::move(rep));
  return rep;
}

CorrelationResult correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation: length mismatch");
  const std::size_t n = x.size();
  if (n < 4) throw TooFewStudies("correlation needs at least 4 pairs, got " + std::to_string(n));
  const double dn = static_cast<double>(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= dn;
  my /= dn;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    throw std::invalid_argument("correlation: a variable is constant");

  CorrelationResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(out.r) >= 1.0) {
    out.ci_low = out.ci_high = out.r;
    out.p_value = 0.0;
    return out;
  }
  const double z = std::atanh(out.r);
  const double half = kZ975 / std::sqrt(dn - 3.0);
  out.ci_low = std::tanh(z - half);
  out.ci_high = std::tanh(z + half);
  const double t = out.r * std::sqrt((dn - 2.0) / (1.0 - out.r * out.r));
  const boost::math::students_t dist(dn - 2.0);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return out;
}

CorrelationResult correlation_screen(const Dataset& ds, const std::string& covariable) {
  std::vector<double> x, y;
  for (const auto& rec : ds.records) {
    if (auto v = covariable_value(rec, covariable)) {
      x.push_back(*v);
      y.push_back(static_cast<double>(rec.publication_year));
    }
  }
  if (x.size() < 4)
    throw TooFewStudies("covariable '" + covariable + "' is reported by " +
                        std::to_string(x.size()) + " studies; at least 4 are needed");
  auto out = correlation(x, y);
  out.covariable = covariable;
  return out;
}

}  // namespace countsynth
