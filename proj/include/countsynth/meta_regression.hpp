#pragma once

// Fit orchestration and the derived quantities reported from a fit:
// percentage changes, shrinkage estimates, trend curves and the
// covariable-vs-year correlation screen.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "countsynth/count_model.hpp"
#include "countsynth/design.hpp"
#include "countsynth/diagnostics.hpp"
#include "countsynth/mcmc.hpp"
#include "countsynth/study_data.hpp"

namespace countsynth {

struct ParameterRow {
  std::string name;   // beta0, beta1, ..., sigma_lambda, mu_phi, sigma_phi
  std::string label;  // e.g. "Rate slope beta1 (publication year)"
  PosteriorSummary summary;
  // Slopes only: 100·(exp(β) − 1) per covariable unit, and per decade for year.
  std::optional<PosteriorSummary> pct_change;
  std::optional<PosteriorSummary> pct_change_decade;
};

struct ShrinkageRow {
  std::string study_id;
  int year = 0;
  std::string evidence_format;
  PosteriorSummary rate;  // annualized exp(log λ_i)
};

struct TrendPoint {
  int year = 0;
  double median = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct FitOptions {
  bool force = false;  // report even when hyperparameters have not converged
  LikelihoodOptions likelihood;
  CenteringOptions centering;
  std::vector<int> trend_years;  // empty: every year from first to last study
};

struct FitReport {
  std::string label;  // e.g. "True placebos (21 studies)"
  SubsetKind subset = SubsetKind::All;
  std::vector<std::string> covariables;
  std::vector<double> centering_offsets;
  std::size_t n_included = 0;
  std::vector<std::string> excluded;

  std::vector<ParameterRow> parameters;
  double max_rhat = 0.0;
  double min_ess = 0.0;
  bool converged = true;
  std::vector<std::string> unconverged;  // hyperparameters above the R-hat threshold

  std::vector<ShrinkageRow> shrinkage;
  std::vector<TrendPoint> trend;  // empty when the fit adjusts for other covariables

  McmcConfig mcmc;
  PriorSpec prior;
  LikelihoodOptions likelihood;

  const ParameterRow& parameter(const std::string& name) const;  // throws std::out_of_range
};

class ConvergenceFailure : public std::runtime_error {
 public:
  explicit ConvergenceFailure(FitReport report);
  FitReport report;
};

class CovariableMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TooFewStudies : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string fit_label(SubsetKind subset, const std::vector<std::string>& covariables,
                      std::size_t n_studies);

// subset → design → MCMC → summaries. Throws ConvergenceFailure when a
// hyperparameter's R-hat exceeds the threshold and options.force is false.
// The raw draws are handed back through `samples_out` when given.
FitReport fit_model(const Dataset& ds, const std::vector<std::string>& covariables,
                    SubsetKind subset, const PriorSpec& prior, const McmcConfig& mcmc,
                    const FitOptions& options = {}, PosteriorSamples* samples_out = nullptr);

// Summary of 100·(exp(β·horizon) − 1) over the draws.
PosteriorSummary pct_change(std::span<const double> beta_draws, double horizon);

// Per-study posterior of exp(log λ_i), ordered by (year, study_id).
std::vector<ShrinkageRow> shrinkage_rates(const PosteriorSamples& samples, const Dataset& ds);

// Posterior of exp(β_0 + β_year·(y − offset)) per grid year.
std::vector<TrendPoint> trend_curve(const PosteriorSamples& samples, const DesignMatrix& design,
                                    std::span<const int> year_grid);

struct CorrelationResult {
  std::string covariable;
  std::size_t n = 0;
  double r = 0.0;
  double ci_low = 0.0;  // Fisher z, 95%
  double ci_high = 0.0;
  double p_value = 1.0;  // two-sided t-test of r = 0
};

// Pearson correlation with Fisher-z interval and t-test p-value.
CorrelationResult correlation(std::span<const double> x, std::span<const double> y);

// Correlation of a covariable with publication year over reporting studies.
CorrelationResult correlation_screen(const Dataset& ds, const std::string& covariable);

}  // namespace countsynth
