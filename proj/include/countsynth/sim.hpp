#pragma once

// Synthetic study portfolios drawn from the hierarchical model, their
// degradation into the four reporting formats, and simulation-recovery runs.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "countsynth/count_model.hpp"
#include "countsynth/mcmc.hpp"
#include "countsynth/study_data.hpp"

namespace countsynth {

enum class ReportFormat { RateWithSE = 0, CountAndZeros = 1, CountOnly = 2, ZerosOnly = 3 };

struct SimConfig {
  int n_studies = 55;
  HyperParams truth{{0.434, -0.070}, 0.409, -0.092, 0.709};  // β = (intercept, year slope)
  double year_offset = 2000.0;
  int year_min = 1995;
  int year_max = 2018;
  // n_patients is log-uniform on [n_min, n_max]; follow-up uniform in years.
  int n_min = 100;
  int n_max = 800;
  double followup_min = 0.25;
  double followup_max = 1.0;
  // Probabilities of (rate+SE, count+zeros, count, zeros) per study...
  std::array<double, 4> format_mix{3.0 / 55, 14.0 / 55, 9.0 / 55, 29.0 / 55};
  // ...or an exact census, shuffled across studies.
  std::optional<std::array<int, 4>> format_counts;
  double true_placebo_fraction = 21.0 / 55.0;
  std::uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

struct SimStudy {
  std::string study_id;
  int year = 2000;
  std::int64_t n_patients = 1;
  double followup_years = 1.0;
  PlaceboKind placebo_kind = PlaceboKind::TruePlacebo;
  double lambda = 1.0;
  double phi = 0.0;
  std::vector<std::int64_t> counts;  // per patient, before degradation
};

struct SimTruth {
  std::vector<SimStudy> studies;
};

struct SimPortfolio {
  Dataset data;
  SimTruth truth;
  std::vector<ReportFormat> formats;
};

// Draws effects from the hierarchy, then per-patient counts as Gamma-Poisson
// mixtures (Gamma shape 1/φ, mean δλ). Study i uses its own RNG stream.
SimPortfolio simulate_portfolio(const SimConfig& cfg);

// One per-patient NB(mean, φ) draw via the Gamma-Poisson mixture.
std::int64_t draw_nb(Rng& rng, double mean, double phi);

// Projects each study onto its reporting format. A rate+SE study with no
// events cannot report a positive rate and falls back to count+zeros.
Dataset degrade_reporting(const SimTruth& truth, const std::vector<ReportFormat>& formats);

struct ParameterRecovery {
  std::string name;
  double truth = 0.0;
  int covered = 0;
  int replicates = 0;
  double mean_bias = 0.0;  // mean of (posterior median − truth)
  double mean_ci_width = 0.0;
  std::vector<double> medians;
};

struct RecoveryReport {
  std::vector<ParameterRecovery> parameters;  // beta0, beta1, sigma_lambda, mu_phi, sigma_phi
  int unconverged_fits = 0;
  const ParameterRecovery& parameter(const std::string& name) const;
};

// Replicate r simulates with seed derive_seed(cfg.seed, r) and fits the
// year-only model with MCMC seed derive_seed(mcmc.seed, r).
RecoveryReport recovery_report(int n_replicates, const SimConfig& cfg, const McmcConfig& mcmc,
                               const PriorSpec& prior = {});

}  // namespace countsynth
