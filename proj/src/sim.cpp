#include "countsynth/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "countsynth/meta_regression.hpp"

namespace countsynth {

namespace {

// Stream index reserved for the format shuffle; studies use 0..n-1.
constexpr std::uint64_t kFormatStream = 0xF0F0F0F0ULL;

std::string sim_id(int i) {
  std::string s = std::to_string(i + 1);
  return "sim" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

}  // namespace

void SimConfig::validate() const {
  if (n_studies < 1) throw std::invalid_argument("n_studies must be positive");
  if (year_min > year_max) throw std::invalid_argument("empty year range");
  if (n_min < 1 || n_min > n_max) throw std::invalid_argument("bad n_patients range");
  if (!(followup_min > 0.0) || followup_min > followup_max)
    throw std::invalid_argument("bad follow-up range");
  if (truth.beta.size() != 2) throw std::invalid_argument("truth.beta must be (intercept, slope)");
  if (truth.sigma_lambda < 0.0 || truth.sigma_phi < 0.0)
    throw std::invalid_argument("heterogeneities must be nonnegative");
  if (!(true_placebo_fraction >= 0.0 && true_placebo_fraction <= 1.0))
    throw std::invalid_argument("true_placebo_fraction outside [0, 1]");
  if (format_counts) {
    const int total = std::accumulate(format_counts->begin(), format_counts->end(), 0);
    if (total != n_studies) throw std::invalid_argument("format_counts must sum to n_studies");
    for (int c : *format_counts)
      if (c < 0) throw std::invalid_argument("format_counts must be nonnegative");
  } else {
    double total = 0.0;
    for (double p : format_mix) {
      if (p < 0.0) throw std::invalid_argument("format_mix must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("format_mix must sum to 1");
  }
}

std::int64_t draw_nb(Rng& rng, double mean, double phi) {
  double rate = mean;
  if (phi >= kPhiPoissonThreshold) {
    const double shape = 1.0 / phi;
    rate = std::gamma_distribution<double>(shape, mean / shape)(rng);
  }
  if (!(rate > 0.0)) return 0;
  return std::poisson_distribution<std::int64_t>(rate)(rng);
}

SimPortfolio simulate_portfolio(const SimConfig& cfg) {
  cfg.validate();
  SimPortfolio out;
  const auto n = static_cast<std::size_t>(cfg.n_studies);

  if (cfg.format_counts) {
    for (int f = 0; f < 4; ++f)
      out.formats.insert(out.formats.end(), static_cast<std::size_t>((*cfg.format_counts)[f]),
                         static_cast<ReportFormat>(f));
    Rng shuffle_rng = make_rng(cfg.seed, kFormatStream);
    std::shuffle(out.formats.begin(), out.formats.end(), shuffle_rng);
  }

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(cfg.seed, i);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    SimStudy s;
    s.study_id = sim_id(static_cast<int>(i));
    s.year = std::uniform_int_distribution<int>(cfg.year_min, cfg.year_max)(rng);
    const double log_n = std::log(cfg.n_min) + u(rng) * (std::log(cfg.n_max) - std::log(cfg.n_min));
    s.n_patients = std::clamp<std::int64_t>(std::llround(std::exp(log_n)), cfg.n_min, cfg.n_max);
    s.followup_years = cfg.followup_min + u(rng) * (cfg.followup_max - cfg.followup_min);
    s.placebo_kind =
        u(rng) < cfg.true_placebo_fraction ? PlaceboKind::TruePlacebo : PlaceboKind::IcsPlacebo;

    const double x = static_cast<double>(s.year) - cfg.year_offset;
    const double log_lambda = cfg.truth.beta[0] + cfg.truth.beta[1] * x +
                              cfg.truth.sigma_lambda * z(rng);
    const double log_phi = cfg.truth.mu_phi + cfg.truth.sigma_phi * z(rng);
    s.lambda = std::exp(log_lambda);
    s.phi = std::exp(log_phi);

    if (!cfg.format_counts) {
      const double pick = u(rng);
      double acc = 0.0;
      int f = 3;
      for (int k = 0; k < 4; ++k) {
        acc += cfg.format_mix[static_cast<std::size_t>(k)];
        if (pick < acc) {
          f = k;
          break;
        }
      }
      out.formats.push_back(static_cast<ReportFormat>(f));
    }

    const double mean = s.followup_years * s.lambda;
    s.counts.resize(static_cast<std::size_t>(s.n_patients));
    for (auto& c : s.counts) c = draw_nb(rng, mean, s.phi);
    out.truth.studies.push_back(std::move(s));
  }
  out.data = degrade_reporting(out.truth, out.formats);
  return out;
}

Dataset degrade_reporting(const SimTruth& truth, const std::vector<ReportFormat>& formats) {
  if (formats.size() != truth.studies.size())
    throw std::invalid_argument("degrade_reporting: one format per study required");
  Dataset ds;
  ds.provenance = {"simulation", ""};
  for (std::size_t i = 0; i < truth.studies.size(); ++i) {
    const auto& s = truth.studies[i];
    StudyRecord r;
    r.study_id = s.study_id;
    r.publication_year = s.year;
    r.n_patients = s.n_patients;
    r.study_duration_years = s.followup_years;
    r.mean_followup_years = s.followup_years;
    r.placebo_kind = s.placebo_kind;

    const std::int64_t total = std::accumulate(s.counts.begin(), s.counts.end(), std::int64_t{0});
    const auto zeros = static_cast<std::int64_t>(std::count(s.counts.begin(), s.counts.end(), 0));
    switch (formats[i]) {
      case ReportFormat::RateWithSE: {
        if (total == 0) {
          r.evidence = CountAndZeros{total, zeros};
          break;
        }
        const double n = static_cast<double>(s.n_patients);
        const double m = static_cast<double>(total) / n;
        double ss = 0.0;
        for (auto c : s.counts) ss += (static_cast<double>(c) - m) * (static_cast<double>(c) - m);
        const double v = s.n_patients > 1 ? ss / (n - 1.0) : m;
        // moment estimate φ̂ = max(0, (v − m)/m²) turns δλ̂(1 + φ̂δλ̂) into max(v, m)
        const double per_patient_var = std::max(v, m);
        const double se = std::sqrt(per_patient_var * n) / (n * s.followup_years);
        r.evidence = RateWithSE{m / s.followup_years, se};
        break;
      }
      case ReportFormat::CountAndZeros:
        r.evidence = CountAndZeros{total, zeros};
        break;
      case ReportFormat::CountOnly:
        r.evidence = CountOnly{total};
        break;
      case ReportFormat::ZerosOnly:
        r.evidence = ZerosOnly{zeros};
        break;
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

const ParameterRecovery& RecoveryReport::parameter(const std::string& name) const {
  for (const auto& p : parameters)
    if (p.name == name) return p;
  throw std::out_of_range("recovery report has no parameter '" + name + "'");
}

RecoveryReport recovery_report(int n_replicates, const SimConfig& cfg, const McmcConfig& mcmc,
                               const PriorSpec& prior) {
  if (n_replicates < 10) throw std::invalid_argument("recovery_report needs at least 10 replicates");
  cfg.validate();

  RecoveryReport rep;
  const std::vector<std::pair<std::string, double>> truths = {
      {"beta0", cfg.truth.beta[0]},
      {"beta1", cfg.truth.beta[1]},
      {"sigma_lambda", cfg.truth.sigma_lambda},
      {"mu_phi", cfg.truth.mu_phi},
      {"sigma_phi", cfg.truth.sigma_phi}};
  for (const auto& [name, value] : truths) rep.parameters.push_back({name, value, 0, 0, 0.0, 0.0, {}});

  FitOptions options;
  options.force = true;
  options.centering.year_offset = cfg.year_offset;
  for (int r = 0; r < n_replicates; ++r) {
    SimConfig c = cfg;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
    McmcConfig m = mcmc;
    m.seed = derive_seed(mcmc.seed, static_cast<std::uint64_t>(r));
    const auto portfolio = simulate_portfolio(c);
    const auto fit = fit_model(portfolio.data, {"year"}, SubsetKind::All, prior, m, options);
    if (!fit.converged) ++rep.unconverged_fits;
    for (auto& p : rep.parameters) {
      const auto& s = fit.parameter(p.name).summary;
      p.covered += (s.ci_low <= p.truth && p.truth <= s.ci_high);
      ++p.replicates;
      p.mean_bias += s.median - p.truth;
      p.mean_ci_width += s.ci_high - s.ci_low;
      p.medians.push_back(s.median);
    }
  }
  for (auto& p : rep.parameters) {
    p.mean_bias /= p.replicates;
    p.mean_ci_width /= p.replicates;
  }
  return rep;
}

}  // namespace countsynth
