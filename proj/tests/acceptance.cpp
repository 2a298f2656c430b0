// Acceptance run: one PASS/FAIL/SKIP line per criterion.
//
// A5 needs the extracted 55-study table in the study CSV schema; point
// COUNT_SYNTH_STUDY_TABLE at it to enable the check.

#include <boost/math/distributions/normal.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "countsynth/cli.hpp"
#include "countsynth/count_model.hpp"
#include "countsynth/diagnostics.hpp"
#include "countsynth/mcmc.hpp"
#include "countsynth/meta_regression.hpp"
#include "countsynth/quadrature.hpp"
#include "countsynth/report.hpp"
#include "countsynth/sim.hpp"
#include "oracles.hpp"

using namespace countsynth;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::vector<std::string> notes;
};

class Log {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok) failed_ = true;
    notes_.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { notes_.push_back("     " + what); }
  Outcome done() const { return {failed_ ? Verdict::Fail : Verdict::Pass, notes_}; }

 private:
  bool failed_ = false;
  std::vector<std::string> notes_;
};

std::string num(double x, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

double rel(double a, double b) { return std::abs(a / b - 1.0); }

// --- A1 ----------------------------------------------------------------------

Outcome kernel_identities() {
  Log log;
  std::vector<double> deltas, lambdas, phis;
  for (int i = 0; i < 10; ++i) {
    deltas.push_back(0.1 + 0.25 * i);
    lambdas.push_back(0.02 * std::pow(2.0, i));
    phis.push_back(i == 0 ? 1e-10 : 1e-3 * std::pow(3.0, i - 1));
  }
  double worst = 0.0;
  for (double d : deltas)
    for (double l : lambdas)
      for (double p : phis) worst = std::max(worst, std::abs(zero_prob(d, l, p) - std::exp(nb_log_pmf(0, d * l, p))));
  log.check(worst <= 1e-12, "zero_prob vs exp(nb_log_pmf(0)) on 10x10x10 grid, max |diff| " + num(worst));

  worst = 0.0;
  for (int y = 0; y <= 50; ++y)
    for (double mu = 0.25; mu <= 20.0; mu += 0.25)
      worst = std::max(worst, std::abs(nb_log_pmf(y, mu, 1e-10) - std::log(oracle::poisson_pmf(y, mu))));
  log.check(worst < 1e-6, "Poisson limit at phi=1e-10, y<=50, mu<=20, max |diff| " + num(worst));

  double least = 1.0;
  for (double mu : {0.01, 0.3, 1.0, 2.0, 5.0, 12.0, 20.0})
    for (double phi : {0.0, 1e-9, 0.01, 0.2, 0.5, 1.0}) {
      const int cutoff = static_cast<int>(std::ceil(mu + 20.0 * std::sqrt(mu * (1 + phi * mu)) + 50.0));
      double sum = 0.0;
      for (int y = 0; y <= cutoff; ++y) sum += std::exp(nb_log_pmf(y, mu, phi));
      least = std::min(least, sum);
    }
  log.check(least >= 1 - 1e-9, "NB mass up to ceil(mu + 20 sd + 50), mu <= 20, phi <= 1, min " + num(least, 15));

  worst = 0.0;
  for (double beta : {-0.3, -0.07, -0.001, 0.0, 0.02, 0.5})
    for (double h1 : {1.0, 2.5, 10.0})
      for (double h2 : {0.5, 1.0, 7.0}) {
        const std::vector<double> point{beta};
        const double p1 = pct_change(point, h1).median, p2 = pct_change(point, h2).median;
        const double p12 = pct_change(point, h1 + h2).median;
        const double lhs = (1 + p1 / 100) * (1 + p2 / 100) - 1, rhs = p12 / 100;
        const double scale = std::max({1.0, std::abs(1 + p1 / 100), std::abs(1 + p12 / 100)});
        worst = std::max(worst, std::abs(lhs - rhs) / (scale * std::numeric_limits<double>::epsilon()));
      }
  log.check(worst <= 8.0, "pct_change composition, max error " + num(worst, 3) + " ulp");
  return log.done();
}

// --- A2 ----------------------------------------------------------------------

McmcConfig long_run(std::uint64_t seed) {
  McmcConfig m;
  m.n_chains = 4;
  m.n_adapt = 5000;
  m.n_samples = 50000;
  m.seed = seed;
  m.store_effects = false;
  return m;
}

void compare(Log& log, const std::string& what, std::vector<double> draws, const MarginalPosterior& g,
             bool exponentiate) {
  auto f = [&](double x) { return exponentiate ? std::exp(x) : x; };
  for (auto& d : draws) d = f(d);
  const auto s = summarize_draws(draws, false);
  const double dm = rel(s.median, f(g.median)), dl = rel(s.ci_low, f(g.ci_low)), dh = rel(s.ci_high, f(g.ci_high));
  log.check(dm <= 0.01, what + " median: MCMC " + num(s.median) + " vs grid " + num(f(g.median)) +
                            " (rel " + num(dm, 3) + ")");
  log.check(dl <= 0.02 && dh <= 0.02, what + " 95% bounds: MCMC (" + num(s.ci_low) + ", " + num(s.ci_high) +
                                          ") vs grid (" + num(f(g.ci_low)) + ", " + num(f(g.ci_high)) +
                                          ") (rel " + num(dl, 3) + ", " + num(dh, 3) + ")");
}

Outcome oracle_equivalence() {
  Log log;
  {
    StudyRecord r;
    r.study_id = "single";
    r.n_patients = 120;
    r.study_duration_years = 0.5;
    r.evidence = CountAndZeros{71, 74};
    Dataset ds;
    ds.records = {r};
    const double log_phi = std::log(0.8);
    const auto design = build_design(ds, {});
    const auto q = quadrature_posterior(ds, design, log_phi, PriorSpec{}, {}, GridAxis{-3.0, 2.0, 1001});
    ModelSpec spec;
    spec.rate_random_effects = false;
    spec.overdispersion_random_effects = false;
    spec.fixed_mu_phi = log_phi;
    const Model model(ds, design, {}, {}, spec);
    const auto s = run_chains(model, long_run(101));
    compare(log, "single study, fixed phi: rate", s.pooled("beta0"), q.marginal("beta0"), true);
  }
  {
    SimConfig c;
    c.n_studies = 12;
    c.seed = 4;
    c.truth.sigma_lambda = 0.0;
    c.truth.sigma_phi = 0.0;
    c.format_counts = std::array<int, 4>{0, 4, 4, 4};
    const auto p = simulate_portfolio(c);
    const double log_phi = c.truth.mu_phi;
    const auto design = build_design(p.data, {"year"});
    const GridAxis intercept{-0.8, 1.6, 801}, slope{-0.25, 0.12, 801};
    const auto q = quadrature_posterior(p.data, design, log_phi, PriorSpec{}, {}, intercept, slope);
    ModelSpec spec;
    spec.rate_random_effects = false;
    spec.overdispersion_random_effects = false;
    spec.fixed_mu_phi = log_phi;
    const Model model(p.data, design, {}, {}, spec);
    const auto s = run_chains(model, long_run(202));
    compare(log, "fixed-effect model: intercept rate", s.pooled("beta0"), q.marginal("beta0"), true);
    compare(log, "fixed-effect model: year slope", s.pooled("beta1"), q.marginal("beta1"), false);

    CenteringOptions shifted;
    shifted.year_offset = 2010;
    const auto d2 = build_design(p.data, {"year"}, shifted);
    const auto q2 = quadrature_posterior(p.data, d2, log_phi, PriorSpec{}, {}, GridAxis{-1.7, 1.3, 801}, slope);
    const auto& a = q.marginal("beta1");
    const auto& b = q2.marginal("beta1");
    const double d = std::max({std::abs(a.median - b.median), std::abs(a.ci_low - b.ci_low), std::abs(a.ci_high - b.ci_high)});
    log.check(d <= 1e-6, "slope posterior under year offset 2000 vs 2010, max |diff| " + num(d));
  }
  return log.done();
}

// --- A3 ----------------------------------------------------------------------

Outcome prior_recovery() {
  Log log;
  const PriorSpec prior;
  const Model model(Dataset{}, empty_design({"year"}), prior);
  McmcConfig m;
  m.n_chains = 4;
  m.n_adapt = 5000;
  m.n_samples = 50000;
  m.seed = 303;
  const auto s = run_chains(model, m);

  const boost::math::normal std_normal(0.0, 1.0);
  struct Target {
    std::string name;
    std::function<double(double)> cdf;
  };
  const std::vector<Target> targets = {
      {"beta0", [&](double x) { return (x - prior.beta0.lower) / (prior.beta0.upper - prior.beta0.lower); }},
      {"beta1", [&](double x) { return cdf(std_normal, (x - prior.beta_slope.mean) / prior.beta_slope.sd); }},
      {"sigma_lambda", [&](double x) { return 2 * cdf(std_normal, x / prior.sigma_lambda.scale) - 1; }},
      {"mu_phi", [&](double x) { return (x - prior.mu_phi.lower) / (prior.mu_phi.upper - prior.mu_phi.lower); }},
      {"sigma_phi", [&](double x) { return 2 * cdf(std_normal, x / prior.sigma_phi.scale) - 1; }},
  };
  for (const auto& t : targets) {
    const auto draws = s.pooled(t.name);
    double worst = 0.0;
    std::string detail;
    for (double p : {0.025, 0.5, 0.975}) {
      const double q = quantile(draws, p);
      const double err = std::abs(t.cdf(q) - p);
      worst = std::max(worst, err);
      detail += " " + num(p, 3) + "->" + num(t.cdf(q), 4);
    }
    log.check(worst <= 0.02, t.name + " prior mass at sampled quantiles:" + detail);
  }
  return log.done();
}

// --- A4 ----------------------------------------------------------------------

Outcome simulation_recovery() {
  Log log;
  SimConfig c;
  c.n_studies = 55;
  c.format_counts = std::array<int, 4>{3, 14, 9, 29};
  c.seed = 404;
  McmcConfig m;
  m.seed = 405;
  const auto rep = recovery_report(20, c, m);
  for (const auto& p : rep.parameters)
    log.note(p.name + ": truth " + num(p.truth, 4) + ", covered " + std::to_string(p.covered) + "/" +
             std::to_string(p.replicates) + ", mean bias " + num(p.mean_bias, 4) + ", mean CrI width " +
             num(p.mean_ci_width, 4));
  log.note("fits above the R-hat threshold: " + std::to_string(rep.unconverged_fits));
  const auto& b1 = rep.parameter("beta1");
  log.check(b1.covered >= 17, "beta1 coverage " + std::to_string(b1.covered) + "/20 >= 17");
  log.check(std::abs(b1.mean_bias) <= 0.01, "beta1 mean bias " + num(b1.mean_bias, 4) + " within 0.01");
  return log.done();
}

// --- A5 ----------------------------------------------------------------------

Outcome published_table_check() {
  const char* path = std::getenv("COUNT_SYNTH_STUDY_TABLE");
  if (!path || !*path) return {Verdict::Skip, {"     COUNT_SYNTH_STUDY_TABLE not set; no 55-study table supplied"}};
  Log log;
  const Dataset ds = ingest_csv(path);
  McmcConfig m;
  m.seed = 505;
  FitOptions o;
  o.force = true;
  auto slope = [](const FitReport& r, const std::string& name) { return r.parameter(name); };

  const auto all = fit_model(ds, {"year"}, SubsetKind::All, PriorSpec{}, m, o);
  const auto& b1 = slope(all, "beta1");
  log.check(b1.summary.median >= -0.080 && b1.summary.median <= -0.060,
            "all studies: beta1 median " + num(b1.summary.median, 4) + " in [-0.080, -0.060]");
  const double decrease = -b1.pct_change->median;
  log.check(decrease > 4.0 && decrease < 9.5, "all studies: annual decrease " + num(decrease, 4) + "% in (4.0, 9.5)");

  const auto tp = fit_model(ds, {"year"}, SubsetKind::TruePlacebo, PriorSpec{}, m, o);
  const double tp_pct = slope(tp, "beta1").pct_change->median;
  log.check(std::abs(tp_pct - -7.6) <= 1.5, "true placebos: " + num(tp_pct, 4) + "%/yr vs -7.6 +/- 1.5");
  const auto ics = fit_model(ds, {"year"}, SubsetKind::IcsPlacebo, PriorSpec{}, m, o);
  const double ics_pct = slope(ics, "beta1").pct_change->median;
  log.check(std::abs(ics_pct - -6.7) <= 1.5, "ICS-placebos: " + num(ics_pct, 4) + "%/yr vs -6.7 +/- 1.5");

  // signs of the slopes whose published intervals exclude zero
  const auto sgrq = fit_model(ds, {"year", "sgrq"}, SubsetKind::All, PriorSpec{}, m, o);
  const auto fev1 = fit_model(ds, {"year", "fev1"}, SubsetKind::All, PriorSpec{}, m, o);
  const auto both = fit_model(ds, {"year", "sgrq", "fev1"}, SubsetKind::All, PriorSpec{}, m, o);
  log.check(slope(sgrq, "beta1").summary.median < 0, "SGRQ-adjusted year slope negative");
  log.check(slope(fev1, "beta1").summary.median < 0, "FEV1-adjusted year slope negative");
  log.check(slope(fev1, "beta2").summary.median < 0, "FEV1 slope negative");
  log.check(slope(both, "beta3").summary.median < 0, "FEV1 slope negative when also adjusting for SGRQ");
  const double fev1_pct = slope(fev1, "beta2").pct_change->median;
  log.check(std::abs(fev1_pct - -2.8) <= 1.0, "FEV1 effect " + num(fev1_pct, 4) + "% per point vs -2.8 +/- 1");

  const auto rs = correlation_screen(ds, "sgrq"), rf = correlation_screen(ds, "fev1");
  log.check(std::abs(rs.r - -0.50) <= 0.02, "SGRQ vs year r = " + num(rs.r, 4) + " (n " + std::to_string(rs.n) + ")");
  log.check(std::abs(rf.r - 0.36) <= 0.02, "FEV1 vs year r = " + num(rf.r, 4) + " (n " + std::to_string(rf.n) + ")");
  return log.done();
}

// --- A6 ----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "count-synth");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism_and_round_trips() {
  Log log;
  const auto dir = oracle::scratch_dir("acceptance");

  log.check(cli({"simulate", "--seed", "606", "--format-counts", "3,14,9,29", "--out", (dir / "sim").string()}) == kExitOk,
            "simulate runs");
  Dataset simulated;
  try {
    simulated = ingest_csv(dir / "sim" / "simulated.csv");
    log.check(simulated.size() == 55, "simulated table ingests with 55 studies");
  } catch (const std::exception& e) {
    log.check(false, std::string("simulated table ingests: ") + e.what());
  }

  // a table exercising every format and optional column
  Dataset mixed = simulated;
  for (std::size_t i = 0; i < mixed.records.size(); ++i) {
    auto& r = mixed.records[i];
    if (i % 3 == 0) r.covariables.sgrq = 45.125 + 0.1 * static_cast<double>(i);
    if (i % 4 == 0) r.covariables.fev1 = 1.0 / 3.0 + static_cast<double>(i);
    if (i % 5 == 0) r.mean_followup_years = r.study_duration_years * 0.9;
    if (i % 7 == 0) r.quality_score = static_cast<int>(i % 5) + 1;
  }
  std::ostringstream first;
  write_csv(first, mixed);
  std::istringstream in1(first.str());
  const Dataset again = parse_csv(in1, "first");
  std::ostringstream second;
  write_csv(second, again);
  log.check(again.records == mixed.records && first.str() == second.str(), "ingest -> serialize -> ingest identity");

  const auto input = dir / "sim" / "simulated.csv";
  const std::vector<std::string> quick = {"--chains", "4", "--samples", "5000", "--adapt", "2000", "--seed", "7", "--force", "--svg"};
  auto fit_into = [&](const fs::path& out) {
    std::vector<std::string> a = {"fit", "--input", input.string(), "--out", out.string()};
    a.insert(a.end(), quick.begin(), quick.end());
    return cli(a);
  };
  const bool ran = fit_into(dir / "fit1") == kExitOk && fit_into(dir / "fit2") == kExitOk;
  log.check(ran, "fixed-seed fits run");
  // manifests differ only by output directory
  const std::string m1 = slurp(dir / "fit1" / "manifest.json"), m2 = slurp(dir / "fit2" / "manifest.json");
  bool artifacts = ran;
  for (const char* f : {"parameters.csv", "shrinkage.csv", "trend.csv", "trend.svg"})
    artifacts = artifacts && !slurp(dir / "fit1" / f).empty() && slurp(dir / "fit1" / f) == slurp(dir / "fit2" / f);
  log.check(artifacts, "fixed-seed fit artifacts byte-identical");
  std::string m2_relocated = m2;
  for (auto pos = m2_relocated.find("fit2"); pos != std::string::npos; pos = m2_relocated.find("fit2", pos))
    m2_relocated.replace(pos, 4, "fit1");
  log.check(!m1.empty() && m1 == m2_relocated, "manifests identical apart from the output directory");

  log.check(cli({"fit", "--config", (dir / "fit1" / "manifest.json").string(), "--out", (dir / "fit3").string()}) == kExitOk &&
                slurp(dir / "fit1" / "parameters.csv") == slurp(dir / "fit3" / "parameters.csv"),
            "rerun from manifest reproduces parameters.csv");
  fs::remove_all(dir);
  return log.done();
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"A1", "kernel identities", kernel_identities},
      {"A2", "MCMC vs grid quadrature", oracle_equivalence},
      {"A3", "prior recovery", prior_recovery},
      {"A4", "simulation recovery", simulation_recovery},
      {"A5", "published-table reproduction", published_table_check},
      {"A6", "determinism and round-trips", determinism_and_round_trips},
  };
  bool any_failed = false;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, {std::string("     exception: ") + e.what()}};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& n : o.notes) std::cout << "   " << n << '\n';
    const char* v = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    std::cout << v << ' ' << c.id << ' ' << c.title << " (" << num(secs, 3) << " s)\n" << std::flush;
    any_failed = any_failed || o.verdict == Verdict::Fail;
  }
  return any_failed ? 1 : 0;
}
