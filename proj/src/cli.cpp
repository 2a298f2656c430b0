#include "countsynth/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "countsynth/meta_regression.hpp"
#include "countsynth/report.hpp"
#include "countsynth/sim.hpp"
#include "countsynth/text.hpp"

namespace countsynth {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kDefaultSeed = 20190816;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::set<std::string> kFitKeys = {
    "input", "subset", "covariables", "chains", "samples", "adapt", "thin", "seed", "out", "svg",
    "force", "exposure", "rate_scale", "year_offset", "rhat_threshold", "parallel", "prior"};
const std::set<std::string> kSimulateKeys = {
    "seed", "out", "studies", "format_counts", "format_mix", "truth", "year_min", "year_max",
    "n_min", "n_max", "followup_min", "followup_max", "true_placebo_fraction", "year_offset"};
const std::set<std::string> kScreenKeys = {"input", "covariables", "out"};
const std::set<std::string> kSummarizeKeys = {"input", "out"};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + p.string() + "'");
  return f;
}

std::uint64_t seed_default() {
  if (const char* env = std::getenv(kSeedEnvironmentVariable)) {
    const auto v = parse_int(env);
    if (!v || *v < 0)
      throw UsageError(std::string(kSeedEnvironmentVariable) + " is not a nonnegative integer");
    return static_cast<std::uint64_t>(*v);
  }
  return kDefaultSeed;
}

// Flags first, then the --config file on top. A run manifest is accepted as
// a config file: its "config" member is used, except that --out still wins.
json merged_config(json flags, const std::string& config_path, const std::set<std::string>& keys) {
  if (!config_path.empty()) {
    json file = json::parse(read_file(config_path));
    if (file.is_object() && file.contains("config") && file.contains("hash")) {
      file = json(file["config"]);
      if (flags.contains("out")) file.erase("out");
    }
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    for (auto& [k, v] : file.items()) flags[k] = v;
  }
  for (auto& [k, v] : flags.items()) {
    (void)v;
    if (!keys.count(k)) throw UsageError("unknown configuration key '" + k + "'");
  }
  return flags;
}

std::vector<std::string> covariables_of(const json& cfg, std::vector<std::string> fallback) {
  if (!cfg.contains("covariables")) return fallback;
  const auto& c = cfg["covariables"];
  if (c.is_string()) return split_list(c.get<std::string>());
  return c.get<std::vector<std::string>>();
}

PriorSpec prior_of(const json& cfg) {
  PriorSpec p;
  if (!cfg.contains("prior")) return p;
  const auto& j = cfg["prior"];
  for (auto& [k, v] : j.items()) {
    if (k == "beta0") p.beta0 = {v.at(0).get<double>(), v.at(1).get<double>()};
    else if (k == "beta_slope") p.beta_slope = {v.at(0).get<double>(), v.at(1).get<double>()};
    else if (k == "sigma_lambda") p.sigma_lambda = {v.get<double>()};
    else if (k == "mu_phi") p.mu_phi = {v.at(0).get<double>(), v.at(1).get<double>()};
    else if (k == "sigma_phi") p.sigma_phi = {v.get<double>()};
    else throw UsageError("unknown prior key '" + k + "'");
  }
  p.validate();
  return p;
}

json prior_json(const PriorSpec& p) {
  return {{"beta0", {p.beta0.lower, p.beta0.upper}},
          {"beta_slope", {p.beta_slope.mean, p.beta_slope.sd}},
          {"sigma_lambda", p.sigma_lambda.scale},
          {"mu_phi", {p.mu_phi.lower, p.mu_phi.upper}},
          {"sigma_phi", p.sigma_phi.scale}};
}

// Hash over everything that determines the outputs; the output directory
// is left out so a rerun elsewhere carries the same hash.
std::string run_hash(const std::string& command, json cfg, const std::string& input_digest) {
  cfg.erase("out");
  return fnv1a_hex(command + "\n" + cfg.dump() + "\n" + input_digest);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& cfg,
                    const std::string& input_digest, const std::string& hash,
                    const json& diagnostics) {
  json m = {{"tool", "count-synth"},
            {"command", command},
            {"config", cfg},
            {"input_digest", input_digest},
            {"hash", hash},
            {"diagnostics", diagnostics}};
  auto f = open_out(dir / "manifest.json");
  f << m.dump(2) << '\n';
}

fs::path prepare_out(const json& cfg) {
  const fs::path dir = cfg.value("out", std::string("."));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

std::string require_input(const json& cfg) {
  if (!cfg.contains("input")) throw UsageError("--input is required");
  return cfg["input"].get<std::string>();
}

// --- subcommands -------------------------------------------------------------

int cmd_fit(json cfg, std::ostream& out, std::ostream& err) {
  if (!cfg.contains("seed")) cfg["seed"] = seed_default();
  const std::string input = require_input(cfg);
  const std::string raw = read_file(input);
  std::istringstream in(raw);
  const Dataset ds = parse_csv(in, input);

  McmcConfig m;
  m.n_chains = cfg.value("chains", m.n_chains);
  m.n_samples = cfg.value("samples", m.n_samples);
  m.n_adapt = cfg.value("adapt", m.n_adapt);
  m.thin = cfg.value("thin", m.thin);
  m.seed = cfg["seed"].get<std::uint64_t>();
  m.rhat_threshold = cfg.value("rhat_threshold", m.rhat_threshold);
  m.parallel = cfg.value("parallel", m.parallel);
  m.validate();

  FitOptions options;
  options.force = cfg.value("force", false);
  options.centering.year_offset = cfg.value("year_offset", options.centering.year_offset);
  const std::string exposure = cfg.value("exposure", std::string("mean_followup"));
  if (exposure == "mean_followup") options.likelihood.exposure = ExposureBasis::MeanFollowup;
  else if (exposure == "nominal_duration") options.likelihood.exposure = ExposureBasis::NominalDuration;
  else throw UsageError("exposure must be mean_followup or nominal_duration");
  const std::string scale = cfg.value("rate_scale", std::string("log"));
  if (scale == "log") options.likelihood.rate_scale = RateScale::Log;
  else if (scale == "linear") options.likelihood.rate_scale = RateScale::Linear;
  else throw UsageError("rate_scale must be log or linear");

  const SubsetKind subset = parse_subset(cfg.value("subset", std::string("all")));
  const auto covariables = covariables_of(cfg, {"year"});
  const PriorSpec prior = prior_of(cfg);

  // Effective configuration, fully spelled out.
  cfg["subset"] = subset_name(subset);
  cfg["covariables"] = covariables;
  cfg["chains"] = m.n_chains;
  cfg["samples"] = m.n_samples;
  cfg["adapt"] = m.n_adapt;
  cfg["thin"] = m.thin;
  cfg["rhat_threshold"] = m.rhat_threshold;
  cfg["parallel"] = m.parallel;
  cfg["force"] = options.force;
  cfg["svg"] = cfg.value("svg", false);
  cfg["exposure"] = exposure;
  cfg["rate_scale"] = scale;
  cfg["year_offset"] = options.centering.year_offset;
  cfg["prior"] = prior_json(prior);

  const fs::path dir = prepare_out(cfg);
  const std::string digest = fnv1a_hex(raw);
  const std::string hash = run_hash("fit", cfg, digest);

  FitReport report;
  bool failed = false;
  try {
    report = fit_model(ds, covariables, subset, prior, m, options);
  } catch (const ConvergenceFailure& e) {
    report = e.report;
    failed = true;
  }

  json diag = {{"max_rhat", report.max_rhat},
               {"min_ess", report.min_ess},
               {"converged", report.converged},
               {"unconverged", report.unconverged},
               {"n_studies", report.n_included},
               {"excluded", report.excluded}};
  write_manifest(dir, "fit", cfg, digest, hash, diag);

  if (failed) {
    err << render_parameters_text(report);
    err << "error: R-hat above " << format_fixed(m.rhat_threshold, 3)
        << " for some hyperparameters; rerun with more samples or pass --force\n";
    return kExitNotConverged;
  }

  {
    auto f = open_out(dir / "parameters.csv");
    write_parameters_csv(f, report, hash);
  }
  {
    auto f = open_out(dir / "shrinkage.csv");
    write_shrinkage_csv(f, report, hash);
  }
  if (!report.trend.empty()) {
    auto f = open_out(dir / "trend.csv");
    write_trend_csv(f, report, hash);
  }
  if (cfg["svg"].get<bool>()) {
    if (report.trend.empty()) {
      err << "note: no trend.svg for a fit adjusting for other covariables\n";
    } else {
      auto f = open_out(dir / "trend.svg");
      f << "<!-- " << manifest_comment(hash).substr(2) << " -->\n" << render_trend_svg(report);
    }
  }
  out << render_parameters_text(report);
  if (!report.converged) err << "warning: not converged; results written because of --force\n";
  return kExitOk;
}

int cmd_simulate(json cfg, std::ostream& out, std::ostream&) {
  if (!cfg.contains("seed")) cfg["seed"] = seed_default();
  SimConfig sc;
  sc.seed = cfg["seed"].get<std::uint64_t>();
  sc.n_studies = cfg.value("studies", sc.n_studies);
  sc.year_min = cfg.value("year_min", sc.year_min);
  sc.year_max = cfg.value("year_max", sc.year_max);
  sc.n_min = cfg.value("n_min", sc.n_min);
  sc.n_max = cfg.value("n_max", sc.n_max);
  sc.followup_min = cfg.value("followup_min", sc.followup_min);
  sc.followup_max = cfg.value("followup_max", sc.followup_max);
  sc.true_placebo_fraction = cfg.value("true_placebo_fraction", sc.true_placebo_fraction);
  sc.year_offset = cfg.value("year_offset", sc.year_offset);
  if (cfg.contains("format_mix")) sc.format_mix = cfg["format_mix"].get<std::array<double, 4>>();
  if (cfg.contains("format_counts")) {
    const auto& fc = cfg["format_counts"];
    std::vector<int> v;
    if (fc.is_string()) {
      for (const auto& s : split_list(fc.get<std::string>())) {
        const auto n = parse_int(s);
        if (!n) throw UsageError("format_counts must be four integers");
        v.push_back(static_cast<int>(*n));
      }
    } else {
      v = fc.get<std::vector<int>>();
    }
    if (v.size() != 4) throw UsageError("format_counts must be four integers");
    sc.format_counts = std::array<int, 4>{v[0], v[1], v[2], v[3]};
    cfg["format_counts"] = v;
  }
  if (cfg.contains("truth")) {
    const auto& t = cfg["truth"];
    for (auto& [k, v] : t.items()) {
      if (k == "beta0") sc.truth.beta[0] = v.get<double>();
      else if (k == "beta1") sc.truth.beta[1] = v.get<double>();
      else if (k == "sigma_lambda") sc.truth.sigma_lambda = v.get<double>();
      else if (k == "mu_phi") sc.truth.mu_phi = v.get<double>();
      else if (k == "sigma_phi") sc.truth.sigma_phi = v.get<double>();
      else throw UsageError("unknown truth key '" + k + "'");
    }
  }
  sc.validate();
  cfg["studies"] = sc.n_studies;
  cfg["truth"] = {{"beta0", sc.truth.beta[0]}, {"beta1", sc.truth.beta[1]},
                  {"sigma_lambda", sc.truth.sigma_lambda}, {"mu_phi", sc.truth.mu_phi},
                  {"sigma_phi", sc.truth.sigma_phi}};

  const fs::path dir = prepare_out(cfg);
  const std::string hash = run_hash("simulate", cfg, "");
  const auto portfolio = simulate_portfolio(sc);
  {
    auto f = open_out(dir / "simulated.csv");
    f << manifest_comment(hash) << '\n';
    write_csv(f, portfolio.data);
  }
  {
    auto f = open_out(dir / "truth.csv");
    write_truth_csv(f, portfolio.truth, hash);
  }
  write_manifest(dir, "simulate", cfg, "", hash, json::object());
  out << "simulated " << portfolio.data.size() << " studies (seed " << sc.seed << ") into "
      << (dir / "simulated.csv").string() << '\n';
  return kExitOk;
}

int cmd_screen(json cfg, std::ostream& out, std::ostream& err) {
  const std::string input = require_input(cfg);
  const std::string raw = read_file(input);
  std::istringstream in(raw);
  const Dataset ds = parse_csv(in, input);

  const bool explicit_list = cfg.contains("covariables");
  std::vector<std::string> names;
  for (const auto& c : known_covariables())
    if (c != "year") names.push_back(c);
  names = covariables_of(cfg, names);
  for (const auto& n : names)
    if (n == "year") throw UsageError("year cannot be screened against itself");
  cfg["covariables"] = names;

  std::vector<CorrelationResult> rows;
  for (const auto& n : names) {
    if (std::find(known_covariables().begin(), known_covariables().end(), n) ==
        known_covariables().end())
      throw UnknownCovariable(n);
    try {
      rows.push_back(correlation_screen(ds, n));
    } catch (const TooFewStudies& e) {
      if (explicit_list) throw;
      err << "note: skipping " << n << ": " << e.what() << '\n';
    }
  }

  const fs::path dir = prepare_out(cfg);
  const std::string digest = fnv1a_hex(raw);
  const std::string hash = run_hash("screen", cfg, digest);
  {
    auto f = open_out(dir / "screen.csv");
    write_screen_csv(f, rows, hash);
  }
  write_manifest(dir, "screen", cfg, digest, hash, json::object());
  out << render_screen_text(rows);
  return kExitOk;
}

int cmd_summarize(json cfg, std::ostream& out, std::ostream&) {
  const std::string input = require_input(cfg);
  const std::string raw = read_file(input);
  std::istringstream in(raw);
  const Dataset ds = parse_csv(in, input);

  std::vector<SubsetSummary> summaries;
  for (auto k : {SubsetKind::All, SubsetKind::TruePlacebo, SubsetKind::IcsPlacebo}) {
    Dataset sub;
    for (const auto& r : ds.records)
      if (matches(r, k)) sub.records.push_back(r);
    if (k == SubsetKind::All || !sub.records.empty())
      summaries.push_back({k, descriptive_summary(sub)});
  }

  const fs::path dir = prepare_out(cfg);
  const std::string digest = fnv1a_hex(raw);
  const std::string hash = run_hash("summarize", cfg, digest);
  {
    auto f = open_out(dir / "summary.csv");
    write_summary_csv(f, summaries, hash);
  }
  write_manifest(dir, "summarize", cfg, digest, hash, json::object());
  out << render_summary_text(summaries);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian meta-regression of event counts reported in mixed formats",
               "count-synth"};
  app.require_subcommand(1);

  json flags = json::object();
  std::string config_path;
  auto str_opt = [&](CLI::App* sub, const std::string& name, const std::string& key,
                     const std::string& help) {
    sub->add_option_function<std::string>(
        name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };
  auto int_opt = [&](CLI::App* sub, const std::string& name, const std::string& key,
                     const std::string& help) {
    sub->add_option_function<long long>(
        name, [&flags, key](long long v) { flags[key] = v; }, help);
  };
  auto config_opt = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; its values override flags");
  };

  auto* fit = app.add_subcommand("fit", "Fit the random-effects meta-regression");
  str_opt(fit, "--input", "input", "Study table (CSV)");
  str_opt(fit, "--subset", "subset", "all | true-placebo | ics");
  fit->add_option_function<std::string>(
      "--covariables", [&flags](const std::string& v) { flags["covariables"] = split_list(v); },
      "Comma-separated covariables (default: year)");
  int_opt(fit, "--chains", "chains", "Number of chains");
  int_opt(fit, "--samples", "samples", "Post-adaptation iterations per chain");
  int_opt(fit, "--adapt", "adapt", "Adaptation iterations per chain");
  int_opt(fit, "--seed", "seed", "Root seed");
  str_opt(fit, "--out", "out", "Output directory");
  fit->add_flag_function("--svg", [&flags](std::int64_t) { flags["svg"] = true; },
                         "Also write trend.svg");
  fit->add_flag_function("--force", [&flags](std::int64_t) { flags["force"] = true; },
                         "Write results even if R-hat is above threshold");
  config_opt(fit);

  auto* sim = app.add_subcommand("simulate", "Simulate a synthetic study table");
  int_opt(sim, "--seed", "seed", "Root seed");
  int_opt(sim, "--studies", "studies", "Number of studies");
  str_opt(sim, "--format-counts", "format_counts",
          "Exact counts of rate+SE, count+zeros, count and zeros studies, e.g. 3,14,9,29");
  str_opt(sim, "--out", "out", "Output directory");
  config_opt(sim);

  auto* screen = app.add_subcommand("screen", "Correlate covariables with publication year");
  str_opt(screen, "--input", "input", "Study table (CSV)");
  screen->add_option_function<std::string>(
      "--covariables,--covariable",
      [&flags](const std::string& v) { flags["covariables"] = split_list(v); },
      "Comma-separated covariables (default: all reported)");
  str_opt(screen, "--out", "out", "Output directory");
  config_opt(screen);

  auto* summarize = app.add_subcommand("summarize", "Describe the included studies");
  str_opt(summarize, "--input", "input", "Study table (CSV)");
  str_opt(summarize, "--out", "out", "Output directory");
  config_opt(summarize);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (fit->parsed()) {
      if (flags.contains("seed") && flags["seed"].get<long long>() < 0)
        throw UsageError("--seed must be nonnegative");
      return cmd_fit(merged_config(flags, config_path, kFitKeys), out, err);
    }
    if (sim->parsed()) {
      if (flags.contains("seed") && flags["seed"].get<long long>() < 0)
        throw UsageError("--seed must be nonnegative");
      return cmd_simulate(merged_config(flags, config_path, kSimulateKeys), out, err);
    }
    if (screen->parsed()) return cmd_screen(merged_config(flags, config_path, kScreenKeys), out, err);
    if (summarize->parsed())
      return cmd_summarize(merged_config(flags, config_path, kSummarizeKeys), out, err);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const json::exception& e) {
    err << "error: bad configuration: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace countsynth
