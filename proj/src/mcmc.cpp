#include "countsynth/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "countsynth/text.hpp"

namespace countsynth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kTraceWindow = 100;
// Robbins-Monro step size γ_t = (t + 1)^(-kAdaptDecay) on the log proposal scale.
constexpr double kAdaptDecay = 0.6;

}  // namespace

void McmcConfig::validate() const {
  if (n_chains < 2) throw std::invalid_argument("n_chains must be at least 2");
  if (n_adapt < 0) throw std::invalid_argument("n_adapt must be nonnegative");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be positive");
  if (thin < 1) throw std::invalid_argument("thin must be at least 1");
  if (n_samples % thin != 0) throw std::invalid_argument("thin must divide n_samples");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("target_accept must lie in (0, 1)");
  if (!(initial_scale > 0.0)) throw std::invalid_argument("initial_scale must be positive");
  if (!(rhat_threshold > 1.0)) throw std::invalid_argument("rhat_threshold must exceed 1");
}

ChainError::ChainError(int c, const std::string& what)
    : std::runtime_error("chain " + std::to_string(c) + ": " + what), chain(c) {}

// --- Model --------------------------------------------------------------------

Model::Model(Dataset ds, DesignMatrix design, PriorSpec prior, LikelihoodOptions likelihood,
             ModelSpec spec)
    : ds_(std::move(ds)),
      design_(std::move(design)),
      prior_(prior),
      likelihood_(likelihood),
      spec_(spec) {
  prior_.validate();
  if (design_.n_rows() != ds_.size())
    throw DimensionMismatch("Model: design has " + std::to_string(design_.n_rows()) +
                            " rows for " + std::to_string(ds_.size()) + " studies");
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n_beta(); ++j) names.push_back("beta" + std::to_string(j));
  names.insert(names.end(), {"sigma_lambda", "mu_phi", "sigma_phi"});
  for (const auto& r : ds_.records) names.push_back("log_lambda[" + r.study_id + "]");
  for (const auto& r : ds_.records) names.push_back("log_phi[" + r.study_id + "]");
  return names;
}

std::vector<std::size_t> Model::free_coordinates() const {
  std::vector<std::size_t> k;
  for (std::size_t j = 0; j < n_beta(); ++j) k.push_back(j);
  if (spec_.rate_random_effects) k.push_back(sigma_lambda_index());
  if (!spec_.fixed_mu_phi) k.push_back(mu_phi_index());
  if (spec_.overdispersion_random_effects) k.push_back(sigma_phi_index());
  if (spec_.rate_random_effects)
    for (std::size_t i = 0; i < n_studies(); ++i) k.push_back(log_lambda_index(i));
  if (spec_.overdispersion_random_effects)
    for (std::size_t i = 0; i < n_studies(); ++i) k.push_back(log_phi_index(i));
  return k;
}

HyperParams Model::hyper(std::span<const double> theta) const {
  HyperParams h;
  h.beta.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(n_beta()));
  h.sigma_lambda = theta[sigma_lambda_index()];
  h.mu_phi = theta[mu_phi_index()];
  h.sigma_phi = theta[sigma_phi_index()];
  return h;
}

StudyEffects Model::effects(std::span<const double> theta) const {
  StudyEffects e;
  for (std::size_t i = 0; i < n_studies(); ++i) {
    e.log_lambda.push_back(log_lambda_of(i, theta));
    e.log_phi.push_back(log_phi_of(i, theta));
  }
  return e;
}

double Model::log_lambda_of(std::size_t i, std::span<const double> theta) const {
  if (spec_.rate_random_effects) return theta[log_lambda_index(i)];
  return design_.linear_predictor(theta.first(n_beta()), i);
}

double Model::log_phi_of(std::size_t i, std::span<const double> theta) const {
  if (spec_.overdispersion_random_effects) return theta[log_phi_index(i)];
  return spec_.fixed_mu_phi ? *spec_.fixed_mu_phi : theta[mu_phi_index()];
}

void Model::sync_derived(std::span<double> theta) const {
  if (spec_.fixed_mu_phi) theta[mu_phi_index()] = *spec_.fixed_mu_phi;
  if (!spec_.rate_random_effects) {
    theta[sigma_lambda_index()] = 0.0;
    for (std::size_t i = 0; i < n_studies(); ++i) theta[log_lambda_index(i)] = log_lambda_of(i, theta);
  }
  if (!spec_.overdispersion_random_effects) {
    theta[sigma_phi_index()] = 0.0;
    for (std::size_t i = 0; i < n_studies(); ++i) theta[log_phi_index(i)] = log_phi_of(i, theta);
  }
}

double Model::study_loglik(std::size_t i, std::span<const double> theta) const {
  return loglik_study(ds_.records[i], log_lambda_of(i, theta), log_phi_of(i, theta), likelihood_);
}

double Model::log_density(std::span<const double> theta) const {
  if (theta.size() != n_params()) throw DimensionMismatch("Model: wrong parameter count");
  double lp = uniform_log_pdf(theta[0], prior_.beta0);
  for (std::size_t j = 1; j < n_beta(); ++j)
    lp += normal_log_pdf(theta[j], prior_.beta_slope.mean, prior_.beta_slope.sd);
  const std::size_t n = n_studies();
  if (spec_.rate_random_effects) {
    const double s = theta[sigma_lambda_index()];
    lp += half_normal_log_pdf(s, prior_.sigma_lambda);
    if (lp == kNegInf || (n > 0 && !(s > 0.0))) return kNegInf;
    for (std::size_t i = 0; i < n; ++i)
      lp += normal_log_pdf(theta[log_lambda_index(i)], design_.linear_predictor(theta, i), s);
  }
  if (!spec_.fixed_mu_phi) lp += uniform_log_pdf(theta[mu_phi_index()], prior_.mu_phi);
  if (spec_.overdispersion_random_effects) {
    const double s = theta[sigma_phi_index()];
    lp += half_normal_log_pdf(s, prior_.sigma_phi);
    if (lp == kNegInf || (n > 0 && !(s > 0.0))) return kNegInf;
    for (std::size_t i = 0; i < n; ++i)
      lp += normal_log_pdf(theta[log_phi_index(i)], log_phi_of_mean(theta), s);
  }
  if (lp == kNegInf) return lp;
  for (std::size_t i = 0; i < n; ++i) lp += study_loglik(i, theta);
  return lp;
}

double Model::conditional(std::size_t k, std::span<const double> theta,
                          std::span<const double> cache, std::vector<double>* fresh) const {
  const std::size_t n = n_studies();
  if (fresh) fresh->resize(n);
  auto loglik = [&](std::size_t i) {
    if (!fresh) return cache[i];
    const double v = study_loglik(i, theta);
    (*fresh)[i] = v;
    return v;
  };
  auto sum_loglik = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += loglik(i);
    return s;
  };
  auto rate_terms = [&] {
    const double s = theta[sigma_lambda_index()];
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      lp += normal_log_pdf(theta[log_lambda_index(i)], design_.linear_predictor(theta, i), s);
    return lp;
  };
  auto od_terms = [&] {
    const double s = theta[sigma_phi_index()];
    const double mu = log_phi_of_mean(theta);
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i) lp += normal_log_pdf(theta[log_phi_index(i)], mu, s);
    return lp;
  };

  if (k < n_beta()) {
    const double lp = k == 0 ? uniform_log_pdf(theta[0], prior_.beta0)
                             : normal_log_pdf(theta[k], prior_.beta_slope.mean,
                                              prior_.beta_slope.sd);
    if (lp == kNegInf) return lp;
    return lp + (spec_.rate_random_effects ? rate_terms() : sum_loglik());
  }
  if (k == sigma_lambda_index()) {
    const double lp = half_normal_log_pdf(theta[k], prior_.sigma_lambda);
    if (lp == kNegInf || (n > 0 && !(theta[k] > 0.0))) return kNegInf;
    return lp + rate_terms();
  }
  if (k == mu_phi_index()) {
    const double lp = uniform_log_pdf(theta[k], prior_.mu_phi);
    if (lp == kNegInf) return lp;
    return lp + (spec_.overdispersion_random_effects ? od_terms() : sum_loglik());
  }
  if (k == sigma_phi_index()) {
    const double lp = half_normal_log_pdf(theta[k], prior_.sigma_phi);
    if (lp == kNegInf || (n > 0 && !(theta[k] > 0.0))) return kNegInf;
    return lp + od_terms();
  }
  if (k < log_phi_index(0)) {
    const std::size_t i = k - log_lambda_index(0);
    return normal_log_pdf(theta[k], design_.linear_predictor(theta, i),
                          theta[sigma_lambda_index()]) +
           loglik(i);
  }
  const std::size_t i = k - log_phi_index(0);
  return normal_log_pdf(theta[k], log_phi_of_mean(theta), theta[sigma_phi_index()]) + loglik(i);
}

double Model::log_phi_of_mean(std::span<const double> theta) const {
  return spec_.fixed_mu_phi ? *spec_.fixed_mu_phi : theta[mu_phi_index()];
}

// --- PosteriorSamples ---------------------------------------------------------

bool PosteriorSamples::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::size_t PosteriorSamples::index(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no samples for parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::span<const double> PosteriorSamples::chain(const std::string& name, std::size_t c) const {
  return draws.at(index(name)).at(c);
}

std::vector<double> PosteriorSamples::pooled(const std::string& name) const {
  std::vector<double> out;
  out.reserve(total_draws());
  for (const auto& ch : draws.at(index(name))) out.insert(out.end(), ch.begin(), ch.end());
  return out;
}

// --- sampling -----------------------------------------------------------------

std::vector<double> init_state(const Model& model, Rng& rng, int max_attempts) {
  const auto& prior = model.prior();
  std::vector<double> theta(model.n_params(), 0.0);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    theta[0] = std::uniform_real_distribution<double>(prior.beta0.lower, prior.beta0.upper)(rng);
    for (std::size_t j = 1; j < model.n_beta(); ++j)
      theta[j] = prior.beta_slope.mean + prior.beta_slope.sd * std_normal(rng);
    theta[model.sigma_lambda_index()] = prior.sigma_lambda.scale * std::abs(std_normal(rng));
    theta[model.mu_phi_index()] =
        std::uniform_real_distribution<double>(prior.mu_phi.lower, prior.mu_phi.upper)(rng);
    theta[model.sigma_phi_index()] = prior.sigma_phi.scale * std::abs(std_normal(rng));
    for (std::size_t i = 0; i < model.n_studies(); ++i) {
      theta[model.log_lambda_index(i)] = model.design().linear_predictor(theta, i);
      theta[model.log_phi_index(i)] = theta[model.mu_phi_index()];
    }
    model.sync_derived(theta);
    if (std::isfinite(model.log_density(theta))) return theta;
  }
  throw InitFailure("no initial state with finite log density after " +
                    std::to_string(max_attempts) + " prior draws");
}

ChainResult run_chain(const Model& model, const McmcConfig& config, int chain_index) {
  config.validate();
  Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(chain_index));
  std::vector<double> theta = init_state(model, rng, config.max_init_attempts);

  const std::size_t n = model.n_studies();
  const std::size_t np = model.n_params();
  const std::size_t n_hyper = model.n_beta() + 3;
  const std::size_t n_keep = config.store_effects ? np : n_hyper;
  const auto coords = model.free_coordinates();
  const auto names = model.parameter_names();

  std::vector<double> cache(n), fresh(n);
  for (std::size_t i = 0; i < n; ++i) cache[i] = model.study_loglik(i, theta);

  std::vector<double> log_scale(np, std::log(config.initial_scale));
  std::vector<std::size_t> accepted(np, 0);

  ChainResult out;
  out.draws.assign(n_keep, {});
  for (auto& d : out.draws) d.reserve(static_cast<std::size_t>(config.stored_per_chain()));

  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double target = config.target_accept;
  const int total_iter = config.n_adapt + config.n_samples;
  std::size_t window_accepts = 0, window_moves = 0;

  for (int it = 0; it < total_iter; ++it) {
    const bool adapting = it < config.n_adapt;
    const double gamma = adapting ? std::pow(it + 1.0, -kAdaptDecay) : 0.0;
    for (const std::size_t k : coords) {
      const bool is_hyper = k < n_hyper;
      // Coordinates whose terms include every study's likelihood under a reduced spec.
      const bool all_studies = is_hyper && ((k < model.n_beta() && !model.spec().rate_random_effects) ||
                                            (k == model.mu_phi_index() &&
                                             !model.spec().overdispersion_random_effects));
      const std::size_t study =
          is_hyper ? n : (k < model.log_phi_index(0) ? k - model.log_lambda_index(0)
                                                     : k - model.log_phi_index(0));

      const double current = model.conditional(k, theta, cache, nullptr);
      const double old_value = theta[k];
      theta[k] = old_value + std::exp(log_scale[k]) * std_normal(rng);
      const bool needs_loglik = all_studies || !is_hyper;
      const double proposed = model.conditional(k, theta, cache, needs_loglik ? &fresh : nullptr);
      if (std::isnan(proposed)) {
        std::ostringstream msg;
        msg << "log density is NaN at iteration " << it << ", coordinate " << names[k]
            << " = " << format_double(theta[k]) << " (previous " << format_double(old_value)
            << ", current log density " << format_double(current) << ")";
        throw NumericalError(msg.str());
      }
      const double log_ratio = proposed - current;
      const bool accept = log_ratio >= 0.0 || std::log(unif(rng)) < log_ratio;
      if (accept) {
        if (all_studies) {
          cache.swap(fresh);
          fresh.resize(n);
          model.sync_derived(theta);
        } else if (!is_hyper) {
          cache[study] = fresh[study];
        }
      } else {
        theta[k] = old_value;
      }
      if (adapting) {
        log_scale[k] += gamma * ((accept ? 1.0 : 0.0) - target);
        window_accepts += accept;
        ++window_moves;
      } else if (accept) {
        ++accepted[k];
      }
    }
    if (adapting && (it + 1) % kTraceWindow == 0) {
      out.adapt_trace.push_back(window_moves ? static_cast<double>(window_accepts) /
                                                   static_cast<double>(window_moves)
                                             : 0.0);
      window_accepts = window_moves = 0;
    }
    if (!adapting && (it - config.n_adapt + 1) % config.thin == 0)
      for (std::size_t p = 0; p < n_keep; ++p) out.draws[p].push_back(theta[p]);
  }

  const auto nan = std::numeric_limits<double>::quiet_NaN();
  out.acceptance.assign(np, nan);
  out.scales.assign(np, nan);
  for (const std::size_t k : coords) {
    out.acceptance[k] = static_cast<double>(accepted[k]) / config.n_samples;
    out.scales[k] = std::exp(log_scale[k]);
  }
  out.acceptance.resize(n_keep);
  out.scales.resize(n_keep);
  return out;
}

PosteriorSamples run_chains(const Model& model, const McmcConfig& config) {
  config.validate();
  const auto nc = static_cast<std::size_t>(config.n_chains);
  std::vector<ChainResult> results(nc);
  std::vector<std::exception_ptr> errors(nc);

  auto work = [&](std::size_t c) {
    try {
      results[c] = run_chain(model, config, static_cast<int>(c));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel && nc > 1) {
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < nc; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < nc; ++c) work(c);
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (!errors[c]) continue;
    try {
      std::rethrow_exception(errors[c]);
    } catch (const std::exception& e) {
      throw ChainError(static_cast<int>(c), e.what());
    }
  }

  PosteriorSamples s;
  s.names = model.parameter_names();
  s.names.resize(results[0].draws.size());
  s.n_chains = nc;
  s.n_draws = results[0].draws.empty() ? 0 : results[0].draws[0].size();
  s.draws.resize(s.names.size());
  for (std::size_t p = 0; p < s.names.size(); ++p)
    for (auto& r : results) s.draws[p].push_back(std::move(r.draws[p]));
  for (auto& r : results) {
    s.acceptance.push_back(std::move(r.acceptance));
    s.scales.push_back(std::move(r.scales));
    s.adapt_trace.push_back(std::move(r.adapt_trace));
  }
  return s;
}

void write_samples_csv(std::ostream& out, const PosteriorSamples& samples) {
  out << "chain,iteration,parameter,value\n";
  for (std::size_t c = 0; c < samples.n_chains; ++c)
    for (std::size_t it = 0; it < samples.n_draws; ++it)
      for (std::size_t p = 0; p < samples.names.size(); ++p)
        out << c << ',' << it << ',' << quote_csv(samples.names[p]) << ','
            << format_double(samples.draws[p][c][it]) << '\n';
}

}  // namespace countsynth
