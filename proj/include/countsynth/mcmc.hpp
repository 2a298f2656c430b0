#pragma once

// Adaptive componentwise random-walk Metropolis for the hierarchical model,
// run as several independent chains.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "countsynth/count_model.hpp"
#include "countsynth/design.hpp"
#include "countsynth/rng.hpp"
#include "countsynth/study_data.hpp"

namespace countsynth {

// Structural switches for reduced models. The defaults give the full model.
struct ModelSpec {
  // false: σ_λ ≡ 0 and log λ_i = x_i·β (fixed-effect regression)
  bool rate_random_effects = true;
  // false: σ_φ ≡ 0 and log φ_i = μ_φ
  bool overdispersion_random_effects = true;
  // holds μ_φ constant; −∞ gives Poisson counts
  std::optional<double> fixed_mu_phi;
};

struct McmcConfig {
  int n_chains = 4;
  int n_adapt = 5000;
  int n_samples = 20000;
  int thin = 1;
  std::uint64_t seed = 20190816;
  double target_accept = 0.44;
  double rhat_threshold = 1.05;
  double initial_scale = 0.5;
  int max_init_attempts = 100;
  bool parallel = true;       // run chains on separate threads
  bool store_effects = true;  // keep log_lambda[·] / log_phi[·] draws

  void validate() const;  // throws std::invalid_argument
  int stored_per_chain() const { return n_samples / thin; }
};

class InitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChainError : public std::runtime_error {
 public:
  ChainError(int chain, const std::string& what);
  int chain;
};

// Flat parameter vector layout:
//   [β_0 .. β_{p-1}, σ_λ, μ_φ, σ_φ, log λ_1 .. log λ_N, log φ_1 .. log φ_N]
class Model {
 public:
  Model(Dataset ds, DesignMatrix design, PriorSpec prior = {}, LikelihoodOptions likelihood = {},
        ModelSpec spec = {});

  const Dataset& data() const { return ds_; }
  const DesignMatrix& design() const { return design_; }
  const PriorSpec& prior() const { return prior_; }
  const LikelihoodOptions& likelihood() const { return likelihood_; }
  const ModelSpec& spec() const { return spec_; }

  std::size_t n_beta() const { return design_.n_coefficients(); }
  std::size_t n_studies() const { return ds_.size(); }
  std::size_t n_params() const { return n_beta() + 3 + 2 * n_studies(); }

  std::size_t sigma_lambda_index() const { return n_beta(); }
  std::size_t mu_phi_index() const { return n_beta() + 1; }
  std::size_t sigma_phi_index() const { return n_beta() + 2; }
  std::size_t log_lambda_index(std::size_t i) const { return n_beta() + 3 + i; }
  std::size_t log_phi_index(std::size_t i) const { return n_beta() + 3 + n_studies() + i; }

  std::vector<std::string> parameter_names() const;
  // Coordinates the sampler updates (fixed and derived ones are skipped).
  std::vector<std::size_t> free_coordinates() const;

  HyperParams hyper(std::span<const double> theta) const;
  StudyEffects effects(std::span<const double> theta) const;

  // Recomputes coordinates determined by others under a reduced spec.
  void sync_derived(std::span<double> theta) const;

  // Joint log density under the spec; equals log_posterior for the full model.
  double log_density(std::span<const double> theta) const;

  // Log density terms that involve coordinate k, up to a constant in k.
  // `cache` holds the current per-study log-likelihoods and is read when the
  // terms need them; `fresh`, when given, receives recomputed values instead.
  double conditional(std::size_t k, std::span<const double> theta,
                     std::span<const double> cache, std::vector<double>* fresh) const;

  double study_loglik(std::size_t i, std::span<const double> theta) const;

 private:
  double log_lambda_of(std::size_t i, std::span<const double> theta) const;
  double log_phi_of(std::size_t i, std::span<const double> theta) const;
  double log_phi_of_mean(std::span<const double> theta) const;

  Dataset ds_;
  DesignMatrix design_;
  PriorSpec prior_;
  LikelihoodOptions likelihood_;
  ModelSpec spec_;
};

struct ChainResult {
  std::vector<std::vector<double>> draws;  // [param][iteration]
  std::vector<double> acceptance;          // post-adaptation, per param (NaN if not updated)
  std::vector<double> scales;              // frozen proposal sd per param
  std::vector<double> adapt_trace;         // mean acceptance per 100-iteration window
};

struct PosteriorSamples {
  std::vector<std::string> names;
  std::size_t n_chains = 0;
  std::size_t n_draws = 0;                              // per chain
  std::vector<std::vector<std::vector<double>>> draws;  // [param][chain][iteration]
  std::vector<std::vector<double>> acceptance;          // [chain][param]
  std::vector<std::vector<double>> scales;              // [chain][param]
  std::vector<std::vector<double>> adapt_trace;         // [chain][window]

  bool has(const std::string& name) const;
  std::size_t index(const std::string& name) const;  // throws std::out_of_range
  std::span<const double> chain(const std::string& name, std::size_t c) const;
  std::vector<double> pooled(const std::string& name) const;
  std::size_t total_draws() const { return n_chains * n_draws; }
};

// Hyperparameters from their priors, effects at their conditional prior means.
std::vector<double> init_state(const Model& model, Rng& rng, int max_attempts = 100);

ChainResult run_chain(const Model& model, const McmcConfig& config, int chain_index);
PosteriorSamples run_chains(const Model& model, const McmcConfig& config);

// Long-format export: chain,iteration,parameter,value.
void write_samples_csv(std::ostream& out, const PosteriorSamples& samples);

}  // namespace countsynth
