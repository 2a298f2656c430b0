#pragma once

// Negative-binomial kernels, per-study likelihood for each reporting format,
// and the prior / posterior of the hierarchical random-effects model:
//
//   log λ_i ~ Normal(x_i·β, σ_λ²),   log φ_i ~ Normal(μ_φ, σ_φ²),
//   per-patient counts ~ NB(mean δ_i λ_i, overdispersion φ_i).

#include <span>
#include <stdexcept>
#include <vector>

#include "countsynth/design.hpp"
#include "countsynth/study_data.hpp"

namespace countsynth {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Below this overdispersion the Poisson limit is evaluated instead.
inline constexpr double kPhiPoissonThreshold = 1e-8;

// log P(Y = y) for Y with mean mu and variance mu(1 + phi·mu).
double nb_log_pmf(double y, double mu, double phi);
double poisson_log_pmf(double y, double mu);

// P(Y = 0) for a patient followed δ years: (1 + φδλ)^(−1/φ), exp(−δλ) at φ = 0.
double zero_prob(double delta, double lambda, double phi);
double log_zero_prob(double delta, double lambda, double phi);

struct NbParams {
  double mean = 0.0;
  double overdispersion = 0.0;
};

// The total over n iid NB(δλ, φ) patients is NB(nδλ, φ/n).
NbParams aggregate_nb_params(double n, double delta, double lambda, double phi);

double binomial_log_pmf(double k, double n, double log_p, double log_1mp);
double normal_log_pdf(double x, double mean, double sd);

// Scale on which a reported rate's SE is taken to act.
enum class RateScale { Log, Linear };

struct LikelihoodOptions {
  ExposureBasis exposure = ExposureBasis::MeanFollowup;
  RateScale rate_scale = RateScale::Log;
};

double loglik_study(const StudyRecord& record, double log_lambda, double log_phi,
                    const LikelihoodOptions& options = {});

struct HyperParams {
  std::vector<double> beta{0.0};  // intercept first
  double sigma_lambda = 1.0;
  double mu_phi = 0.0;
  double sigma_phi = 1.0;
};

struct StudyEffects {
  std::vector<double> log_lambda;
  std::vector<double> log_phi;
  std::size_t size() const { return log_lambda.size(); }
};

struct UniformPrior {
  double lower = 0.0;
  double upper = 1.0;
};
struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};
struct HalfNormalPrior {
  double scale = 1.0;
};

struct PriorSpec {
  UniformPrior beta0{-6.907755278982137, 6.907755278982137};  // log 0.001 .. log 1000
  NormalPrior beta_slope{0.0, 10.0};
  HalfNormalPrior sigma_lambda{1.0};
  UniformPrior mu_phi{-9.210340371976182, 9.210340371976182};  // log 1e-4 .. log 1e4
  HalfNormalPrior sigma_phi{1.0};

  // Throws std::invalid_argument on unordered bounds or nonpositive scales.
  void validate() const;
};

double uniform_log_pdf(double x, const UniformPrior& p);
double half_normal_log_pdf(double x, const HalfNormalPrior& p);

// Sum of the five prior components; −∞ outside the support.
double log_prior(const HyperParams& h, const PriorSpec& prior);

// log_prior + Σ_i [N(log λ_i; x_i·β, σ_λ) + N(log φ_i; μ_φ, σ_φ) + loglik_i].
// `ds` holds exactly the design's rows, in order.
double log_posterior(const HyperParams& h, const StudyEffects& effects, const Dataset& ds,
                     const DesignMatrix& design, const PriorSpec& prior,
                     const LikelihoodOptions& options = {});

}  // namespace countsynth
