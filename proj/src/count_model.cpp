#include "countsynth/count_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "countsynth/special.hpp"

namespace countsynth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

bool is_count(double y) { return y >= 0.0 && std::isfinite(y) && y == std::floor(y); }

}  // namespace

double poisson_log_pmf(double y, double mu) {
  if (y == 0.0) return -mu;
  return y * std::log(mu) - mu - log_factorial(y);
}

double nb_log_pmf(double y, double mu, double phi) {
  if (!is_count(y)) throw DomainError("nb_log_pmf: y must be a nonnegative integer");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("nb_log_pmf: mu must be positive");
  if (!(phi >= 0.0)) throw DomainError("nb_log_pmf: phi must be nonnegative");
  if (phi < kPhiPoissonThreshold) return poisson_log_pmf(y, mu);

  // size r = 1/φ, success probability 1/(1 + φμ):
  //   Σ_{j<y} log1p(jφ) + y log μ − (y + 1/φ) log1p(φμ) − log y!
  const double l1p = std::log1p(phi * mu);
  const double zero_term = -l1p / phi;
  if (y == 0.0) return zero_term;
  return log_rising_scaled(1.0 / phi, y) + y * std::log(mu) - y * l1p - log_factorial(y) +
         zero_term;
}

double log_zero_prob(double delta, double lambda, double phi) {
  if (!(delta > 0.0)) throw DomainError("zero_prob: delta must be positive");
  if (!(lambda > 0.0)) throw DomainError("zero_prob: lambda must be positive");
  if (!(phi >= 0.0)) throw DomainError("zero_prob: phi must be nonnegative");
  return nb_log_pmf(0.0, delta * lambda, phi);
}

double zero_prob(double delta, double lambda, double phi) {
  return std::exp(log_zero_prob(delta, lambda, phi));
}

NbParams aggregate_nb_params(double n, double delta, double lambda, double phi) {
  if (!(n >= 1.0)) throw DomainError("aggregate_nb_params: n must be at least 1");
  if (!(delta > 0.0) || !(lambda > 0.0))
    throw DomainError("aggregate_nb_params: delta and lambda must be positive");
  if (!(phi >= 0.0)) throw DomainError("aggregate_nb_params: phi must be nonnegative");
  return {n * delta * lambda, phi / n};
}

double binomial_log_pmf(double k, double n, double log_p, double log_1mp) {
  double out = log_factorial(n) - log_factorial(k) - log_factorial(n - k);
  // 0·log 0 = 0 at the degenerate ends
  if (k > 0.0) out += k * log_p;
  if (n - k > 0.0) out += (n - k) * log_1mp;
  return out;
}

double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

double loglik_study(const StudyRecord& rec, double log_lambda, double log_phi,
                    const LikelihoodOptions& options) {
  if (!std::isfinite(log_lambda) || std::isnan(log_phi))
    throw DomainError("loglik_study: latent values must be finite");
  const double lambda = std::exp(log_lambda);
  const double phi = std::exp(log_phi);
  // latent values whose exponentials leave double range carry no mass
  if (!(lambda > 0.0) || !std::isfinite(lambda) || !std::isfinite(phi)) return kNegInf;
  const double n = static_cast<double>(rec.n_patients);
  const double delta = per_patient_exposure(rec, options.exposure);

  auto count_term = [&](std::int64_t total) {
    const auto agg = aggregate_nb_params(n, delta, lambda, phi);
    return nb_log_pmf(static_cast<double>(total), agg.mean, agg.overdispersion);
  };
  auto zeros_term = [&](std::int64_t zeros) {
    if (zeros < 0 || zeros > rec.n_patients)
      throw DomainError("loglik_study: zero_patients outside [0, n]");
    const double lp0 = log_zero_prob(delta, lambda, phi);
    // log(1 − p0) without cancellation near p0 = 1
    const double l1mp0 = lp0 > -std::numbers::ln2 ? std::log(-std::expm1(lp0))
                                                  : std::log1p(-std::exp(lp0));
    return binomial_log_pmf(static_cast<double>(zeros), n, lp0, l1mp0);
  };

  struct Visitor {
    double log_lambda;
    double lambda;
    RateScale scale;
    decltype(count_term)& count;
    decltype(zeros_term)& zeros;
    double operator()(const RateWithSE& e) const {
      if (!(e.rate > 0.0) || !(e.se > 0.0))
        throw DomainError("loglik_study: rate and SE must be positive");
      if (scale == RateScale::Log)
        return normal_log_pdf(std::log(e.rate), log_lambda, e.se / e.rate);
      return normal_log_pdf(e.rate, lambda, e.se);
    }
    double operator()(const CountAndZeros& e) const {
      return count(e.total_events) + zeros(e.zero_patients);
    }
    double operator()(const CountOnly& e) const { return count(e.total_events); }
    double operator()(const ZerosOnly& e) const { return zeros(e.zero_patients); }
  };
  return std::visit(Visitor{log_lambda, lambda, options.rate_scale, count_term, zeros_term},
                    rec.evidence);
}

void PriorSpec::validate() const {
  if (!(beta0.lower < beta0.upper)) throw std::invalid_argument("beta0 prior bounds not ordered");
  if (!(mu_phi.lower < mu_phi.upper))
    throw std::invalid_argument("mu_phi prior bounds not ordered");
  if (!(beta_slope.sd > 0.0)) throw std::invalid_argument("slope prior sd must be positive");
  if (!(sigma_lambda.scale > 0.0) || !(sigma_phi.scale > 0.0))
    throw std::invalid_argument("half-normal scales must be positive");
}

double uniform_log_pdf(double x, const UniformPrior& p) {
  if (x < p.lower || x > p.upper) return kNegInf;
  return -std::log(p.upper - p.lower);
}

double half_normal_log_pdf(double x, const HalfNormalPrior& p) {
  if (x < 0.0) return kNegInf;
  return std::numbers::ln2 + normal_log_pdf(x, 0.0, p.scale);
}

double log_prior(const HyperParams& h, const PriorSpec& prior) {
  if (h.beta.empty()) throw DimensionMismatch("log_prior: beta must include the intercept");
  double lp = uniform_log_pdf(h.beta[0], prior.beta0);
  for (std::size_t j = 1; j < h.beta.size(); ++j)
    lp += normal_log_pdf(h.beta[j], prior.beta_slope.mean, prior.beta_slope.sd);
  lp += half_normal_log_pdf(h.sigma_lambda, prior.sigma_lambda);
  lp += uniform_log_pdf(h.mu_phi, prior.mu_phi);
  lp += half_normal_log_pdf(h.sigma_phi, prior.sigma_phi);
  return lp;
}

double log_posterior(const HyperParams& h, const StudyEffects& effects, const Dataset& ds,
                     const DesignMatrix& design, const PriorSpec& prior,
                     const LikelihoodOptions& options) {
  const std::size_t n = ds.size();
  if (effects.log_lambda.size() != n || effects.log_phi.size() != n)
    throw DimensionMismatch("log_posterior: " + std::to_string(effects.log_lambda.size()) +
                            " effects for " + std::to_string(n) + " studies");
  if (design.n_rows() != n)
    throw DimensionMismatch("log_posterior: design has " + std::to_string(design.n_rows()) +
                            " rows for " + std::to_string(n) + " studies");
  if (h.beta.size() != design.n_coefficients())
    throw DimensionMismatch("log_posterior: beta length does not match the design");

  double lp = log_prior(h, prior);
  if (lp == kNegInf) return lp;
  if (n > 0 && (!(h.sigma_lambda > 0.0) || !(h.sigma_phi > 0.0))) return kNegInf;
  for (std::size_t i = 0; i < n; ++i) {
    lp += normal_log_pdf(effects.log_lambda[i], design.linear_predictor(h.beta, i),
                         h.sigma_lambda);
    lp += normal_log_pdf(effects.log_phi[i], h.mu_phi, h.sigma_phi);
    lp += loglik_study(ds.records[i], effects.log_lambda[i], effects.log_phi[i], options);
  }
  return lp;
}

}  // namespace countsynth
