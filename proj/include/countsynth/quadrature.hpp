#pragma once

// Brute-force grid posterior for reduced models with one or two free
// parameters: the intercept, optionally one slope, with φ held fixed and no
// random effects. Used as an independent check on the sampler.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "countsynth/count_model.hpp"
#include "countsynth/design.hpp"
#include "countsynth/study_data.hpp"

namespace countsynth {

class GridTooCoarse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Midpoint grid: cell j is centred at lower + (j + 1/2)(upper − lower)/points.
struct GridAxis {
  double lower = -1.0;
  double upper = 1.0;
  int points = 801;

  double step() const { return (upper - lower) / points; }
  double centre(int j) const { return lower + (j + 0.5) * step(); }
};

struct MarginalPosterior {
  std::string name;  // beta0 or beta1
  GridAxis axis;
  std::vector<double> mass;  // per cell, sums to 1
  double boundary_mass = 0.0;
  double mode = 0.0;
  double median = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  // Inverse of the piecewise-linear CDF through the cell edges.
  double quantile(double prob) const;
};

struct QuadratureResult {
  std::vector<MarginalPosterior> marginals;
  double total_mass = 0.0;  // after normalization
  const MarginalPosterior& marginal(const std::string& name) const;
};

inline constexpr double kMaxBoundaryMass = 1e-6;

// `ds` holds exactly the design's rows. The design has no covariable (one
// free parameter) or one (two). Priors are the intercept's uniform and the
// slope's normal from `prior`. `log_phi` may be −∞ for Poisson counts.
// Throws GridTooCoarse when any marginal puts more than 1e-6 of its mass in
// its two outermost cells, and std::invalid_argument for fewer than 400
// points per axis or a missing/superfluous slope axis.
QuadratureResult quadrature_posterior(const Dataset& ds, const DesignMatrix& design,
                                      double log_phi, const PriorSpec& prior,
                                      const LikelihoodOptions& likelihood, const GridAxis& intercept,
                                      const std::optional<GridAxis>& slope = std::nullopt);

}  // namespace countsynth
