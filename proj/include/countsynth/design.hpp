#pragma once

// Covariable designs for the log-rate regression.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "countsynth/study_data.hpp"

namespace countsynth {

// Year enters as (publication_year − offset); other covariables stay
// uncentered unless an offset is given here.
struct CenteringOptions {
  double year_offset = 2000.0;
};

struct DesignMatrix {
  std::vector<std::string> covariables;     // ordered, without the intercept
  std::vector<double> offsets;              // subtracted from each raw value
  std::vector<std::vector<double>> rows;    // one centered row per included study
  std::vector<std::size_t> included;        // indices into the source dataset
  std::vector<std::string> excluded;        // study ids lacking a requested covariable

  std::size_t n_coefficients() const { return 1 + covariables.size(); }
  std::size_t n_rows() const { return rows.size(); }
  double linear_predictor(std::span<const double> beta, std::size_t row) const;
  bool year_only() const;
};

class NoStudiesLeft : public DataError {
 public:
  explicit NoStudiesLeft(const std::string& detail);
};

class UnknownCovariable : public DataError {
 public:
  explicit UnknownCovariable(const std::string& name);
};

// Accepted names: year, sgrq, fev1, smokers_pct, pack_years, male_pct, mean_age.
const std::vector<std::string>& known_covariables();
std::optional<double> covariable_value(const StudyRecord& rec, const std::string& name);
// Human-readable label: "publication year", "SGRQ score", "FEV1", ...
std::string covariable_label(const std::string& name);

DesignMatrix build_design(const Dataset& ds, const std::vector<std::string>& covariables,
                          const CenteringOptions& centering = {});

// A design with named columns and no rows (prior-only runs).
DesignMatrix empty_design(const std::vector<std::string>& covariables,
                          const CenteringOptions& centering = {});

// The records of `ds` that the design keeps, in design-row order.
Dataset restrict_to_design(const Dataset& ds, const DesignMatrix& design);

}  // namespace countsynth
