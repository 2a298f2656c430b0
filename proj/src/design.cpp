#include "countsynth/design.hpp"

#include <algorithm>

namespace countsynth {

NoStudiesLeft::NoStudiesLeft(const std::string& detail)
    : DataError("no studies left after covariable exclusions: " + detail) {}

UnknownCovariable::UnknownCovariable(const std::string& name)
    : DataError("unknown covariable '" + name + "'") {}

const std::vector<std::string>& known_covariables() {
  static const std::vector<std::string> names = {"year",       "sgrq",     "fev1",    "smokers_pct",
                                                 "pack_years", "male_pct", "mean_age"};
  return names;
}

std::optional<double> covariable_value(const StudyRecord& rec, const std::string& name) {
  const auto& c = rec.covariables;
  if (name == "year") return static_cast<double>(rec.publication_year);
  if (name == "sgrq") return c.sgrq;
  if (name == "fev1") return c.fev1;
  if (name == "smokers_pct") return c.smokers_pct;
  if (name == "pack_years") return c.pack_years;
  if (name == "male_pct") return c.male_pct;
  if (name == "mean_age") return c.mean_age;
  throw UnknownCovariable(name);
}

std::string covariable_label(const std::string& name) {
  if (name == "year") return "publication year";
  if (name == "sgrq") return "SGRQ score";
  if (name == "fev1") return "FEV1";
  if (name == "smokers_pct") return "smokers (%)";
  if (name == "pack_years") return "pack-years";
  if (name == "male_pct") return "males (%)";
  if (name == "mean_age") return "mean age";
  return name;
}

double DesignMatrix::linear_predictor(std::span<const double> beta, std::size_t row) const {
  double eta = beta[0];
  const auto& x = rows[row];
  for (std::size_t j = 0; j < x.size(); ++j) eta += beta[j + 1] * x[j];
  return eta;
}

bool DesignMatrix::year_only() const {
  return covariables.empty() || (covariables.size() == 1 && covariables[0] == "year");
}

DesignMatrix empty_design(const std::vector<std::string>& covariables,
                          const CenteringOptions& centering) {
  DesignMatrix d;
  for (const auto& name : covariables) {
    if (std::find(known_covariables().begin(), known_covariables().end(), name) ==
        known_covariables().end())
      throw UnknownCovariable(name);
    if (std::find(d.covariables.begin(), d.covariables.end(), name) != d.covariables.end())
      throw DataError("covariable '" + name + "' listed twice");
    d.covariables.push_back(name);
    d.offsets.push_back(name == "year" ? centering.year_offset : 0.0);
  }
  return d;
}

DesignMatrix build_design(const Dataset& ds, const std::vector<std::string>& covariables,
                          const CenteringOptions& centering) {
  DesignMatrix d = empty_design(covariables, centering);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    std::vector<double> row;
    bool complete = true;
    for (std::size_t j = 0; j < d.covariables.size(); ++j) {
      const auto v = covariable_value(rec, d.covariables[j]);
      if (!v) {
        complete = false;
        break;
      }
      row.push_back(*v - d.offsets[j]);
    }
    if (complete) {
      d.rows.push_back(std::move(row));
      d.included.push_back(i);
    } else {
      d.excluded.push_back(rec.study_id);
    }
  }
  if (d.rows.empty())
    throw NoStudiesLeft(std::to_string(ds.size()) + " studies in, none report every covariable");
  return d;
}

Dataset restrict_to_design(const Dataset& ds, const DesignMatrix& design) {
  Dataset out;
  out.provenance = ds.provenance;
  out.records.reserve(design.included.size());
  for (auto i : design.included) out.records.push_back(ds.records.at(i));
  return out;
}

}  // namespace countsynth
