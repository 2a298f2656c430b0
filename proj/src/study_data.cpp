#include "countsynth/study_data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "countsynth/text.hpp"

namespace countsynth {

// --- errors -----------------------------------------------------------------

MissingColumn::MissingColumn(const std::string& col)
    : DataError("missing column '" + col + "'"), column(col) {}

BadNumeric::BadNumeric(std::size_t r, const std::string& col, const std::string& cell)
    : DataError("row " + std::to_string(r) + ", column '" + col + "': cannot parse '" + cell +
                "' as a number"),
      row(r),
      column(col) {}

InvariantViolation::InvariantViolation(std::size_t r, const std::string& message)
    : DataError("row " + std::to_string(r) + ": " + message), row(r) {}

ConflictingEvidence::ConflictingEvidence(std::size_t r, const std::string& message)
    : DataError("row " + std::to_string(r) + ": conflicting outcome evidence: " + message),
      row(r) {}

EmptySubset::EmptySubset(SubsetKind kind)
    : DataError("no study matches subset '" + subset_name(kind) + "'") {}

// --- helpers ----------------------------------------------------------------

std::string evidence_format_name(const OutcomeEvidence& ev) {
  struct Visitor {
    std::string operator()(const RateWithSE&) const { return "rate_se"; }
    std::string operator()(const CountAndZeros&) const { return "count_zeros"; }
    std::string operator()(const CountOnly&) const { return "count"; }
    std::string operator()(const ZerosOnly&) const { return "zeros"; }
  };
  return std::visit(Visitor{}, ev);
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "study_id",    "year",          "n_patients",      "duration_yr", "mean_followup_yr",
      "placebo_type", "rate",         "rate_se",         "rate_ci_lo",  "rate_ci_hi",
      "total_events", "zero_patients", "zero_proportion", "sgrq",        "fev1_pct",
      "smokers_pct",  "pack_years",    "male_pct",        "mean_age",    "oxford_score"};
  return cols;
}

namespace {

constexpr double kZ975 = 1.96;

class RowReader {
 public:
  RowReader(const std::map<std::string, std::size_t>& index,
            const std::vector<std::string>& cells, std::size_t row)
      : index_(index), cells_(cells), row_(row) {}

  const std::string& raw(const std::string& col) const {
    static const std::string empty;
    auto it = index_.find(col);
    if (it == index_.end() || it->second >= cells_.size()) return empty;
    return cells_[it->second];
  }

  std::optional<double> real(const std::string& col) const {
    const std::string& cell = raw(col);
    if (cell.empty()) return std::nullopt;
    auto v = parse_double(cell);
    if (!v || !std::isfinite(*v)) throw BadNumeric(row_, col, cell);
    return v;
  }

  std::optional<std::int64_t> integer(const std::string& col) const {
    const std::string& cell = raw(col);
    if (cell.empty()) return std::nullopt;
    auto v = parse_int(cell);
    if (!v) throw BadNumeric(row_, col, cell);
    return v;
  }

  template <typename T>
  T required(const std::optional<T>& v, const std::string& col) const {
    if (!v) throw InvariantViolation(row_, "required field '" + col + "' is empty");
    return *v;
  }

 private:
  const std::map<std::string, std::size_t>& index_;
  const std::vector<std::string>& cells_;
  std::size_t row_;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

OutcomeEvidence resolve_evidence(const RowReader& r, std::size_t row, std::int64_t n,
                                 double patient_years) {
  const auto rate = r.real("rate");
  auto rate_se = r.real("rate_se");
  const auto ci_lo = r.real("rate_ci_lo");
  const auto ci_hi = r.real("rate_ci_hi");
  auto total = r.integer("total_events");
  auto zeros = r.integer("zero_patients");
  const auto zero_prop = r.real("zero_proportion");

  if (ci_lo.has_value() != ci_hi.has_value())
    throw InvariantViolation(row, "rate_ci_lo and rate_ci_hi must be given together");
  if (ci_lo && !rate) throw InvariantViolation(row, "rate CI given without a rate");
  if (rate_se && !rate) throw InvariantViolation(row, "rate_se given without a rate");

  if (ci_lo) {
    if (*ci_hi <= *ci_lo) throw InvariantViolation(row, "rate CI bounds are not ordered");
    const double ci_se = (*ci_hi - *ci_lo) / (2.0 * kZ975);
    if (rate_se && std::abs(*rate_se - ci_se) > 0.1 * std::max(*rate_se, ci_se))
      throw ConflictingEvidence(row, "rate_se disagrees with the rate CI");
    if (!rate_se) rate_se = ci_se;
  }

  if (zero_prop) {
    if (*zero_prop < 0.0 || *zero_prop > 1.0)
      throw InvariantViolation(row, "zero_proportion outside [0, 1]");
    // round-half-to-even under the default floating-point environment
    const auto converted =
        static_cast<std::int64_t>(std::nearbyint(*zero_prop * static_cast<double>(n)));
    if (zeros && *zeros != converted)
      throw ConflictingEvidence(row, "zero_patients disagrees with zero_proportion");
    zeros = converted;
  }

  if (rate) {
    if (*rate <= 0.0 && rate_se) throw InvariantViolation(row, "rate must be positive");
    if (*rate < 0.0) throw InvariantViolation(row, "rate must be nonnegative");
    if (rate_se) {
      if (total || zeros)
        throw ConflictingEvidence(row, "a rate with SE cannot be combined with counts");
      if (*rate_se <= 0.0) throw InvariantViolation(row, "rate_se must be positive");
      return RateWithSE{*rate, *rate_se};
    }
    // A rate without uncertainty is a total count in disguise.
    const double implied = *rate * patient_years;
    if (total) {
      const double tol = std::max(1.0, 0.01 * static_cast<double>(*total));
      if (std::abs(implied - static_cast<double>(*total)) > tol)
        throw ConflictingEvidence(row, "rate × patient-years = " + std::to_string(implied) +
                                           " but total_events = " + std::to_string(*total));
    } else {
      total = static_cast<std::int64_t>(std::nearbyint(implied));
    }
  }

  if (total && *total < 0) throw InvariantViolation(row, "total_events must be nonnegative");
  if (zeros && *zeros < 0) throw InvariantViolation(row, "zero_patients must be nonnegative");

  if (total && zeros) return CountAndZeros{*total, *zeros};
  if (total) return CountOnly{*total};
  if (zeros) return ZerosOnly{*zeros};
  throw InvariantViolation(row, "no outcome evidence (rate, counts or zero-event patients)");
}

PlaceboKind parse_placebo(const std::string& cell, std::size_t row) {
  const std::string v = to_lower(cell);
  if (v == "true") return PlaceboKind::TruePlacebo;
  if (v == "ics") return PlaceboKind::IcsPlacebo;
  throw InvariantViolation(row, "placebo_type must be 'true' or 'ics', got '" + cell + "'");
}

void check_pct(const std::optional<double>& v, const char* name, std::size_t row) {
  if (v && (*v < 0.0 || *v > 100.0))
    throw InvariantViolation(row, std::string(name) + " outside [0, 100]");
}

}  // namespace

// --- validation ---------------------------------------------------------------

void validate_record(const StudyRecord& rec, std::size_t row, const IngestOptions& options) {
  if (rec.study_id.empty()) throw InvariantViolation(row, "study_id is empty");
  if (rec.n_patients < 1) throw InvariantViolation(row, "n_patients must be at least 1");
  if (!(rec.study_duration_years > 0.0))
    throw InvariantViolation(row, "duration_yr must be positive");
  if (rec.mean_followup_years) {
    const double f = *rec.mean_followup_years;
    if (!(f > 0.0) || f > rec.study_duration_years)
      throw InvariantViolation(row, "mean_followup_yr must lie in (0, duration_yr]");
  }
  if (rec.publication_year < options.min_year || rec.publication_year > options.max_year)
    throw InvariantViolation(row, "year " + std::to_string(rec.publication_year) +
                                      " outside plausible window [" +
                                      std::to_string(options.min_year) + ", " +
                                      std::to_string(options.max_year) + "]");
  if (rec.quality_score && (*rec.quality_score < 0 || *rec.quality_score > 5))
    throw InvariantViolation(row, "oxford_score outside 0..5");

  const auto& c = rec.covariables;
  check_pct(c.sgrq, "sgrq", row);
  check_pct(c.fev1, "fev1_pct", row);
  check_pct(c.smokers_pct, "smokers_pct", row);
  check_pct(c.male_pct, "male_pct", row);

  const auto n = rec.n_patients;
  struct Check {
    std::size_t row;
    std::int64_t n;
    void operator()(const RateWithSE& e) const {
      if (!(e.rate > 0.0) || !(e.se > 0.0))
        throw InvariantViolation(row, "rate and SE must be positive");
    }
    void operator()(const CountAndZeros& e) const {
      if (e.total_events < 0 || e.zero_patients < 0)
        throw InvariantViolation(row, "counts must be nonnegative");
      if (e.zero_patients > n) throw InvariantViolation(row, "zero_patients exceeds n_patients");
      if (e.zero_patients == n && e.total_events != 0)
        throw InvariantViolation(row, "all patients event-free but total_events > 0");
      if (e.total_events < n - e.zero_patients)
        throw InvariantViolation(row, "total_events below the number of patients with events");
    }
    void operator()(const CountOnly& e) const {
      if (e.total_events < 0) throw InvariantViolation(row, "total_events must be nonnegative");
    }
    void operator()(const ZerosOnly& e) const {
      if (e.zero_patients < 0) throw InvariantViolation(row, "zero_patients must be nonnegative");
      if (e.zero_patients > n) throw InvariantViolation(row, "zero_patients exceeds n_patients");
    }
  };
  std::visit(Check{row, n}, rec.evidence);
}

// --- ingestion ----------------------------------------------------------------

Dataset parse_csv(std::istream& in, const std::string& source, const IngestOptions& options) {
  std::string line;
  bool first = true;
  do {
    if (!std::getline(in, line)) throw MissingColumn(csv_columns().front());
    if (first && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    first = false;
  } while (line.rfind('#', 0) == 0);

  std::map<std::string, std::size_t> index;
  std::size_t n_fields = 0;
  {
    const auto header = split_csv_line(line);
    n_fields = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) index.emplace(trim(header[i]), i);
  }
  for (const auto& col : csv_columns())
    if (!index.count(col)) throw MissingColumn(col);

  Dataset ds;
  ds.provenance = {source, utc_now()};
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    ++row;
    auto cells = split_csv_line(line);
    if (cells.size() != n_fields)
      throw InvariantViolation(row, "expected " + std::to_string(n_fields) + " fields, got " +
                                        std::to_string(cells.size()));
    for (auto& c : cells) c = trim(c);
    const RowReader r(index, cells, row);

    StudyRecord rec;
    rec.study_id = r.raw("study_id");
    if (rec.study_id.empty()) throw InvariantViolation(row, "study_id is empty");
    if (!seen.insert(rec.study_id).second)
      throw InvariantViolation(row, "duplicate study_id '" + rec.study_id + "'");
    rec.publication_year = static_cast<int>(r.required(r.integer("year"), "year"));
    rec.n_patients = r.required(r.integer("n_patients"), "n_patients");
    rec.study_duration_years = r.required(r.real("duration_yr"), "duration_yr");
    rec.mean_followup_years = r.real("mean_followup_yr");
    rec.placebo_kind = parse_placebo(r.raw("placebo_type"), row);
    rec.covariables.sgrq = r.real("sgrq");
    rec.covariables.fev1 = r.real("fev1_pct");
    rec.covariables.smokers_pct = r.real("smokers_pct");
    rec.covariables.pack_years = r.real("pack_years");
    rec.covariables.male_pct = r.real("male_pct");
    rec.covariables.mean_age = r.real("mean_age");
    if (auto q = r.integer("oxford_score")) rec.quality_score = static_cast<int>(*q);

    // Basic shape checks first so exposure below is meaningful.
    if (rec.n_patients < 1) throw InvariantViolation(row, "n_patients must be at least 1");
    if (!(rec.study_duration_years > 0.0))
      throw InvariantViolation(row, "duration_yr must be positive");
    const double py = rec.mean_followup_years && *rec.mean_followup_years > 0.0
                          ? static_cast<double>(rec.n_patients) * *rec.mean_followup_years
                          : static_cast<double>(rec.n_patients) * rec.study_duration_years;
    rec.evidence = resolve_evidence(r, row, rec.n_patients, py);
    validate_record(rec, row, options);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_csv(in, path.string(), options);
}

// --- serialization ------------------------------------------------------------

void write_csv(std::ostream& out, const Dataset& ds) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : ds.records) {
    std::map<std::string, std::string> cell;
    cell["study_id"] = quote_csv(r.study_id);
    cell["year"] = std::to_string(r.publication_year);
    cell["n_patients"] = std::to_string(r.n_patients);
    cell["duration_yr"] = format_double(r.study_duration_years);
    cell["mean_followup_yr"] = opt(r.mean_followup_years);
    cell["placebo_type"] = r.placebo_kind == PlaceboKind::TruePlacebo ? "true" : "ics";
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, RateWithSE>) {
            cell["rate"] = format_double(e.rate);
            cell["rate_se"] = format_double(e.se);
          } else if constexpr (std::is_same_v<T, CountAndZeros>) {
            cell["total_events"] = std::to_string(e.total_events);
            cell["zero_patients"] = std::to_string(e.zero_patients);
          } else if constexpr (std::is_same_v<T, CountOnly>) {
            cell["total_events"] = std::to_string(e.total_events);
          } else {
            cell["zero_patients"] = std::to_string(e.zero_patients);
          }
        },
        r.evidence);
    const auto& c = r.covariables;
    cell["sgrq"] = opt(c.sgrq);
    cell["fev1_pct"] = opt(c.fev1);
    cell["smokers_pct"] = opt(c.smokers_pct);
    cell["pack_years"] = opt(c.pack_years);
    cell["male_pct"] = opt(c.male_pct);
    cell["mean_age"] = opt(c.mean_age);
    if (r.quality_score) cell["oxford_score"] = std::to_string(*r.quality_score);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cell[cols[i]];
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_csv(out, ds);
}

// --- exposure & subsets -------------------------------------------------------

double per_patient_exposure(const StudyRecord& rec, ExposureBasis basis) {
  if (basis == ExposureBasis::MeanFollowup && rec.mean_followup_years)
    return *rec.mean_followup_years;
  return rec.study_duration_years;
}

double exposure(const StudyRecord& rec, ExposureBasis basis) {
  return static_cast<double>(rec.n_patients) * per_patient_exposure(rec, basis);
}

double total_exposure(const Dataset& ds, ExposureBasis basis) {
  double total = 0.0;
  for (const auto& r : ds.records) total += exposure(r, basis);
  return total;
}

bool matches(const StudyRecord& rec, SubsetKind kind) {
  switch (kind) {
    case SubsetKind::All:
      return true;
    case SubsetKind::TruePlacebo:
      return rec.placebo_kind == PlaceboKind::TruePlacebo;
    case SubsetKind::IcsPlacebo:
      return rec.placebo_kind == PlaceboKind::IcsPlacebo;
  }
  return false;
}

Dataset subset_filter(const Dataset& ds, SubsetKind kind) {
  Dataset out;
  out.provenance = ds.provenance;
  std::copy_if(ds.records.begin(), ds.records.end(), std::back_inserter(out.records),
               [kind](const StudyRecord& r) { return matches(r, kind); });
  if (out.empty()) throw EmptySubset(kind);
  return out;
}

std::string subset_name(SubsetKind kind) {
  switch (kind) {
    case SubsetKind::All:
      return "all";
    case SubsetKind::TruePlacebo:
      return "true-placebo";
    case SubsetKind::IcsPlacebo:
      return "ics";
  }
  return "all";
}

SubsetKind parse_subset(const std::string& name) {
  const std::string v = to_lower(name);
  if (v == "all") return SubsetKind::All;
  if (v == "true-placebo" || v == "true") return SubsetKind::TruePlacebo;
  if (v == "ics" || v == "ics-placebo") return SubsetKind::IcsPlacebo;
  throw std::invalid_argument("unknown subset '" + name + "' (expected all|true-placebo|ics)");
}

// --- descriptive summary ------------------------------------------------------

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<VariableSummary> descriptive_summary(const Dataset& ds) {
  using Getter = std::optional<double> (*)(const StudyRecord&);
  struct Var {
    const char* name;
    Getter get;
  };
  static const Var vars[] = {
      {"Patients", [](const StudyRecord& r) -> std::optional<double> {
         return static_cast<double>(r.n_patients);
       }},
      {"Study duration (yr)",
       [](const StudyRecord& r) -> std::optional<double> { return r.study_duration_years; }},
      {"Mean followup (yr)",
       [](const StudyRecord& r) -> std::optional<double> { return r.mean_followup_years; }},
      {"Patient-years", [](const StudyRecord& r) -> std::optional<double> { return exposure(r); }},
      {"Mean age (yr)",
       [](const StudyRecord& r) -> std::optional<double> { return r.covariables.mean_age; }},
      {"Males (%)",
       [](const StudyRecord& r) -> std::optional<double> { return r.covariables.male_pct; }},
      {"Smokers (%)",
       [](const StudyRecord& r) -> std::optional<double> { return r.covariables.smokers_pct; }},
      {"Mean pack-years",
       [](const StudyRecord& r) -> std::optional<double> { return r.covariables.pack_years; }},
      {"Mean FEV-1", [](const StudyRecord& r) -> std::optional<double> { return r.covariables.fev1; }},
      {"Mean SGRQ", [](const StudyRecord& r) -> std::optional<double> { return r.covariables.sgrq; }},
      {"Oxford score", [](const StudyRecord& r) -> std::optional<double> {
         if (!r.quality_score) return std::nullopt;
         return static_cast<double>(*r.quality_score);
       }},
  };

  std::vector<VariableSummary> out;
  for (const auto& var : vars) {
    std::vector<double> values;
    for (const auto& r : ds.records)
      if (auto v = var.get(r)) values.push_back(*v);
    VariableSummary s;
    s.variable = var.name;
    s.count = values.size();
    s.missing = ds.size() - values.size();
    if (values.empty()) {
      s.median = s.min = s.max = std::numeric_limits<double>::quiet_NaN();
    } else {
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      s.min = *lo;
      s.max = *hi;
      s.median = median_of(std::move(values));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace countsynth
