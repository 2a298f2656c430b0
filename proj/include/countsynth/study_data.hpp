#pragma once

// Study-level data model: one record per placebo arm, the four outcome
// reporting formats, CSV ingestion/serialization and descriptive summaries.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace countsynth {

enum class PlaceboKind { TruePlacebo, IcsPlacebo };

enum class SubsetKind { All, TruePlacebo, IcsPlacebo };

// Which per-patient duration enters the likelihood as δ.
enum class ExposureBasis { MeanFollowup, NominalDuration };

// (a) quoted rate with its standard error (CIs are converted on ingestion)
struct RateWithSE {
  double rate = 0.0;  // events per patient-year
  double se = 0.0;
  bool operator==(const RateWithSE&) const = default;
};

// (d) total event count plus number of event-free patients
struct CountAndZeros {
  std::int64_t total_events = 0;
  std::int64_t zero_patients = 0;
  bool operator==(const CountAndZeros&) const = default;
};

// (b) total count only (a quoted rate without SE is converted to a count)
struct CountOnly {
  std::int64_t total_events = 0;
  bool operator==(const CountOnly&) const = default;
};

// (c) number of event-free patients only
struct ZerosOnly {
  std::int64_t zero_patients = 0;
  bool operator==(const ZerosOnly&) const = default;
};

using OutcomeEvidence = std::variant<RateWithSE, CountAndZeros, CountOnly, ZerosOnly>;

// Short tag used in CSV output: "rate_se", "count_zeros", "count", "zeros".
std::string evidence_format_name(const OutcomeEvidence& ev);

struct CovariateSet {
  std::optional<double> sgrq;
  std::optional<double> fev1;
  std::optional<double> smokers_pct;
  std::optional<double> pack_years;
  std::optional<double> male_pct;
  std::optional<double> mean_age;
  bool operator==(const CovariateSet&) const = default;
};

struct StudyRecord {
  std::string study_id;
  int publication_year = 2000;
  std::int64_t n_patients = 1;
  double study_duration_years = 1.0;
  std::optional<double> mean_followup_years;
  PlaceboKind placebo_kind = PlaceboKind::TruePlacebo;
  OutcomeEvidence evidence = CountOnly{};
  CovariateSet covariables;
  std::optional<int> quality_score;  // carried through, never analysed

  bool operator==(const StudyRecord&) const = default;
};

struct Provenance {
  std::string source;
  std::string ingested_at;  // ISO-8601 UTC
};

struct Dataset {
  std::vector<StudyRecord> records;
  Provenance provenance;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct IngestOptions {
  int min_year = 1980;
  int max_year = 2030;
};

// --- errors -----------------------------------------------------------------

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingColumn : public DataError {
 public:
  explicit MissingColumn(const std::string& column);
  std::string column;
};

class BadNumeric : public DataError {
 public:
  BadNumeric(std::size_t row, const std::string& column, const std::string& cell);
  std::size_t row;
  std::string column;
};

class InvariantViolation : public DataError {
 public:
  InvariantViolation(std::size_t row, const std::string& message);
  std::size_t row;
};

class ConflictingEvidence : public DataError {
 public:
  ConflictingEvidence(std::size_t row, const std::string& message);
  std::size_t row;
};

class EmptySubset : public DataError {
 public:
  explicit EmptySubset(SubsetKind kind);
};

// --- operations -------------------------------------------------------------

// Column names of the study table, in canonical order.
const std::vector<std::string>& csv_columns();

// Throws DataError subclasses; `row` in diagnostics is the 1-based data row
// (the header is row 0). Lines starting with '#' are skipped.
Dataset ingest_csv(const std::filesystem::path& path, const IngestOptions& options = {});
Dataset parse_csv(std::istream& in, const std::string& source,
                  const IngestOptions& options = {});

// Canonical serialization: each record writes exactly the columns of its
// evidence variant, with shortest round-trip number formatting.
void write_csv(std::ostream& out, const Dataset& ds);
void write_csv(const std::filesystem::path& path, const Dataset& ds);

// Validates every invariant of a record; row is used for diagnostics only.
void validate_record(const StudyRecord& rec, std::size_t row, const IngestOptions& options = {});

// Per-patient exposure δ in years under the chosen basis.
double per_patient_exposure(const StudyRecord& rec,
                            ExposureBasis basis = ExposureBasis::MeanFollowup);

// Patient-years: n_patients × δ.
double exposure(const StudyRecord& rec, ExposureBasis basis = ExposureBasis::MeanFollowup);
double total_exposure(const Dataset& ds, ExposureBasis basis = ExposureBasis::MeanFollowup);

bool matches(const StudyRecord& rec, SubsetKind kind);
// Throws EmptySubset when nothing matches.
Dataset subset_filter(const Dataset& ds, SubsetKind kind);

std::string subset_name(SubsetKind kind);        // all | true-placebo | ics
SubsetKind parse_subset(const std::string& name);  // throws std::invalid_argument

struct VariableSummary {
  std::string variable;
  std::size_t count = 0;    // studies reporting the variable
  std::size_t missing = 0;  // studies not reporting it
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Table-1 style summary: patients, duration, follow-up, patient-years, then
// each covariable. Variables nobody reports get count 0 and NaN statistics.
std::vector<VariableSummary> descriptive_summary(const Dataset& ds);

// Median of a nonempty vector (average of the two middle values for even n).
double median_of(std::vector<double> values);

}  // namespace countsynth
