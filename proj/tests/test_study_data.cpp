#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "countsynth/study_data.hpp"
#include "countsynth/text.hpp"
#include "oracles.hpp"

using namespace countsynth;

namespace {

using Row = std::map<std::string, std::string>;

Row base_row(const std::string& id) {
  return {{"study_id", id}, {"year", "2005"}, {"n_patients", "200"}, {"duration_yr", "0.5"},
          {"placebo_type", "true"}};
}

std::string csv_of(const std::vector<Row>& rows) {
  std::string out;
  const auto& cols = csv_columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out += (j ? "," : "") + cols[j];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      auto it = r.find(cols[j]);
      out += (j ? "," : "") + (it == r.end() ? std::string() : quote_csv(it->second));
    }
    out += '\n';
  }
  return out;
}

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in, "inline");
}

Dataset parse_rows(const std::vector<Row>& rows) { return parse(csv_of(rows)); }

Row with(Row r, const Row& extra) {
  for (const auto& [k, v] : extra) r[k] = v;
  return r;
}

}  // namespace

TEST_CASE("zero proportion becomes a zero-patient count") {
  const auto ds = parse_rows({with(base_row("a"), {{"zero_proportion", "0.60"}})});
  REQUIRE(ds.size() == 1);
  CHECK(ds.records[0].evidence == OutcomeEvidence{ZerosOnly{120}});
}

TEST_CASE("zero proportion rounds half to even") {
  const auto ds = parse_rows({with(base_row("a"), {{"n_patients", "5"}, {"zero_proportion", "0.5"}}),
                              with(base_row("b"), {{"n_patients", "7"}, {"zero_proportion", "0.5"}})});
  CHECK(ds.records[0].evidence == OutcomeEvidence{ZerosOnly{2}});
  CHECK(ds.records[1].evidence == OutcomeEvidence{ZerosOnly{4}});
}

TEST_CASE("rate and an inconsistent total conflict") {
  // 200 patients × 0.5 yr = 100 patient-years; a rate of 1.2 implies 120 events
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), {{"rate", "1.2"}, {"total_events", "300"}})}),
                  ConflictingEvidence);
  const auto ok = parse_rows({with(base_row("a"), {{"rate", "1.2"}, {"total_events", "120"}})});
  CHECK(ok.records[0].evidence == OutcomeEvidence{CountOnly{120}});
}

TEST_CASE("a rate without SE is read as a total count") {
  const auto ds = parse_rows({with(base_row("a"), {{"rate", "1.234"}})});
  CHECK(ds.records[0].evidence == OutcomeEvidence{CountOnly{123}});
}

TEST_CASE("rate with SE and counts together conflict") {
  CHECK_THROWS_AS(
      parse_rows({with(base_row("a"), {{"rate", "1.2"}, {"rate_se", "0.1"}, {"zero_patients", "50"}})}),
      ConflictingEvidence);
}

TEST_CASE("zero_patients disagreeing with zero_proportion conflicts") {
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), {{"zero_patients", "100"}, {"zero_proportion", "0.6"}})}),
                  ConflictingEvidence);
}

TEST_CASE("confidence interval converts to a standard error") {
  const auto ds = parse_rows({with(base_row("a"), {{"rate", "1.0"}, {"rate_ci_lo", "0.804"}, {"rate_ci_hi", "1.196"}})});
  const auto& ev = std::get<RateWithSE>(ds.records[0].evidence);
  CHECK(ev.rate == 1.0);
  CHECK(ev.se == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), {{"rate", "1.0"}, {"rate_se", "0.2"},
                                                   {"rate_ci_lo", "0.804"}, {"rate_ci_hi", "1.196"}})}),
                  ConflictingEvidence);
}

TEST_CASE("count plus zeros") {
  const auto ds = parse_rows({with(base_row("a"), {{"total_events", "150"}, {"zero_patients", "90"}})});
  CHECK(ds.records[0].evidence == OutcomeEvidence{CountAndZeros{150, 90}});
  CHECK(evidence_format_name(ds.records[0].evidence) == "count_zeros");
}

TEST_CASE("missing column and empty file") {
  CHECK_THROWS_AS(parse(""), MissingColumn);
  std::string text = csv_of({base_row("a")});
  text.replace(text.find("sgrq"), 4, "sgrx");
  try {
    parse(text);
    FAIL("expected MissingColumn");
  } catch (const MissingColumn& e) {
    CHECK(e.column == "sgrq");
  }
}

TEST_CASE("bad numeric reports row and column") {
  try {
    parse_rows({with(base_row("a"), {{"total_events", "10"}}),
                with(base_row("b"), {{"total_events", "1O"}})});
    FAIL("expected BadNumeric");
  } catch (const BadNumeric& e) {
    CHECK(e.row == 2);
    CHECK(e.column == "total_events");
  }
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), {{"fev1_pct", "1,000"}, {"total_events", "1"}})}), BadNumeric);
}

TEST_CASE("invariant violations") {
  const Row ev{{"total_events", "10"}};
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"n_patients", "0"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"duration_yr", "0"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"mean_followup_yr", "0.6"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"year", "1970"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"sgrq", "101"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"oxford_score", "6"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(with(base_row("a"), ev), {{"placebo_type", "maybe"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), {{"zero_patients", "201"}})}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), {{"zero_patients", "200"}, {"total_events", "3"}})}),
                  InvariantViolation);
  CHECK_THROWS_AS(parse_rows({base_row("a")}), InvariantViolation);
  CHECK_THROWS_AS(parse_rows({with(base_row("a"), ev), with(base_row("a"), ev)}), InvariantViolation);

  IngestOptions wide;
  wide.min_year = 1960;
  std::istringstream in(csv_of({with(with(base_row("a"), ev), {{"year", "1970"}})}));
  CHECK(parse_csv(in, "inline", wide).size() == 1);
}

TEST_CASE("evidence census of a 55-study table") {
  std::vector<Row> rows;
  for (int i = 0; i < 55; ++i) {
    Row r = base_row("s" + std::to_string(i));
    if (i < 3) r = with(r, {{"rate", "1.1"}, {"rate_se", "0.1"}});
    else if (i < 17) r = with(r, {{"total_events", "120"}, {"zero_patients", "110"}});
    else if (i < 26) r = with(r, {{"total_events", "120"}});
    else r = with(r, {{"zero_proportion", "0.55"}});
    if (i < 21) r["placebo_type"] = "true";
    else r["placebo_type"] = "ics";
    rows.push_back(r);
  }
  const auto ds = parse_rows(rows);
  std::map<std::string, int> census;
  for (const auto& rec : ds.records) ++census[evidence_format_name(rec.evidence)];
  CHECK(ds.size() == 55);
  CHECK(census["rate_se"] == 3);
  CHECK(census["count_zeros"] == 14);
  CHECK(census["count"] == 9);
  CHECK(census["zeros"] == 29);
  CHECK(subset_filter(ds, SubsetKind::TruePlacebo).size() == 21);
  CHECK(subset_filter(ds, SubsetKind::IcsPlacebo).size() == 34);
  CHECK(subset_filter(ds, SubsetKind::All).records == ds.records);
}

TEST_CASE("exposure") {
  StudyRecord r;
  r.n_patients = 100;
  r.study_duration_years = 1.0;
  r.mean_followup_years = 0.5;
  CHECK(exposure(r) == 50.0);
  CHECK(exposure(r, ExposureBasis::NominalDuration) == 100.0);
  CHECK(per_patient_exposure(r) == 0.5);
  r.mean_followup_years.reset();
  CHECK(exposure(r) == 100.0);

  Dataset a, b, ab;
  StudyRecord s = r;
  s.n_patients = 40;
  a.records = {r};
  b.records = {s};
  ab.records = {r, s};
  CHECK(total_exposure(ab) == total_exposure(a) + total_exposure(b));
}

TEST_CASE("empty subset") {
  const auto ds = parse_rows({with(base_row("a"), {{"total_events", "3"}})});
  CHECK_THROWS_AS(subset_filter(ds, SubsetKind::IcsPlacebo), EmptySubset);
  CHECK(parse_subset("true-placebo") == SubsetKind::TruePlacebo);
  CHECK(parse_subset("ics") == SubsetKind::IcsPlacebo);
  CHECK(parse_subset("all") == SubsetKind::All);
  CHECK_THROWS_AS(parse_subset("none"), std::invalid_argument);
}

TEST_CASE("descriptive summary") {
  SUBCASE("singleton") {
    const auto ds = parse_rows({with(base_row("a"), {{"total_events", "3"}})});
    const auto s = descriptive_summary(ds);
    CHECK(s[0].variable == "Patients");
    CHECK(s[0].count == 1);
    CHECK(s[0].median == 200);
    CHECK(s[0].min == 200);
    CHECK(s[0].max == 200);
  }
  SUBCASE("three studies, missing covariable counted") {
    const auto ds = parse_rows({with(base_row("a"), {{"n_patients", "100"}, {"total_events", "3"}, {"fev1_pct", "40"}}),
                                with(base_row("b"), {{"n_patients", "400"}, {"total_events", "3"}}),
                                with(base_row("c"), {{"n_patients", "200"}, {"total_events", "3"}, {"fev1_pct", "60"}})});
    const auto s = descriptive_summary(ds);
    CHECK(s[0].median == 200);
    CHECK(s[0].min == 100);
    CHECK(s[0].max == 400);
    bool found = false;
    for (const auto& v : s) {
      if (v.variable == "Mean FEV-1") {
        found = true;
        CHECK(v.count == 2);
        CHECK(v.missing == 1);
        CHECK(v.median == 50);
      }
    }
    CHECK(found);
    // recomputation from scratch gives the same table
    const auto again = descriptive_summary(ds);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(again[i].count == s[i].count);
      if (s[i].count) CHECK(again[i].median == s[i].median);
    }
  }
}

TEST_CASE("ragged rows") {
  auto text = csv_of({with(base_row("a"), {{"total_events", "10"}})});
  text.insert(text.size() - 1, ",extra");
  CHECK_THROWS_AS(parse(text), InvariantViolation);
}

TEST_CASE("ingest, serialize, ingest round trip") {
  const auto ds = parse_rows({
      with(base_row("a"), {{"rate", "0.873"}, {"rate_se", "0.0412"}, {"sgrq", "47.55"}, {"oxford_score", "4"}}),
      with(base_row("b,quoted"), {{"total_events", "150"}, {"zero_patients", "90"}, {"mean_followup_yr", "0.4327"}}),
      with(base_row("c"), {{"total_events", "77"}, {"placebo_type", "ics"}, {"fev1_pct", "50.25"}, {"mean_age", "63.9"}}),
      with(base_row("d"), {{"zero_proportion", "0.333"}, {"smokers_pct", "43.4"}, {"pack_years", "44"}, {"male_pct", "74.4"}}),
      with(base_row("e"), {{"rate", "1.0"}, {"rate_ci_lo", "0.8"}, {"rate_ci_hi", "1.25"}}),
  });
  std::ostringstream once;
  write_csv(once, ds);
  const auto back = parse(once.str());
  CHECK(back.records == ds.records);
  std::ostringstream twice;
  write_csv(twice, back);
  CHECK(twice.str() == once.str());

  const auto dir = oracle::scratch_dir("roundtrip");
  write_csv(dir / "t.csv", ds);
  CHECK(ingest_csv(dir / "t.csv").records == ds.records);
  std::filesystem::remove_all(dir);
}

TEST_CASE("comment lines and BOM are ignored") {
  const auto text = "\xEF\xBB\xBF# produced elsewhere\n" + csv_of({with(base_row("a"), {{"total_events", "3"}})}) + "# trailing\n";
  const auto ds = parse(text);
  REQUIRE(ds.size() == 1);
  CHECK(ds.records[0].study_id == "a");
}
