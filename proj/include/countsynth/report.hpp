#pragma once

// Tables, CSV artifacts, run manifests and the SVG trend figure.

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "countsynth/meta_regression.hpp"
#include "countsynth/sim.hpp"
#include "countsynth/study_data.hpp"

namespace countsynth {

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Every CSV artifact starts with this line so it can be traced to its manifest.
std::string manifest_comment(const std::string& hash);

// Decimal places used by the aligned-text tables.
inline constexpr int kTableDecimals = 3;

void write_parameters_csv(std::ostream& out, const FitReport& report, const std::string& hash);
void write_shrinkage_csv(std::ostream& out, const FitReport& report, const std::string& hash);
void write_trend_csv(std::ostream& out, const FitReport& report, const std::string& hash);
void write_screen_csv(std::ostream& out, const std::vector<CorrelationResult>& rows,
                      const std::string& hash);

struct SubsetSummary {
  SubsetKind subset = SubsetKind::All;
  std::vector<VariableSummary> variables;
};
void write_summary_csv(std::ostream& out, const std::vector<SubsetSummary>& summaries,
                       const std::string& hash);
void write_truth_csv(std::ostream& out, const SimTruth& truth, const std::string& hash);

std::string render_parameters_text(const FitReport& report);
std::string render_screen_text(const std::vector<CorrelationResult>& rows);
std::string render_summary_text(const std::vector<SubsetSummary>& summaries);

// p_B as printed in tables: "0.012", or "< 0.001" when only a bound is known.
std::string format_tail_probability(const TailProbability& p);

// Per-study points with 95% whiskers (marker by evidence format), the median
// trend as a dashed line and its 95% band shaded. Needs a year-only fit.
std::string render_trend_svg(const FitReport& report);

}  // namespace countsynth
