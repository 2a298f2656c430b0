#include "countsynth/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "countsynth/text.hpp"

namespace countsynth {

namespace {

std::string cell(double x) { return std::isfinite(x) ? format_double(x) : ""; }

std::string fixed3(double x) { return format_fixed(x, kTableDecimals); }

std::string estimate_text(double median, double lo, double hi) {
  return fixed3(median) + " (" + fixed3(lo) + ", " + fixed3(hi) + ")";
}

// Up to four decimals with trailing zeros dropped: 0.4808, 50.25, 36.
std::string trimmed4(double x) {
  if (!std::isfinite(x)) return "NA";
  std::string s = format_fixed(x, 4);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s == "-0" ? "0" : s;
}

// Display width of UTF-8 text (continuation bytes don't count).
std::size_t columns(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

// Left-aligned first column, right-aligned others.
std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], columns(r[j]));
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t j = 0; j < r.size(); ++j) {
      const std::string pad(width[j] - columns(r[j]), ' ');
      line += j == 0 ? r[j] + pad : "  " + pad + r[j];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

std::string subset_heading(SubsetKind k) {
  switch (k) {
    case SubsetKind::All: return "All studies";
    case SubsetKind::TruePlacebo: return "True placebos";
    case SubsetKind::IcsPlacebo: return "ICS-placebos";
  }
  return "";
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xF];
  return s;
}

std::string manifest_comment(const std::string& hash) { return "# manifest " + hash; }

std::string format_tail_probability(const TailProbability& p) {
  if (p.upper_bound) return "< " + fixed3(std::max(p.value, 1e-3));
  if (p.value < 1e-3) return "< 0.001";
  return fixed3(p.value);
}

void write_parameters_csv(std::ostream& out, const FitReport& report, const std::string& hash) {
  out << manifest_comment(hash) << '\n';
  out << "parameter,median,ci_lo,ci_hi,pct_change_median,pct_change_ci_lo,pct_change_ci_hi,"
         "pct_decade_median,pct_decade_ci_lo,pct_decade_ci_hi,p_b,p_b_upper_bound,rhat,ess,"
         "label\n";
  for (const auto& p : report.parameters) {
    const auto& s = p.summary;
    out << p.name << ',' << cell(s.median) << ',' << cell(s.ci_low) << ',' << cell(s.ci_high);
    for (const auto* pc : {&p.pct_change, &p.pct_change_decade}) {
      if (*pc)
        out << ',' << cell((*pc)->median) << ',' << cell((*pc)->ci_low) << ',' << cell((*pc)->ci_high);
      else
        out << ",,,";
    }
    if (s.p_b)
      out << ',' << cell(s.p_b->value) << ',' << (s.p_b->upper_bound ? "true" : "false");
    else
      out << ",,";
    out << ',' << cell(s.rhat) << ',' << cell(s.ess) << ',' << quote_csv(p.label) << '\n';
  }
}

void write_shrinkage_csv(std::ostream& out, const FitReport& report, const std::string& hash) {
  out << manifest_comment(hash) << '\n';
  out << "study_id,year,median,ci_lo,ci_hi,evidence_format\n";
  for (const auto& r : report.shrinkage)
    out << quote_csv(r.study_id) << ',' << r.year << ',' << cell(r.rate.median) << ','
        << cell(r.rate.ci_low) << ',' << cell(r.rate.ci_high) << ',' << r.evidence_format << '\n';
}

void write_trend_csv(std::ostream& out, const FitReport& report, const std::string& hash) {
  out << manifest_comment(hash) << '\n';
  out << "year,median,ci_lo,ci_hi\n";
  for (const auto& t : report.trend)
    out << t.year << ',' << cell(t.median) << ',' << cell(t.ci_low) << ',' << cell(t.ci_high) << '\n';
}

void write_screen_csv(std::ostream& out, const std::vector<CorrelationResult>& rows,
                      const std::string& hash) {
  out << manifest_comment(hash) << '\n';
  out << "covariable,n,r,ci_lo,ci_hi,p\n";
  for (const auto& r : rows)
    out << r.covariable << ',' << r.n << ',' << cell(r.r) << ',' << cell(r.ci_low) << ','
        << cell(r.ci_high) << ',' << cell(r.p_value) << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<SubsetSummary>& summaries,
                       const std::string& hash) {
  out << manifest_comment(hash) << '\n';
  out << "subset,variable,n,median,min,max\n";
  for (const auto& s : summaries)
    for (const auto& v : s.variables)
      out << subset_name(s.subset) << ',' << quote_csv(v.variable) << ',' << v.count << ','
          << cell(v.median) << ',' << cell(v.min) << ',' << cell(v.max) << '\n';
}

void write_truth_csv(std::ostream& out, const SimTruth& truth, const std::string& hash) {
  out << manifest_comment(hash) << '\n';
  out << "study_id,lambda,phi,n_patients,followup_yr,total_events,zero_patients\n";
  for (const auto& s : truth.studies) {
    std::int64_t total = 0, zeros = 0;
    for (auto c : s.counts) {
      total += c;
      zeros += c == 0;
    }
    out << s.study_id << ',' << cell(s.lambda) << ',' << cell(s.phi) << ',' << s.n_patients << ','
        << cell(s.followup_years) << ',' << total << ',' << zeros << '\n';
  }
}

std::string render_parameters_text(const FitReport& report) {
  const bool year_slope = std::find(report.covariables.begin(), report.covariables.end(), "year") !=
                          report.covariables.end();
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Parameter", "Estimate",
                  year_slope && report.covariables.size() == 1 ? "Implied annual percentage change"
                                                               : "Implied percentage change",
                  "p_B"});
  for (const auto& p : report.parameters) {
    const auto& s = p.summary;
    rows.push_back({p.label, estimate_text(s.median, s.ci_low, s.ci_high),
                    p.pct_change ? estimate_text(p.pct_change->median, p.pct_change->ci_low,
                                                 p.pct_change->ci_high)
                                 : "",
                    s.p_b ? format_tail_probability(*s.p_b) : ""});
  }
  std::ostringstream out;
  out << report.label << ":\n" << align(rows);
  for (const auto& p : report.parameters) {
    if (p.pct_change_decade)
      out << "Per decade, " << p.label << ": "
          << estimate_text(p.pct_change_decade->median, p.pct_change_decade->ci_low,
                           p.pct_change_decade->ci_high)
          << "%\n";
  }
  out << "max R-hat " << fixed3(report.max_rhat) << ", min ESS " << format_fixed(report.min_ess, 0);
  if (!report.converged) {
    out << "; not converged:";
    for (const auto& n : report.unconverged) out << ' ' << n;
  }
  out << '\n';
  if (!report.excluded.empty()) {
    out << "excluded for missing covariables:";
    for (const auto& id : report.excluded) out << ' ' << id;
    out << '\n';
  }
  return out.str();
}

std::string render_screen_text(const std::vector<CorrelationResult>& rows) {
  std::vector<std::vector<std::string>> t;
  t.push_back({"Covariable", "N", "r", "95% CI", "p"});
  for (const auto& r : rows)
    t.push_back({covariable_label(r.covariable), std::to_string(r.n), fixed3(r.r),
                 "(" + fixed3(r.ci_low) + ", " + fixed3(r.ci_high) + ")", fixed3(r.p_value)});
  return align(t);
}

std::string render_summary_text(const std::vector<SubsetSummary>& summaries) {
  std::vector<std::vector<std::string>> t;
  std::vector<std::string> head{""}, sub{""};
  for (const auto& s : summaries) {
    head.insert(head.end(), {subset_heading(s.subset), "", ""});
    sub.insert(sub.end(), {"N", "Median", "Range"});
  }
  t.push_back(head);
  t.push_back(sub);
  if (!summaries.empty()) {
    for (std::size_t v = 0; v < summaries.front().variables.size(); ++v) {
      std::vector<std::string> row{summaries.front().variables[v].variable};
      for (const auto& s : summaries) {
        const auto& x = s.variables.at(v);
        row.push_back(std::to_string(x.count));
        row.push_back(x.count ? trimmed4(x.median) : "NA");
        row.push_back(x.count ? "(" + trimmed4(x.min) + "–" + trimmed4(x.max) + ")" : "");
      }
      t.push_back(row);
    }
  }
  return align(t);
}

std::string render_trend_svg(const FitReport& report) {
  if (report.trend.empty()) throw CovariableMismatch("no trend curve: the fit adjusts for other covariables");
  constexpr double W = 820, H = 500, L = 70, R = 20, T = 30, B = 60;
  double y_max = 0.0;
  int year_lo = report.trend.front().year, year_hi = report.trend.back().year;
  for (const auto& t : report.trend) y_max = std::max(y_max, t.ci_high);
  for (const auto& s : report.shrinkage) {
    y_max = std::max(y_max, s.rate.ci_high);
    year_lo = std::min(year_lo, s.year);
    year_hi = std::max(year_hi, s.year);
  }
  y_max = std::ceil(y_max * 2.0) / 2.0;
  if (!(y_max > 0.0)) y_max = 1.0;
  const double x0 = year_lo - 0.5, x1 = year_hi + 0.5;
  auto px = [&](double year) { return L + (year - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double rate) { return H - B - std::min(rate, y_max) / y_max * (H - T - B); };
  auto num = [](double v) { return format_fixed(v, 2); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // band, then median curve
  s << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.45\" stroke=\"none\" points=\"";
  for (const auto& t : report.trend) s << num(px(t.year)) << ',' << num(py(t.ci_high)) << ' ';
  for (auto it = report.trend.rbegin(); it != report.trend.rend(); ++it)
    s << num(px(it->year)) << ',' << num(py(it->ci_low)) << ' ';
  s << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\" stroke-dasharray=\"8,5\" points=\"";
  for (const auto& t : report.trend) s << num(px(t.year)) << ',' << num(py(t.median)) << ' ';
  s << "\"/>\n";

  // studies sharing a year are spread evenly across it
  std::map<int, std::vector<const ShrinkageRow*>> by_year;
  for (const auto& r : report.shrinkage) by_year[r.year].push_back(&r);
  for (const auto& [year, rows] : by_year) {
    const double k = static_cast<double>(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto& r = *rows[j];
      const double x = px(year - 0.4 + 0.8 * (static_cast<double>(j) + 0.5) / k);
      const double y = py(r.rate.median);
      s << "<line x1=\"" << num(x) << "\" x2=\"" << num(x) << "\" y1=\"" << num(py(r.rate.ci_low))
        << "\" y2=\"" << num(py(r.rate.ci_high)) << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
      if (r.evidence_format == "rate_se")
        s << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"3.5\" fill=\"#d62728\"/>\n";
      else if (r.evidence_format == "count_zeros")
        s << "<rect x=\"" << num(x - 3.5) << "\" y=\"" << num(y - 3.5)
          << "\" width=\"7\" height=\"7\" fill=\"#2ca02c\"/>\n";
      else if (r.evidence_format == "count")
        s << "<polygon points=\"" << num(x) << ',' << num(y - 4.5) << ' ' << num(x - 4) << ','
          << num(y + 3) << ' ' << num(x + 4) << ',' << num(y + 3) << "\" fill=\"#ff7f0e\"/>\n";
      else
        s << "<polygon points=\"" << num(x) << ',' << num(y - 4.5) << ' ' << num(x + 4.5) << ','
          << num(y) << ' ' << num(x) << ',' << num(y + 4.5) << ' ' << num(x - 4.5) << ','
          << num(y) << "\" fill=\"#9467bd\"/>\n";
    }
  }

  // axes
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\""
    << H - B << "\" stroke=\"black\"/>\n";
  const int step = year_hi - year_lo > 12 ? 5 : 1;
  for (int y = (year_lo + step - 1) / step * step; y <= year_hi; y += step)
    s << "<text x=\"" << num(px(y)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << y
      << "</text>\n";
  for (double v = 0.0; v <= y_max + 1e-9; v += y_max > 3.0 ? 1.0 : 0.5)
    s << "<text x=\"" << L - 8 << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">"
      << format_fixed(v, 1) << "</text>\n";
  s << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\">publication year</text>\n";
  s << "<text transform=\"translate(18," << num((T + H - B) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">annualized event rate</text>\n";
  s << "<text x=\"" << L << "\" y=\"18\">" << report.label << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace countsynth
