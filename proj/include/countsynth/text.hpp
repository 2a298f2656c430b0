#pragma once

// Small text utilities shared by the CSV readers and writers.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace countsynth {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Splits one CSV line on commas, honouring double-quoted fields ("" escapes).
std::vector<std::string> split_csv_line(std::string_view line);
// Quotes a field only when it contains a comma, quote or newline.
std::string quote_csv(std::string_view field);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// Shortest representation that parses back to the same double.
std::string format_double(double x);
// Fixed notation with `decimals` digits after the point.
std::string format_fixed(double x, int decimals);

}  // namespace countsynth
