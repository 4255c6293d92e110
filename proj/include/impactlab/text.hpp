#pragma once

// Small text helpers shared by the CSV readers and writers. Numbers are
// written in shortest round-trip form so output bytes depend only on values.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace impactlab {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_present(double x) { return !std::isnan(x); }

/// Shortest decimal representation that parses back to the same double.
/// NaN formats as the empty string (the "undefined" marker in CSV outputs).
std::string format_double(double x);
void append_double(std::string& out, double x);
void append_int(std::string& out, std::int64_t x);

std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

/// Splits on `sep` without quoting rules; fields are views into `line`.
void split_fields(std::string_view line, char sep, std::vector<std::string_view>& out);
std::string_view trim(std::string_view s);

/// Reads one LF-terminated line, stripping a trailing CR. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

}  // namespace impactlab
