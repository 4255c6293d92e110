#include "impactlab/error.hpp"

namespace impactlab {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::missing_column: return "MissingColumn";
    case Errc::unparsable_timestamp: return "UnparsableTimestamp";
    case Errc::non_positive_price: return "NonPositivePrice";
    case Errc::crossed_quote: return "CrossedQuote";
    case Errc::malformed_row: return "MalformedRow";
    case Errc::empty_day: return "EmptyDay";
    case Errc::degenerate_day: return "DegenerateDay";
    case Errc::empty_input: return "EmptyInput";
    case Errc::incomplete_universe: return "IncompleteUniverse";
    case Errc::all_zero: return "AllZero";
    case Errc::domain_error: return "DomainError";
    case Errc::insufficient_data: return "InsufficientData";
    case Errc::config_error: return "ConfigError";
    case Errc::instance_too_large: return "InstanceTooLarge";
    case Errc::missing_dependency: return "MissingDependency";
    case Errc::io_error: return "IoError";
    case Errc::format_error: return "FormatError";
  }
  return "Unknown";
}

namespace {
std::string decorate(Errc code, const std::string& message, std::int64_t row) {
  std::string out{to_string(code)};
  if (row >= 0) out += " at row " + std::to_string(row);
  out += ": ";
  out += message;
  return out;
}
}  // namespace

Error::Error(Errc code, const std::string& message, std::int64_t row,
             std::vector<std::string> details)
    : std::runtime_error(decorate(code, message, row)),
      code_(code),
      row_(row),
      details_(std::move(details)),
      message_(message) {}

}  // namespace impactlab
