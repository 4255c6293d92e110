#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace impactlab {

enum class Errc {
  missing_column,
  unparsable_timestamp,
  non_positive_price,
  crossed_quote,
  malformed_row,
  empty_day,
  degenerate_day,
  empty_input,
  incomplete_universe,
  all_zero,
  domain_error,
  insufficient_data,
  config_error,
  instance_too_large,
  missing_dependency,
  io_error,
  format_error,
};

std::string_view to_string(Errc code);

/// Library-wide exception. `row()` is the 1-based input line for parse
/// errors and -1 otherwise; `details()` carries item lists such as the
/// missing pairs of an incomplete universe.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::int64_t row = -1,
        std::vector<std::string> details = {});

  Errc code() const noexcept { return code_; }
  std::int64_t row() const noexcept { return row_; }
  const std::vector<std::string>& details() const noexcept { return details_; }
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::int64_t row_;
  std::vector<std::string> details_;
  std::string message_;
};

}  // namespace impactlab
