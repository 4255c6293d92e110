#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace impactlab {

/// Nanoseconds since 1970-01-01T00:00:00 of the exchange-local wall clock.
/// Timestamps carry no zone: local time is encoded as if it were UTC.
using Nanos = std::int64_t;
using Date = std::chrono::year_month_day;

inline constexpr Nanos kNanosPerSecond = 1'000'000'000;
inline constexpr std::int64_t kSecondsPerDay = 86'400;

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fffffffff]` (a space may replace the `T`)
/// or a bare integer of epoch nanoseconds.
std::optional<Nanos> parse_timestamp(std::string_view text);
std::string format_timestamp(Nanos ts);

std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);

Date date_of(Nanos ts);
/// Whole seconds since local midnight, floor semantics.
std::int64_t second_of_day(Nanos ts);
Nanos midnight_of(Date d);

/// Parses `HH:MM[:SS]` into seconds of day.
std::optional<int> parse_clock(std::string_view text);
std::string format_clock(int seconds_of_day);

/// Session window as half-open seconds-of-day [open_s, close_s).
struct SessionBounds {
  int open_s = 9 * 3600 + 40 * 60;
  int close_s = 15 * 3600 + 50 * 60;

  int len() const { return close_s - open_s; }
  bool contains(Nanos ts) const {
    auto s = second_of_day(ts);
    return s >= open_s && s < close_s;
  }

  /// `HH:MM-HH:MM`; throws Error(config_error) on bad input.
  static SessionBounds parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const SessionBounds&, const SessionBounds&) = default;
};

/// One trading day on the 1 Hz grid. Cell t covers [open_s + t, open_s + t + 1).
struct SessionGrid {
  Date date{};
  SessionBounds bounds{};

  int len() const { return bounds.len(); }
  int open_s() const { return bounds.open_s; }
  int close_s() const { return bounds.close_s; }

  /// Cell index of `ts`, or nullopt when it falls on another date or
  /// outside the session.
  std::optional<int> cell_of(Nanos ts) const;

  static SessionGrid make(Date date, SessionBounds bounds = {});

  friend bool operator==(const SessionGrid&, const SessionGrid&) = default;
};

}  // namespace impactlab
