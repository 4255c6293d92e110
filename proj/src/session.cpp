#include "impactlab/session.hpp"

#include <cstdio>

#include "impactlab/error.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t k = 0; k < n; ++k) {
    char c = s[pos + k];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::optional<Date> parse_date(std::string_view s) {
  s = trim(s);
  int y, m, d;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!digits(s, 0, 4, y) || !digits(s, 5, 2, m) || !digits(s, 8, 2, d)) return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Nanos midnight_of(Date d) {
  auto days = std::chrono::sys_days{d}.time_since_epoch().count();
  return static_cast<Nanos>(days) * kSecondsPerDay * kNanosPerSecond;
}

Date date_of(Nanos ts) {
  auto day = floor_div(ts, kSecondsPerDay * kNanosPerSecond);
  return Date{std::chrono::sys_days{std::chrono::days{day}}};
}

std::int64_t second_of_day(Nanos ts) {
  auto secs = floor_div(ts, kNanosPerSecond);
  return secs - floor_div(secs, kSecondsPerDay) * kSecondsPerDay;
}

std::optional<Nanos> parse_timestamp(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.size() < 19 || s[4] != '-') {
    return parse_int(s);
  }
  auto date = parse_date(s.substr(0, 10));
  if (!date || (s[10] != 'T' && s[10] != ' ')) return std::nullopt;
  int hh, mm, ss;
  if (!digits(s, 11, 2, hh) || s[13] != ':' || !digits(s, 14, 2, mm) || s[16] != ':' ||
      !digits(s, 17, 2, ss))
    return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 59) return std::nullopt;
  Nanos frac = 0;
  if (s.size() > 19) {
    if (s[19] != '.' || s.size() == 20 || s.size() > 29) return std::nullopt;
    std::size_t n = s.size() - 20;
    for (std::size_t k = 0; k < 9; ++k) {
      int dgt = 0;
      if (k < n) {
        char c = s[20 + k];
        if (c < '0' || c > '9') return std::nullopt;
        dgt = c - '0';
      }
      frac = frac * 10 + dgt;
    }
  }
  return midnight_of(*date) + (static_cast<Nanos>(hh) * 3600 + mm * 60 + ss) * kNanosPerSecond +
         frac;
}

std::string format_timestamp(Nanos ts) {
  auto date = date_of(ts);
  auto sod = second_of_day(ts);
  Nanos frac = ts - midnight_of(date) - sod * kNanosPerSecond;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d.%09lld", format_date(date).c_str(),
                static_cast<int>(sod / 3600), static_cast<int>((sod / 60) % 60),
                static_cast<int>(sod % 60), static_cast<long long>(frac));
  return buf;
}

std::optional<int> parse_clock(std::string_view s) {
  s = trim(s);
  int hh, mm, ss = 0;
  if (s.size() != 5 && s.size() != 8) return std::nullopt;
  if (!digits(s, 0, 2, hh) || s[2] != ':' || !digits(s, 3, 2, mm)) return std::nullopt;
  if (s.size() == 8 && (s[5] != ':' || !digits(s, 6, 2, ss))) return std::nullopt;
  if (hh > 24 || mm > 59 || ss > 59) return std::nullopt;
  int v = hh * 3600 + mm * 60 + ss;
  if (v > 86400) return std::nullopt;
  return v;
}

std::string format_clock(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", s / 3600, (s / 60) % 60, s % 60);
  return buf;
}

SessionBounds SessionBounds::parse(std::string_view text) {
  auto dash = text.find('-');
  if (dash == std::string_view::npos)
    throw Error(Errc::config_error, "session must look like HH:MM-HH:MM, got '" +
                                        std::string(text) + "'");
  auto open = parse_clock(text.substr(0, dash));
  auto close = parse_clock(text.substr(dash + 1));
  if (!open || !close)
    throw Error(Errc::config_error, "unparsable session bounds '" + std::string(text) + "'");
  if (*open >= *close)
    throw Error(Errc::config_error, "session open must precede close: '" + std::string(text) + "'");
  return SessionBounds{*open, *close};
}

std::string SessionBounds::to_string() const {
  auto clock = [](int v) {
    auto full = format_clock(v);
    return v % 60 == 0 ? full.substr(0, 5) : full;
  };
  return clock(open_s) + "-" + clock(close_s);
}

std::optional<int> SessionGrid::cell_of(Nanos ts) const {
  if (date_of(ts) != date) return std::nullopt;
  auto s = second_of_day(ts);
  if (s < bounds.open_s || s >= bounds.close_s) return std::nullopt;
  return static_cast<int>(s - bounds.open_s);
}

SessionGrid SessionGrid::make(Date date, SessionBounds bounds) {
  if (!date.ok()) throw Error(Errc::config_error, "invalid session date");
  if (bounds.open_s < 0 || bounds.close_s > 86400 || bounds.open_s >= bounds.close_s)
    throw Error(Errc::config_error, "session bounds must satisfy 0 <= open < close <= 24:00");
  return SessionGrid{date, bounds};
}

}  // namespace impactlab
