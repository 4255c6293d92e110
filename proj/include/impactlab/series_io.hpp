#pragma once

// Versioned CSV files for per symbol-day series.
//
//   # impactlab-series v1 symbol=AAPL date=2008-01-02 session=09:40-15:50 len=22200
//   t_index,midpoint,n_trades,trade_prices
//   0,,0,
//   5,180.255,2,180.25;180.26
//
// An empty midpoint marks a cell before the day's first quote. Trade prices
// of a cell are ';'-separated in intra-second order.
//
//   # impactlab-signs v1 symbol=AAPL date=2008-01-02 session=09:40-15:50 len=22200 first_trade_sign=0
//   t_index,eps,n_trades

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "impactlab/signing.hpp"
#include "impactlab/taq_ingest.hpp"

namespace impactlab {

void write_series(std::ostream& out, const SecondSeries& series);
SecondSeries read_series(std::istream& in);

void write_signs(std::ostream& out, const SignSeries& signs);
SignSeries read_signs(std::istream& in);

/// Parses a `# <magic> v<version> key=value ...` header line.
std::map<std::string, std::string> parse_header_line(const std::string& line,
                                                     const std::string& magic, int version);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace impactlab
