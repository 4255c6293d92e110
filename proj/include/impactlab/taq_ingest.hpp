#pragma once

// Trade/quote CSV parsing, session filtering and resampling onto the
// one-second session grid.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "impactlab/error.hpp"
#include "impactlab/session.hpp"

namespace impactlab {

struct TickRecord {
  std::string symbol;
  Nanos ts = 0;
  double price = 0.0;
  std::int64_t size = 0;

  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

struct QuoteRecord {
  std::string symbol;
  Nanos ts = 0;
  double bid = 0.0;
  double ask = 0.0;

  double midpoint() const { return (bid + ask) / 2.0; }
  friend bool operator==(const QuoteRecord&, const QuoteRecord&) = default;
};

/// Column names looked up in the header row; column order is free.
struct TradeSchema {
  std::string symbol = "symbol";
  std::string ts = "ts";
  std::string price = "price";
  std::string size = "size";
};

struct QuoteSchema {
  std::string symbol = "symbol";
  std::string ts = "ts";
  std::string bid = "bid";
  std::string ask = "ask";
};

struct RowError {
  Errc code;
  std::int64_t row;  // 1-based line number, header is row 1
  std::string message;
};

template <class Record>
struct ParseResult {
  std::vector<Record> records;
  std::vector<RowError> errors;
  std::int64_t data_rows = 0;
};

/// Throws Error(missing_column, row 1) when the header lacks a schema
/// column. Bad rows are reported in `errors`, never dropped silently.
ParseResult<TickRecord> parse_trades(std::istream& in, const TradeSchema& schema = {});
ParseResult<QuoteRecord> parse_quotes(std::istream& in, const QuoteSchema& schema = {});

/// Streaming variants used by the pipeline; `on_record` sees each good row.
void for_each_trade(std::istream& in, const TradeSchema& schema,
                    const std::function<void(const TickRecord&)>& on_record,
                    std::vector<RowError>& errors, std::int64_t& data_rows);
void for_each_quote(std::istream& in, const QuoteSchema& schema,
                    const std::function<void(const QuoteRecord&)>& on_record,
                    std::vector<RowError>& errors, std::int64_t& data_rows);

template <class Record>
struct FilterResult {
  std::vector<Record> records;
  std::int64_t dropped = 0;
};

/// Keeps records with open_s <= time-of-day < close_s, stably sorted by
/// (symbol, ts).
template <class Record>
FilterResult<Record> session_filter(std::vector<Record> records, const SessionBounds& bounds) {
  std::stable_sort(records.begin(), records.end(), [](const Record& a, const Record& b) {
    return std::tie(a.symbol, a.ts) < std::tie(b.symbol, b.ts);
  });
  FilterResult<Record> out;
  out.records.reserve(records.size());
  for (auto& r : records) {
    if (bounds.contains(r.ts))
      out.records.push_back(std::move(r));
    else
      ++out.dropped;
  }
  return out;
}

/// Per symbol-day series on the 1 Hz grid. Trades are stored CSR-style:
/// the prices of cell t are trade_prices[cell_offsets[t] .. cell_offsets[t+1]),
/// in intra-second order.
struct SecondSeries {
  std::string symbol;
  SessionGrid grid;
  std::vector<double> midpoint;  // NaN marks cells before the first quote
  std::vector<std::uint32_t> cell_offsets;
  std::vector<double> trade_prices;

  int len() const { return grid.len(); }
  std::uint32_t n_trades(int t) const { return cell_offsets[t + 1] - cell_offsets[t]; }
  std::span<const double> trades_in(int t) const {
    return {trade_prices.data() + cell_offsets[t], n_trades(t)};
  }
};

struct MidpointResample {
  std::vector<double> midpoint;
  std::int64_t rejected_crossed = 0;
};

/// Last valid quote of each cell, forward filled within the day. Crossed
/// quotes (ask < bid) are skipped. Quotes outside the grid are ignored.
/// Throws Error(empty_day) when no valid quote falls in the session.
MidpointResample resample_midpoints(std::span<const QuoteRecord> quotes, const SessionGrid& grid);

struct TradeBuckets {
  std::vector<std::uint32_t> cell_offsets;
  std::vector<double> prices;
};

/// Assigns session trades to their cells, preserving order within a cell.
TradeBuckets bucket_trades(std::span<const TickRecord> trades, const SessionGrid& grid);

// --- batch ingest ---------------------------------------------------------

struct IngestReport {
  std::int64_t trade_rows = 0;
  std::int64_t trade_kept = 0;
  std::int64_t trade_dropped = 0;   // outside the session window
  std::int64_t trade_malformed = 0;
  std::int64_t quote_rows = 0;
  std::int64_t quote_kept = 0;
  std::int64_t quote_dropped = 0;
  std::int64_t quote_malformed = 0;  // includes crossed quotes
  std::vector<RowError> errors;      // first errors, capped
  std::vector<std::string> empty_days;  // "SYMBOL DATE" with trades but no quotes
};

struct IngestOutput {
  std::vector<SecondSeries> series;  // sorted by (date, symbol)
  IngestReport report;
};

/// Parses all files, groups by (symbol, date) and builds one SecondSeries
/// per symbol-day that has at least one valid session quote.
IngestOutput ingest_files(const std::vector<std::string>& trade_files,
                          const std::vector<std::string>& quote_files, const SessionBounds& bounds);

}  // namespace impactlab
