#include "impactlab/taq_ingest.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <optional>

#include "impactlab/text.hpp"

namespace impactlab {

namespace {

constexpr std::size_t kMaxReportedErrors = 100;

std::size_t find_column(const std::vector<std::string_view>& header, const std::string& name) {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (trim(header[k]) == name) return k;
  }
  throw Error(Errc::missing_column, "header lacks column '" + name + "'", 1);
}

// Shared row loop: reads the header, resolves columns, and hands each data
// row's fields to `on_row`, which returns an error or nullopt.
template <class OnRow>
void scan_csv(std::istream& in, const std::vector<std::string>& columns,
              std::vector<RowError>& errors, std::int64_t& data_rows, OnRow&& on_row) {
  std::string line;
  std::vector<std::string_view> fields;
  if (!read_line(in, line)) {
    throw Error(Errc::missing_column, "missing header row", 1);
  }
  split_fields(line, ',', fields);
  std::vector<std::size_t> index;
  for (const auto& c : columns) index.push_back(find_column(fields, c));
  std::size_t need = 0;
  for (auto k : index) need = std::max(need, k + 1);

  std::int64_t row = 1;
  std::vector<std::string_view> picked(columns.size());
  while (read_line(in, line)) {
    ++row;
    if (line.empty()) continue;
    ++data_rows;
    split_fields(line, ',', fields);
    if (fields.size() < need) {
      errors.push_back({Errc::missing_column, row, "row has " + std::to_string(fields.size()) +
                                                       " fields, expected at least " +
                                                       std::to_string(need)});
      continue;
    }
    for (std::size_t k = 0; k < index.size(); ++k) picked[k] = trim(fields[index[k]]);
    if (auto err = on_row(picked, row)) errors.push_back(std::move(*err));
  }
}

}  // namespace

void for_each_trade(std::istream& in, const TradeSchema& schema,
                    const std::function<void(const TickRecord&)>& on_record,
                    std::vector<RowError>& errors, std::int64_t& data_rows) {
  TickRecord rec;
  scan_csv(in, {schema.symbol, schema.ts, schema.price, schema.size}, errors, data_rows,
           [&](const std::vector<std::string_view>& f, std::int64_t row) -> std::optional<RowError> {
             if (f[0].empty()) return RowError{Errc::malformed_row, row, "empty symbol"};
             auto ts = parse_timestamp(f[1]);
             if (!ts)
               return RowError{Errc::unparsable_timestamp, row,
                               "cannot parse timestamp '" + std::string(f[1]) + "'"};
             auto price = parse_double(f[2]);
             if (!price) return RowError{Errc::malformed_row, row, "cannot parse price"};
             if (!(*price > 0.0) || !std::isfinite(*price))
               return RowError{Errc::non_positive_price, row,
                               "price must be positive, got '" + std::string(f[2]) + "'"};
             auto size = parse_int(f[3]);
             if (!size || *size < 1)
               return RowError{Errc::malformed_row, row,
                               "size must be a positive integer, got '" + std::string(f[3]) + "'"};
             rec.symbol.assign(f[0]);
             rec.ts = *ts;
             rec.price = *price;
             rec.size = *size;
             on_record(rec);
             return std::nullopt;
           });
}

void for_each_quote(std::istream& in, const QuoteSchema& schema,
                    const std::function<void(const QuoteRecord&)>& on_record,
                    std::vector<RowError>& errors, std::int64_t& data_rows) {
  QuoteRecord rec;
  scan_csv(in, {schema.symbol, schema.ts, schema.bid, schema.ask}, errors, data_rows,
           [&](const std::vector<std::string_view>& f, std::int64_t row) -> std::optional<RowError> {
             if (f[0].empty()) return RowError{Errc::malformed_row, row, "empty symbol"};
             auto ts = parse_timestamp(f[1]);
             if (!ts)
               return RowError{Errc::unparsable_timestamp, row,
                               "cannot parse timestamp '" + std::string(f[1]) + "'"};
             auto bid = parse_double(f[2]);
             auto ask = parse_double(f[3]);
             if (!bid || !ask) return RowError{Errc::malformed_row, row, "cannot parse bid/ask"};
             if (!(*bid > 0.0) || !(*ask > 0.0) || !std::isfinite(*bid) || !std::isfinite(*ask))
               return RowError{Errc::non_positive_price, row, "bid and ask must be positive"};
             if (*ask < *bid)
               return RowError{Errc::crossed_quote, row, "ask below bid"};
             rec.symbol.assign(f[0]);
             rec.ts = *ts;
             rec.bid = *bid;
             rec.ask = *ask;
             on_record(rec);
             return std::nullopt;
           });
}

ParseResult<TickRecord> parse_trades(std::istream& in, const TradeSchema& schema) {
  ParseResult<TickRecord> out;
  for_each_trade(
      in, schema, [&](const TickRecord& r) { out.records.push_back(r); }, out.errors,
      out.data_rows);
  return out;
}

ParseResult<QuoteRecord> parse_quotes(std::istream& in, const QuoteSchema& schema) {
  ParseResult<QuoteRecord> out;
  for_each_quote(
      in, schema, [&](const QuoteRecord& r) { out.records.push_back(r); }, out.errors,
      out.data_rows);
  return out;
}

MidpointResample resample_midpoints(std::span<const QuoteRecord> quotes, const SessionGrid& grid) {
  MidpointResample out;
  out.midpoint.assign(grid.len(), kMissing);
  std::vector<double> last(grid.len(), kMissing);
  bool any = false;
  for (const auto& q : quotes) {
    if (q.ask < q.bid) {
      ++out.rejected_crossed;
      continue;
    }
    auto cell = grid.cell_of(q.ts);
    if (!cell) continue;
    last[*cell] = q.midpoint();
    any = true;
  }
  if (!any) {
    throw Error(Errc::empty_day, "no valid quote in session on " + format_date(grid.date));
  }
  double carry = kMissing;
  for (int t = 0; t < grid.len(); ++t) {
    if (is_present(last[t])) carry = last[t];
    out.midpoint[t] = carry;
  }
  return out;
}

TradeBuckets bucket_trades(std::span<const TickRecord> trades, const SessionGrid& grid) {
  const int len = grid.len();
  std::vector<std::uint32_t> count(len, 0);
  std::vector<int> cells;
  cells.reserve(trades.size());
  for (const auto& tr : trades) {
    auto cell = grid.cell_of(tr.ts);
    cells.push_back(cell ? *cell : -1);
    if (cell) ++count[*cell];
  }
  TradeBuckets out;
  out.cell_offsets.assign(len + 1, 0);
  for (int t = 0; t < len; ++t) out.cell_offsets[t + 1] = out.cell_offsets[t] + count[t];
  out.prices.resize(out.cell_offsets[len]);
  std::vector<std::uint32_t> cursor(out.cell_offsets.begin(), out.cell_offsets.end() - 1);
  for (std::size_t k = 0; k < trades.size(); ++k) {
    if (cells[k] >= 0) out.prices[cursor[cells[k]]++] = trades[k].price;
  }
  return out;
}

namespace {

struct SymbolDay {
  std::string symbol;
  std::int64_t day;  // days since epoch
  auto operator<=>(const SymbolDay&) const = default;
};

struct TimedPrice {
  Nanos ts;
  double a;
  double b;
};

std::int64_t day_index(Nanos ts) {
  return std::chrono::sys_days{date_of(ts)}.time_since_epoch().count();
}

void keep_errors(IngestReport& report, const std::vector<RowError>& errs, const std::string& file) {
  for (const auto& e : errs) {
    if (report.errors.size() >= kMaxReportedErrors) break;
    report.errors.push_back({e.code, e.row, file + ": " + e.message});
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  return in;
}

}  // namespace

IngestOutput ingest_files(const std::vector<std::string>& trade_files,
                          const std::vector<std::string>& quote_files, const SessionBounds& bounds) {
  IngestOutput out;
  auto& rep = out.report;
  std::map<SymbolDay, std::vector<TimedPrice>> quotes;
  std::map<SymbolDay, std::vector<TimedPrice>> trades;

  for (const auto& path : quote_files) {
    auto in = open_input(path);
    std::vector<RowError> errs;
    std::int64_t rows = 0;
    for_each_quote(
        in, {},
        [&](const QuoteRecord& q) {
          if (!bounds.contains(q.ts)) {
            ++rep.quote_dropped;
            return;
          }
          ++rep.quote_kept;
          quotes[{q.symbol, day_index(q.ts)}].push_back({q.ts, q.bid, q.ask});
        },
        errs, rows);
    rep.quote_rows += rows;
    rep.quote_malformed += static_cast<std::int64_t>(errs.size());
    keep_errors(rep, errs, path);
  }
  for (const auto& path : trade_files) {
    auto in = open_input(path);
    std::vector<RowError> errs;
    std::int64_t rows = 0;
    for_each_trade(
        in, {},
        [&](const TickRecord& t) {
          if (!bounds.contains(t.ts)) {
            ++rep.trade_dropped;
            return;
          }
          ++rep.trade_kept;
          trades[{t.symbol, day_index(t.ts)}].push_back({t.ts, t.price, 0.0});
        },
        errs, rows);
    rep.trade_rows += rows;
    rep.trade_malformed += static_cast<std::int64_t>(errs.size());
    keep_errors(rep, errs, path);
  }

  for (const auto& [key, tr] : trades) {
    if (!quotes.count(key)) {
      auto date = Date{std::chrono::sys_days{std::chrono::days{key.day}}};
      rep.empty_days.push_back(key.symbol + " " + format_date(date));
    }
  }

  auto by_ts = [](const TimedPrice& x, const TimedPrice& y) { return x.ts < y.ts; };
  for (auto& [key, qs] : quotes) {
    auto date = Date{std::chrono::sys_days{std::chrono::days{key.day}}};
    auto grid = SessionGrid::make(date, bounds);
    std::stable_sort(qs.begin(), qs.end(), by_ts);
    std::vector<QuoteRecord> qrec;
    qrec.reserve(qs.size());
    for (const auto& q : qs) qrec.push_back({key.symbol, q.ts, q.a, q.b});

    SecondSeries s;
    s.symbol = key.symbol;
    s.grid = grid;
    try {
      auto resampled = resample_midpoints(qrec, grid);
      rep.quote_kept -= resampled.rejected_crossed;
      rep.quote_malformed += resampled.rejected_crossed;
      s.midpoint = std::move(resampled.midpoint);
    } catch (const Error& e) {
      if (e.code() != Errc::empty_day) throw;
      rep.quote_kept -= static_cast<std::int64_t>(qrec.size());
      rep.quote_malformed += static_cast<std::int64_t>(qrec.size());
      rep.empty_days.push_back(key.symbol + " " + format_date(date));
      continue;
    }

    std::vector<TickRecord> trec;
    if (auto it = trades.find(key); it != trades.end()) {
      std::stable_sort(it->second.begin(), it->second.end(), by_ts);
      trec.reserve(it->second.size());
      for (const auto& t : it->second) trec.push_back({key.symbol, t.ts, t.a, 1});
    }
    auto buckets = bucket_trades(trec, grid);
    s.cell_offsets = std::move(buckets.cell_offsets);
    s.trade_prices = std::move(buckets.prices);
    out.series.push_back(std::move(s));
  }
  std::sort(out.series.begin(), out.series.end(), [](const SecondSeries& a, const SecondSeries& b) {
    return std::tie(a.grid.date, a.symbol) < std::tie(b.grid.date, b.symbol);
  });
  return out;
}

}  // namespace impactlab
