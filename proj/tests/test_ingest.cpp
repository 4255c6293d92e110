#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "impactlab/series_io.hpp"
#include "impactlab/session.hpp"
#include "impactlab/taq_ingest.hpp"
#include "impactlab/text.hpp"

using namespace impactlab;

namespace {

Nanos at(const std::string& text) {
  auto ts = parse_timestamp(text);
  EXPECT_TRUE(ts.has_value()) << text;
  return ts.value_or(0);
}

SessionGrid day_grid(int len) {
  auto g = SessionGrid::make(*parse_date("2008-01-02"));
  g.bounds.close_s = g.bounds.open_s + len;
  return g;
}

Nanos cell_ts(const SessionGrid& g, int t, int ms = 0) {
  return midnight_of(g.date) + (static_cast<Nanos>(g.open_s()) + t) * kNanosPerSecond + ms * 1'000'000LL;
}

}  // namespace

TEST(Session, TimestampForms) {
  auto iso = at("2008-01-02T09:40:00.000000001");
  auto epoch = parse_timestamp(std::to_string(iso));
  ASSERT_TRUE(epoch);
  EXPECT_EQ(*epoch, iso);
  EXPECT_EQ(format_timestamp(iso), "2008-01-02T09:40:00.000000001");
  EXPECT_FALSE(parse_timestamp("2008-13-02T09:40:00"));
  EXPECT_FALSE(parse_timestamp("yesterday"));
}

TEST(Session, BoundariesAreHalfOpen) {
  SessionBounds b;
  EXPECT_EQ(b.len(), 22200);
  EXPECT_FALSE(b.contains(at("2008-01-02T09:39:59.9")));
  EXPECT_TRUE(b.contains(at("2008-01-02T09:40:00.0")));
  EXPECT_TRUE(b.contains(at("2008-01-02T15:49:59.999999999")));
  EXPECT_FALSE(b.contains(at("2008-01-02T15:50:00.0")));
  EXPECT_EQ(SessionBounds::parse("09:40-15:50"), b);
  EXPECT_THROW(SessionBounds::parse("15:50-09:40"), Error);
  EXPECT_THROW(SessionBounds::parse("0940"), Error);
}

TEST(Session, CellOfFloorsSeconds) {
  auto g = SessionGrid::make(*parse_date("2008-01-02"));
  EXPECT_EQ(g.cell_of(at("2008-01-02T09:40:00.999")), 0);
  EXPECT_EQ(g.cell_of(at("2008-01-02T09:40:01")), 1);
  EXPECT_FALSE(g.cell_of(at("2008-01-03T09:40:01")));
  EXPECT_FALSE(g.cell_of(at("2008-01-02T15:50:00")));
}

TEST(Parse, TradesWithRowErrors) {
  std::istringstream in(
      "size,price,ts,symbol\n"
      "100,10.5,2008-01-02T09:40:00,AAA\n"
      "100,-1,2008-01-02T09:40:01,AAA\n"
      "100,10.5,not-a-time,AAA\n"
      "100,10.5\n"
      "200,10.6,2008-01-02T09:40:02,AAA\n");
  auto r = parse_trades(in);
  EXPECT_EQ(r.data_rows, 5);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[1].price, 10.6);
  ASSERT_EQ(r.errors.size(), 3u);
  EXPECT_EQ(r.errors[0].code, Errc::non_positive_price);
  EXPECT_EQ(r.errors[0].row, 3);
  EXPECT_EQ(r.errors[1].code, Errc::unparsable_timestamp);
  EXPECT_EQ(r.errors[2].code, Errc::missing_column);
}

TEST(Parse, MissingColumnIsFatal) {
  std::istringstream in("symbol,ts,price\nAAA,2008-01-02T09:40:00,1\n");
  EXPECT_THROW(parse_trades(in), Error);
}

TEST(Parse, QuotesRejectCrossedAcceptLocked) {
  std::istringstream in(
      "symbol,ts,bid,ask,bid_size,ask_size\n"
      "AAA,2008-01-02T09:40:00,11,10,1,1\n"
      "AAA,2008-01-02T09:40:01,10,10,1,1\n");
  auto r = parse_quotes(in);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].midpoint(), 10.0);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].code, Errc::crossed_quote);
}

TEST(Filter, CountsBalance) {
  std::vector<TickRecord> recs{{"A", at("2008-01-02T09:39:59.9"), 1, 1},
                               {"A", at("2008-01-02T09:40:00"), 1, 1},
                               {"A", at("2008-01-02T15:50:00"), 1, 1},
                               {"B", at("2008-01-02T12:00:00"), 1, 1}};
  auto f = session_filter(recs, SessionBounds{});
  EXPECT_EQ(f.records.size(), 2u);
  EXPECT_EQ(f.dropped, 2);
  EXPECT_EQ(f.records.size() + static_cast<std::size_t>(f.dropped), recs.size());
}

TEST(Resample, ForwardFillAndLeadingMissing) {
  auto g = day_grid(10);
  std::vector<QuoteRecord> q{{"A", cell_ts(g, 5), 10, 11}};
  auto r = resample_midpoints(q, g);
  for (int t = 0; t < 5; ++t) EXPECT_FALSE(is_present(r.midpoint[t]));
  for (int t = 5; t < 10; ++t) EXPECT_EQ(r.midpoint[t], 10.5);
}

TEST(Resample, LastQuoteInSecondWins) {
  auto g = day_grid(3);
  std::vector<QuoteRecord> q{{"A", cell_ts(g, 1, 100), 10, 11}, {"A", cell_ts(g, 1, 900), 10.1, 11.1}};
  auto r = resample_midpoints(q, g);
  EXPECT_DOUBLE_EQ(r.midpoint[1], 10.6);
  EXPECT_DOUBLE_EQ(r.midpoint[2], 10.6);
}

TEST(Resample, CrossedQuoteKeepsPrevious) {
  auto g = day_grid(3);
  std::vector<QuoteRecord> q{{"A", cell_ts(g, 0), 10, 11}, {"A", cell_ts(g, 1), 11, 10}};
  auto r = resample_midpoints(q, g);
  EXPECT_EQ(r.midpoint[1], 10.5);
  EXPECT_EQ(r.rejected_crossed, 1);
}

TEST(Resample, EmptyDayThrows) {
  auto g = day_grid(3);
  try {
    resample_midpoints({}, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_day);
  }
}

TEST(Resample, IdempotentOnAlignedStream) {
  auto g = day_grid(6);
  std::vector<QuoteRecord> q;
  for (int t = 0; t < 6; ++t) q.push_back({"A", cell_ts(g, t), 10.0 + t, 11.0 + t});
  auto r = resample_midpoints(q, g);
  std::vector<QuoteRecord> again;
  for (int t = 0; t < 6; ++t) again.push_back({"A", cell_ts(g, t), r.midpoint[t] - 0.5, r.midpoint[t] + 0.5});
  EXPECT_EQ(resample_midpoints(again, g).midpoint, r.midpoint);
}

TEST(Bucket, PreservesOrderAndCells) {
  auto g = day_grid(10);
  std::vector<TickRecord> tr{{"A", cell_ts(g, 6, 999), 9, 1},
                             {"A", cell_ts(g, 7, 1), 3, 1},
                             {"A", cell_ts(g, 7, 2), 1, 1},
                             {"A", cell_ts(g, 7, 3), 2, 1}};
  auto b = bucket_trades(tr, g);
  ASSERT_EQ(b.cell_offsets.size(), 11u);
  EXPECT_EQ(b.cell_offsets[7] - b.cell_offsets[6], 1u);
  EXPECT_EQ(b.cell_offsets[8] - b.cell_offsets[7], 3u);
  std::vector<double> cell7(b.prices.begin() + b.cell_offsets[7], b.prices.begin() + b.cell_offsets[8]);
  EXPECT_EQ(cell7, (std::vector<double>{3, 1, 2}));
  auto none = bucket_trades({}, g);
  EXPECT_EQ(none.cell_offsets.back(), 0u);
}

TEST(IngestFiles, ReportAndEmptyDay) {
  auto dir = std::filesystem::temp_directory_path() / "impactlab_ingest_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream t(dir / "trades.csv");
    t << "symbol,ts,price,size\n"
      << "AAA,2008-01-02T09:40:01,10.0,1\n"
      << "AAA,2008-01-02T09:40:02,10.1,1\n"
      << "AAA,2008-01-02T08:00:00,10.1,1\n"
      << "BBB,2008-01-02T09:40:02,5.0,1\n"
      << "BBB,2008-01-02T09:40:03,0,1\n";
    std::ofstream q(dir / "quotes.csv");
    q << "symbol,ts,bid,ask\n"
      << "AAA,2008-01-02T09:40:00,9.9,10.1\n"
      << "AAA,2008-01-02T09:40:05,10.1,10.0\n";
  }
  auto out = ingest_files({(dir / "trades.csv").string()}, {(dir / "quotes.csv").string()}, SessionBounds{});
  const auto& r = out.report;
  EXPECT_EQ(r.trade_rows, r.trade_kept + r.trade_dropped + r.trade_malformed);
  EXPECT_EQ(r.quote_rows, r.quote_kept + r.quote_dropped + r.quote_malformed);
  EXPECT_EQ(r.trade_dropped, 1);
  EXPECT_EQ(r.trade_malformed, 1);
  EXPECT_EQ(r.quote_malformed, 1);
  ASSERT_EQ(out.series.size(), 1u);
  EXPECT_EQ(out.series[0].symbol, "AAA");
  EXPECT_EQ(out.series[0].n_trades(1), 1u);
  ASSERT_EQ(r.empty_days.size(), 1u);
  EXPECT_EQ(r.empty_days[0], "BBB 2008-01-02");

  std::ostringstream os;
  write_series(os, out.series[0]);
  std::istringstream is(os.str());
  auto back = read_series(is);
  EXPECT_EQ(back.symbol, "AAA");
  EXPECT_EQ(back.grid, out.series[0].grid);
  EXPECT_EQ(back.cell_offsets, out.series[0].cell_offsets);
  EXPECT_EQ(back.trade_prices, out.series[0].trade_prices);
  ASSERT_EQ(back.midpoint.size(), out.series[0].midpoint.size());
  for (std::size_t t = 0; t < back.midpoint.size(); ++t) {
    if (is_present(out.series[0].midpoint[t])) EXPECT_EQ(back.midpoint[t], out.series[0].midpoint[t]);
    else EXPECT_FALSE(is_present(back.midpoint[t]));
  }
  std::filesystem::remove_all(dir);
}
