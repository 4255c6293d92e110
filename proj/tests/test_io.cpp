#include <gtest/gtest.h>

#include <filesystem>

#include "impactlab/curve_io.hpp"
#include "impactlab/error.hpp"
#include "impactlab/lag_grid.hpp"
#include "impactlab/text.hpp"

using namespace impactlab;

TEST(LagGridTest, DefaultGrid) {
  auto g = LagGrid::default_grid();
  EXPECT_EQ(g.size(), 60u);
  EXPECT_EQ(g.min_lag(), 1);
  EXPECT_EQ(g.max_lag(), 10000);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_LT(g[k - 1], g[k]);
  EXPECT_EQ(LagGrid::parse("default"), g);
  EXPECT_EQ(LagGrid::parse(g.canonical()), g);
  EXPECT_EQ(g.hash(), LagGrid::parse("default").hash());
}

TEST(LagGridTest, ParseForms) {
  EXPECT_EQ(LagGrid::parse("list:1,3,5").lags().size(), 3u);
  EXPECT_THROW(LagGrid::parse("list:5,1,3"), Error);
  EXPECT_EQ(LagGrid::parse("1,2,3").max_lag(), 3);
  EXPECT_EQ(LagGrid::parse("log:1:100:10").max_lag(), 100);
  EXPECT_THROW(LagGrid::parse("log:1:100"), Error);
  EXPECT_THROW(LagGrid::parse("1,x"), Error);
  EXPECT_THROW(LagGrid::parse("-1,2"), Error);
  EXPECT_EQ(LagGrid::parse("1,30").index_of(30), 1);
  EXPECT_EQ(LagGrid::parse("1,30").index_of(31), -1);
}

TEST(LagGridTest, MustFitSession) {
  EXPECT_NO_THROW(LagGrid::default_grid().check_fits(22200));
  EXPECT_THROW(LagGrid::default_grid().check_fits(10000), Error);
}

TEST(CurveIo, RoundTripWithSidecar) {
  LagCurve c;
  c.lags = {1, 2, 5};
  c.value = {0.1, -3.25e-7, kMissing};
  c.dispersion = {0.01, 0.0, kMissing};
  c.n_samples = {3, 3, 0};
  c.meta.pair = {"AAA", "BBB"};
  c.meta.mode = SignMode::exclude_zero;
  c.meta.kind = CurveKind::correlator;
  c.meta.dates = {"2008-01-02", "2008-01-03"};
  c.meta.weighting = "pooled";
  auto stem = std::filesystem::temp_directory_path() / "impactlab_curve_io" / "AAA__BBB";
  std::filesystem::remove_all(stem.parent_path());
  std::filesystem::create_directories(stem.parent_path());
  write_curve(stem, c, "abc");
  auto back = read_curve(with_suffix(stem, ".csv"));
  EXPECT_EQ(back.lags, c.lags);
  EXPECT_EQ(back.value[0], c.value[0]);
  EXPECT_EQ(back.value[1], c.value[1]);
  EXPECT_FALSE(is_present(back.value[2]));
  EXPECT_EQ(back.n_samples, c.n_samples);
  EXPECT_EQ(back.meta.pair, c.meta.pair);
  EXPECT_EQ(back.meta.mode, SignMode::exclude_zero);
  EXPECT_EQ(back.meta.kind, CurveKind::correlator);
  EXPECT_EQ(back.meta.dates, c.meta.dates);
  EXPECT_EQ(back.meta.weighting, "pooled");
  EXPECT_EQ(curve_csv(back), curve_csv(c));
  std::filesystem::remove_all(stem.parent_path());
}

TEST(CurveIo, RejectsForeignFiles) {
  EXPECT_THROW(parse_curve_csv("tau,value\n1,2\n"), Error);
  EXPECT_THROW(parse_curve_csv(""), Error);
}

TEST(Text, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 6.02214076e23}) {
    auto s = format_double(x);
    EXPECT_EQ(parse_double(s).value(), x) << s;
  }
}
