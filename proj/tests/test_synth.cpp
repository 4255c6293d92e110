#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "impactlab/error.hpp"
#include "impactlab/estimators.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/synth.hpp"
#include "impactlab/taq_ingest.hpp"

using namespace impactlab;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_symbols = 2;
  c.n_days = 2;
  c.session = SessionBounds::parse("09:40-10:00");
  c.seed = 99;
  c.metaorder_rate = 0.02;
  c.metaorder_length_exponent = 2.0;
  c.metaorder_length_min = 5;
  c.metaorder_length_max = 500;
  c.participation = 0.6;
  c.impact = {0.001, 10, 0.4};
  c.cross_coupling = {{0, 0.3}, {0.3, 0}};
  c.noise_std = 1e-4;
  return c;
}

}  // namespace

TEST(SynthConfigTest, StrictParsing) {
  auto c = parse_synth_config(nlohmann::json::parse(R"({"n_symbols": 3, "cross_coupling": 0.2})"));
  EXPECT_EQ(c.coupling(0, 1), 0.2);
  EXPECT_EQ(c.coupling(1, 1), 0.0);
  EXPECT_THROW(parse_synth_config(nlohmann::json::parse(R"({"n_symbol": 3})")), Error);
  EXPECT_THROW(parse_synth_config(nlohmann::json::parse(R"({"impact": {"g": 1}})")), Error);
  EXPECT_THROW(parse_synth_config(nlohmann::json::parse(R"({"metaorder_length_exponent": 1.0})")), Error);
  EXPECT_THROW(parse_synth_config(nlohmann::json::parse(R"({"cross_coupling": 1.5})")), Error);
  EXPECT_THROW(parse_synth_config(nlohmann::json::parse(R"({"impact": {"g0": 5, "beta": 0}})")), Error);
  auto back = parse_synth_config(nlohmann::json::parse(to_json(small_config()).dump()));
  EXPECT_EQ(to_json(back), to_json(small_config()));
}

TEST(SynthSigns, ZeroRateGivesZeroSigns) {
  auto c = small_config();
  c.metaorder_rate = 0.0;
  auto t = gen_signs(c);
  for (const auto& d : t.days)
    for (const auto& e : d.eps)
      for (auto s : e) EXPECT_EQ(s, 0);
}

TEST(SynthSigns, SingleMetaorder) {
  SynthRng rng(1, 0, 0, 0);
  std::vector<Metaorder> orders{{10, 5, +1}};
  auto sums = emit_child_orders(30, orders, 1.0, rng);
  for (int t = 0; t < 30; ++t) EXPECT_EQ(sums[t], (t >= 10 && t < 15) ? 1 : 0) << t;
}

TEST(SynthSigns, LengthsStayInSupport) {
  auto c = small_config();
  c.metaorder_rate = 0.5;
  SynthRng rng(3, 0, 0, 0);
  auto orders = draw_metaorders(c, 2000, rng);
  ASSERT_FALSE(orders.empty());
  int up = 0;
  for (const auto& o : orders) {
    EXPECT_GE(o.length, c.metaorder_length_min);
    EXPECT_LE(o.length, c.metaorder_length_max);
    up += o.direction > 0;
  }
  EXPECT_GT(up, 0);
  EXPECT_LT(up, static_cast<int>(orders.size()));
}

TEST(SynthPrices, OneShockFollowsKernel) {
  SynthConfig c;
  c.n_symbols = 1;
  c.session = SessionBounds::parse("09:40-09:50");
  c.impact = {1.0, 1.0, 1.0};
  SynthTruth t;
  t.config = c;
  t.symbols = c.symbol_names();
  t.days.resize(1);
  t.days[0].date = c.start_date;
  const int len = c.session.len();
  t.days[0].eps = {std::vector<Sign>(len, 0)};
  t.days[0].eps[0][0] = 1;
  t.days[0].warmup_eps = {{}};
  t.days[0].mid.resize(1);
  for (int u = 0; u < len; ++u) t.kernel.push_back(c.impact(u));
  gen_prices(t);
  const auto& m = t.days[0].mid[0];
  EXPECT_EQ(m[0], 100.0);
  auto grid = LagGrid::from_lags({1, 2, 10, 100, 500});
  auto sums = response_sums_naive(m, t.days[0].eps[0], grid, SignMode::include_zero);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int tau = grid[k];
    EXPECT_NEAR(m[tau] - 100.0, 1.0 / (1.0 + tau), 1e-12);
    // The only signed second is t = 0, so the lag sum is the shock's own return.
    EXPECT_NEAR(sums.sum_xy[k] * 100.0, c.impact(tau), 1e-12);
  }
}

TEST(SynthPrices, PermanentUnitImpact) {
  ImpactKernel k{1.0, 10.0, 0.0};
  std::vector<double> forcing(50, 0.0);
  forcing[0] = 1;
  std::vector<double> kernel;
  for (int u = 0; u < 50; ++u) kernel.push_back(k(u));
  auto out = convolve_causal(forcing, kernel);
  EXPECT_EQ(out[0], 0.0);
  for (int t = 1; t < 50; ++t) EXPECT_EQ(out[t], 1.0);
}

TEST(SynthPrices, ConvolutionPathsAgree) {
  std::mt19937_64 g(5);
  std::uniform_int_distribution<int> s(-1, 1);
  std::vector<double> forcing(3000), kernel(3000);
  for (auto& f : forcing) f = s(g);
  for (std::size_t u = 0; u < kernel.size(); ++u) kernel[u] = 1e-3 / std::pow(1.0 + u / 10.0, 0.3);
  auto fast = convolve_causal(forcing, kernel);
  for (std::size_t t = 0; t < forcing.size(); t += 97) {
    long double direct = 0;
    for (std::size_t q = 0; q < t; ++q) direct += static_cast<long double>(kernel[t - q]) * forcing[q];
    EXPECT_NEAR(fast[t], static_cast<double>(direct), 1e-12) << t;
  }
}

TEST(SynthPrices, ZeroImpactIsFlat) {
  auto c = small_config();
  c.impact.g0 = 0;
  c.noise_std = 0;
  auto t = generate(c);
  for (const auto& d : t.days)
    for (const auto& m : d.mid)
      for (double x : m) EXPECT_EQ(x, 100.0);
  EXPECT_NEAR(expected_response_oracle(t, 0, 1, 5), 0.0, 1e-18);
}

TEST(SynthDeterminism, ThreadsDoNotMatter) {
  auto c = small_config();
  auto a = generate(c, 1), b = generate(c, 3);
  ASSERT_EQ(a.days.size(), b.days.size());
  for (std::size_t d = 0; d < a.days.size(); ++d) {
    EXPECT_EQ(a.days[d].eps, b.days[d].eps);
    EXPECT_EQ(a.days[d].mid, b.days[d].mid);
  }
  auto root = fs::temp_directory_path() / "impactlab_synth_det";
  fs::remove_all(root);
  write_synth(a, root / "a", 1);
  write_synth(b, root / "b", 2);
  for (const auto& e : fs::directory_iterator(root / "a"))
    EXPECT_EQ(read_text_file(e.path()), read_text_file(root / "b" / e.path().filename())) << e.path();
  fs::remove_all(root);
}

TEST(SynthRoundTrip, IngestRecoversSignsAndMidpoints) {
  auto c = small_config();
  auto truth = generate(c);
  auto root = fs::temp_directory_path() / "impactlab_synth_rt";
  fs::remove_all(root);
  write_synth(truth, root);
  std::vector<std::string> trades, quotes;
  for (const auto& e : fs::directory_iterator(root)) {
    auto name = e.path().filename().string();
    if (name.rfind("trades_", 0) == 0) trades.push_back(e.path().string());
    if (name.rfind("quotes_", 0) == 0) quotes.push_back(e.path().string());
  }
  std::sort(trades.begin(), trades.end());
  std::sort(quotes.begin(), quotes.end());
  auto out = ingest_files(trades, quotes, c.session);
  EXPECT_EQ(out.report.trade_malformed + out.report.quote_malformed, 0);
  ASSERT_EQ(out.series.size(), truth.days.size() * truth.symbols.size());
  for (const auto& s : out.series) {
    std::size_t d = 0;
    while (truth.days[d].date != s.grid.date) ++d;
    std::size_t i = std::find(truth.symbols.begin(), truth.symbols.end(), s.symbol) - truth.symbols.begin();
    EXPECT_EQ(sign_series(s).eps, truth.days[d].eps[i]) << s.symbol;
    for (int t = 0; t < s.len(); ++t) EXPECT_NEAR(s.midpoint[t], truth.days[d].mid[i][t], 1e-9);
  }
  EXPECT_TRUE(fs::exists(root / "truth.json"));
  fs::remove_all(root);
}

TEST(SynthOracle, MatchesNaiveEstimator) {
  auto c = small_config();
  c.session = SessionBounds::parse("09:40-10:00");
  auto truth = generate(c);
  auto grid = LagGrid::from_lags({1, 7, 50});
  for (auto mode : {SignMode::include_zero, SignMode::exclude_zero}) {
    DayAverager avg(grid.size());
    for (std::size_t d = 0; d < truth.days.size(); ++d)
      avg.add(response_pair_day(truth.second_series(d, 0), truth.sign_series(d, 1), grid, mode));
    auto curve = avg.finish({1, 7, 50}, {});
    for (std::size_t k = 0; k < grid.size(); ++k)
      EXPECT_EQ(curve.value[k], expected_response_oracle(truth, 0, 1, grid[k], mode));
  }
  auto big = c;
  big.n_symbols = 4;
  big.cross_coupling.clear();
  EXPECT_THROW(expected_response_oracle(generate(big), 0, 1, 1), Error);
}

TEST(SynthOracle, SelfResponseRisesWithLag) {
  auto c = small_config();
  c.n_days = 10;
  c.noise_std = 0;
  c.cross_coupling.clear();
  c.cross_impact = 0;
  auto truth = generate(c);
  double prev = 0;
  for (int tau : {1, 10, 100}) {
    double r = expected_response_oracle(truth, 0, 0, tau);
    EXPECT_GT(r, prev);
    prev = r;
  }
}
