#pragma once

// Response functions R_ij(tau) and trade-sign correlators Theta_ij(tau).
//
// Every estimator reduces a day to four raw moments per lag over the valid
// instants t: the count n, sum_x, sum_y and sum_xy, where
//   response:   x = r_i(t, tau),       y = eps_j(t)
//   correlator: x = eps_i(t + tau),    y = eps_j(t)
// and the value is sum_xy/n - (sum_x/n)(sum_y/n).
//
// Three implementations share that contract:
//   *_naive  literal double loop with extended-precision accumulation
//   *_fast   masked correlations in blocked, compensated form (one pair)
//   *_panel  the same masked correlations as matrix products over a whole
//            universe-day (all ordered pairs at once)

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/lag_grid.hpp"
#include "impactlab/session.hpp"
#include "impactlab/signing.hpp"

namespace impactlab {

struct SecondSeries;

enum class SignMode { include_zero, exclude_zero };
enum class CurveKind { response, correlator };

std::string_view to_string(SignMode mode);
std::string_view to_string(CurveKind kind);
/// Accepts `include`, `include_zero`, `exclude`, `exclude_zero`.
SignMode parse_sign_mode(std::string_view text);
CurveKind parse_curve_kind(std::string_view text);

/// i is the impacted (return / later sign) symbol, j the impacting one.
struct PairKey {
  std::string i;
  std::string j;

  bool is_self() const { return i == j; }
  std::string to_string() const { return i + "__" + j; }
  auto operator<=>(const PairKey&) const = default;
};

struct LagSums {
  std::vector<std::int64_t> n;
  std::vector<double> sum_x;
  std::vector<double> sum_y;
  std::vector<double> sum_xy;

  explicit LagSums(std::size_t lags = 0) : n(lags, 0), sum_x(lags, 0), sum_y(lags, 0), sum_xy(lags, 0) {}
  std::size_t size() const { return n.size(); }
  bool any_samples() const;
};

/// sum_xy/n - (sum_x/n)(sum_y/n), NaN when n == 0.
double covariance_value(std::int64_t n, double sum_x, double sum_y, double sum_xy);

struct CurveMeta {
  PairKey pair;
  SignMode mode = SignMode::include_zero;
  CurveKind kind = CurveKind::response;
  std::string aggregate;  // empty for pair curves, e.g. "market_cross" otherwise
  std::vector<std::string> dates;
  std::string weighting = "equal_day";
};

/// value[k] is NaN (undefined) wherever n_samples[k] == 0. For per-day
/// curves n_samples counts instants; after averaging it counts days (or,
/// for aggregates, contributing units) and dispersion is their std.
struct LagCurve {
  std::vector<int> lags;
  std::vector<double> value;
  std::vector<double> dispersion;
  std::vector<std::int64_t> n_samples;
  CurveMeta meta;

  std::size_t size() const { return lags.size(); }
  bool defined(std::size_t k) const { return n_samples[k] > 0; }
  int index_of(int tau) const;
};

LagCurve curve_from_sums(const LagSums& sums, const LagGrid& grid, CurveMeta meta);

/// out[t] = (m(t+tau) - m(t)) / m(t); NaN when either endpoint is missing
/// or t + tau falls past the session close.
std::vector<double> returns(std::span<const double> mid, int tau);

LagSums response_sums_naive(std::span<const double> mid_i, std::span<const Sign> eps_j,
                            const LagGrid& grid, SignMode mode);
LagSums response_sums_fast(std::span<const double> mid_i, std::span<const Sign> eps_j,
                           const LagGrid& grid, SignMode mode);
LagSums correlator_sums_naive(std::span<const Sign> eps_i, std::span<const Sign> eps_j,
                              const LagGrid& grid, SignMode mode);
LagSums correlator_sums_fast(std::span<const Sign> eps_i, std::span<const Sign> eps_j,
                             const LagGrid& grid, SignMode mode);

/// Per-day pair curves. Inputs must share date and session; throws
/// Error(degenerate_day) when no lag has a valid instant.
LagCurve response_pair_day(const SecondSeries& mid_i, const SignSeries& signs_j,
                           const LagGrid& grid, SignMode mode);
LagCurve response_fast(const SecondSeries& mid_i, const SignSeries& signs_j, const LagGrid& grid,
                       SignMode mode);
LagCurve correlator_pair_day(const SignSeries& signs_i, const SignSeries& signs_j,
                             const LagGrid& grid, SignMode mode);
LagCurve correlator_fast(const SignSeries& signs_i, const SignSeries& signs_j, const LagGrid& grid,
                         SignMode mode);

/// Streaming equal-weight day average (Welford, fixed add order).
class DayAverager {
 public:
  explicit DayAverager(std::size_t lags);
  /// Adds one day; lags with n[k] == 0 are skipped for that day only.
  void add(std::span<const double> value, std::span<const std::int64_t> n);
  void add(const LagCurve& day) { add(day.value, day.n_samples); }
  LagCurve finish(std::vector<int> lags, CurveMeta meta) const;

 private:
  std::vector<std::int64_t> days_;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Per-lag mean over days with samples; n_samples = contributing days,
/// dispersion = population std across them. Throws Error(empty_input).
LagCurve average_days(std::span<const LagCurve> day_curves);

/// Pooled alternative: moments summed over days before forming the value.
/// n_samples and dispersion still describe the contributing days.
class DayPooler {
 public:
  explicit DayPooler(std::size_t lags);
  void add(const LagSums& day);
  LagCurve finish(const LagGrid& grid, CurveMeta meta) const;

 private:
  LagSums total_;
  DayAverager spread_;
};

LagCurve pool_days(std::span<const LagSums> day_sums, const LagGrid& grid, CurveMeta meta);

// --- universe-day panel path ----------------------------------------------

/// One trading day across a universe; absent symbols have empty vectors.
struct DayPanel {
  SessionGrid grid;
  std::vector<std::string> symbols;
  std::vector<std::uint8_t> present;
  std::vector<std::vector<double>> mid;
  std::vector<std::vector<Sign>> eps;

  std::size_t size() const { return symbols.size(); }
};

/// Moments of every ordered pair at one lag, flattened as i * n + j.
/// Pairs involving a symbol absent that day have count 0.
struct PanelLagSums {
  std::size_t n = 0;
  std::vector<std::int64_t> count;
  std::vector<double> sum_x;
  std::vector<double> sum_y;
  std::vector<double> sum_xy;

  explicit PanelLagSums(std::size_t symbols = 0);
  double value(std::size_t i, std::size_t j) const;
};

/// Panel sums for both modes, indexed [mode][lag]; mode 0 is include_zero.
using PanelDaySums = std::array<std::vector<PanelLagSums>, 2>;

PanelDaySums response_panel_day(const DayPanel& panel, const LagGrid& grid, int threads = 1);
PanelDaySums correlator_panel_day(const DayPanel& panel, const LagGrid& grid, int threads = 1);

constexpr std::size_t mode_index(SignMode mode) { return mode == SignMode::include_zero ? 0 : 1; }

}  // namespace impactlab
