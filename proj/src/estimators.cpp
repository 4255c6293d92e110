#include "impactlab/estimators.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "impactlab/error.hpp"
#include "impactlab/parallel.hpp"
#include "impactlab/taq_ingest.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

std::string_view to_string(SignMode mode) {
  return mode == SignMode::include_zero ? "include_zero" : "exclude_zero";
}

std::string_view to_string(CurveKind kind) {
  return kind == CurveKind::response ? "response" : "correlator";
}

SignMode parse_sign_mode(std::string_view text) {
  if (text == "include" || text == "include_zero") return SignMode::include_zero;
  if (text == "exclude" || text == "exclude_zero") return SignMode::exclude_zero;
  throw Error(Errc::config_error, "unknown sign mode '" + std::string(text) + "'");
}

CurveKind parse_curve_kind(std::string_view text) {
  if (text == "response") return CurveKind::response;
  if (text == "correlator") return CurveKind::correlator;
  throw Error(Errc::config_error, "unknown curve kind '" + std::string(text) + "'");
}

bool LagSums::any_samples() const {
  return std::any_of(n.begin(), n.end(), [](std::int64_t c) { return c > 0; });
}

double covariance_value(std::int64_t n, double sum_x, double sum_y, double sum_xy) {
  if (n <= 0) return kMissing;
  const double dn = static_cast<double>(n);
  return sum_xy / dn - (sum_x / dn) * (sum_y / dn);
}

int LagCurve::index_of(int tau) const {
  auto it = std::lower_bound(lags.begin(), lags.end(), tau);
  return it != lags.end() && *it == tau ? static_cast<int>(it - lags.begin()) : -1;
}

LagCurve curve_from_sums(const LagSums& sums, const LagGrid& grid, CurveMeta meta) {
  LagCurve c;
  c.lags.assign(grid.lags().begin(), grid.lags().end());
  c.value.resize(grid.size());
  c.dispersion.assign(grid.size(), 0.0);
  c.n_samples = sums.n;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    c.value[k] = covariance_value(sums.n[k], sums.sum_x[k], sums.sum_y[k], sums.sum_xy[k]);
    if (sums.n[k] == 0) c.dispersion[k] = kMissing;
  }
  c.meta = std::move(meta);
  return c;
}

std::vector<double> returns(std::span<const double> mid, int tau) {
  const int len = static_cast<int>(mid.size());
  if (tau < 1 || tau >= len)
    throw Error(Errc::domain_error, "return lag must satisfy 1 <= tau < len");
  std::vector<double> out(len, kMissing);
  for (int t = 0; t + tau < len; ++t) {
    if (is_present(mid[t]) && is_present(mid[t + tau])) out[t] = (mid[t + tau] - mid[t]) / mid[t];
  }
  return out;
}

namespace {

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

constexpr std::size_t kBlock = 256;
constexpr std::size_t kLanes = 8;

// Dot product summed exactly-ish: plain lanes inside short blocks, block
// totals folded into a compensated accumulator.
double dot_blocked(const double* a, const double* b, std::size_t n) {
  CompensatedSum acc;
  for (std::size_t s = 0; s < n; s += kBlock) {
    const std::size_t e = std::min(n, s + kBlock);
    double lane[kLanes] = {};
    std::size_t k = s;
    for (; k + kLanes <= e; k += kLanes) {
      for (std::size_t l = 0; l < kLanes; ++l) lane[l] += a[k + l] * b[k + l];
    }
    double block = 0.0;
    for (; k < e; ++k) block += a[k] * b[k];
    for (std::size_t l = 0; l < kLanes; ++l) block += lane[l];
    acc.add(block);
  }
  return acc.value();
}

double sum_blocked(const double* a, std::size_t n) {
  CompensatedSum acc;
  for (std::size_t s = 0; s < n; s += kBlock) {
    const std::size_t e = std::min(n, s + kBlock);
    double block = 0.0;
    for (std::size_t k = s; k < e; ++k) block += a[k];
    acc.add(block);
  }
  return acc.value();
}

void require_same_day(const SessionGrid& a, const SessionGrid& b) {
  if (!(a == b))
    throw Error(Errc::domain_error, "pair inputs cover different days or sessions (" +
                                        format_date(a.date) + " vs " + format_date(b.date) + ")");
}

void require_response_lags(const LagGrid& grid, int len) {
  grid.check_fits(len);
  if (grid.min_lag() < 1) throw Error(Errc::domain_error, "response lags must be >= 1");
}

std::vector<std::uint8_t> present_mask(std::span<const double> mid) {
  std::vector<std::uint8_t> p(mid.size());
  for (std::size_t t = 0; t < mid.size(); ++t) p[t] = is_present(mid[t]);
  return p;
}

}  // namespace

LagSums response_sums_naive(std::span<const double> mid_i, std::span<const Sign> eps_j,
                            const LagGrid& grid, SignMode mode) {
  const int len = static_cast<int>(mid_i.size());
  if (eps_j.size() != mid_i.size()) throw Error(Errc::domain_error, "series lengths differ");
  require_response_lags(grid, len);
  LagSums out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int tau = grid[k];
    auto r = returns(mid_i, tau);
    long double sx = 0, sy = 0, sxy = 0;
    std::int64_t n = 0;
    for (int t = 0; t + tau < len; ++t) {
      if (!is_present(r[t])) continue;
      if (mode == SignMode::exclude_zero && eps_j[t] == 0) continue;
      ++n;
      sx += r[t];
      sy += eps_j[t];
      sxy += static_cast<long double>(r[t]) * eps_j[t];
    }
    out.n[k] = n;
    out.sum_x[k] = static_cast<double>(sx);
    out.sum_y[k] = static_cast<double>(sy);
    out.sum_xy[k] = static_cast<double>(sxy);
  }
  return out;
}

LagSums response_sums_fast(std::span<const double> mid_i, std::span<const Sign> eps_j,
                           const LagGrid& grid, SignMode mode) {
  const std::size_t len = mid_i.size();
  if (eps_j.size() != len) throw Error(Errc::domain_error, "series lengths differ");
  require_response_lags(grid, static_cast<int>(len));
  const auto present = present_mask(mid_i);
  // y = eps_j, w = weight of instant t in the chosen mode (|eps_j| or 1).
  std::vector<double> y(len), w(len);
  for (std::size_t t = 0; t < len; ++t) {
    y[t] = eps_j[t];
    w[t] = mode == SignMode::exclude_zero ? std::abs(y[t]) : 1.0;
  }
  std::vector<double> x(len), v(len);
  LagSums out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::size_t tau = static_cast<std::size_t>(grid[k]);
    const std::size_t span = len - tau;
    for (std::size_t t = 0; t < span; ++t) {
      const bool ok = present[t] && present[t + tau];
      x[t] = ok ? (mid_i[t + tau] - mid_i[t]) / mid_i[t] : 0.0;
      v[t] = ok ? 1.0 : 0.0;
    }
    out.n[k] = static_cast<std::int64_t>(dot_blocked(v.data(), w.data(), span));
    out.sum_x[k] = dot_blocked(x.data(), w.data(), span);
    out.sum_y[k] = dot_blocked(v.data(), y.data(), span);
    out.sum_xy[k] = dot_blocked(x.data(), y.data(), span);
  }
  return out;
}

LagSums correlator_sums_naive(std::span<const Sign> eps_i, std::span<const Sign> eps_j,
                              const LagGrid& grid, SignMode mode) {
  const int len = static_cast<int>(eps_i.size());
  if (eps_j.size() != eps_i.size()) throw Error(Errc::domain_error, "series lengths differ");
  grid.check_fits(len);
  LagSums out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int tau = grid[k];
    std::int64_t n = 0, sx = 0, sy = 0, sxy = 0;
    for (int t = 0; t + tau < len; ++t) {
      const int later = eps_i[t + tau];
      const int now = eps_j[t];
      if (mode == SignMode::exclude_zero && (later == 0 || now == 0)) continue;
      ++n;
      sx += later;
      sy += now;
      sxy += later * now;
    }
    out.n[k] = n;
    out.sum_x[k] = static_cast<double>(sx);
    out.sum_y[k] = static_cast<double>(sy);
    out.sum_xy[k] = static_cast<double>(sxy);
  }
  return out;
}

LagSums correlator_sums_fast(std::span<const Sign> eps_i, std::span<const Sign> eps_j,
                             const LagGrid& grid, SignMode mode) {
  const std::size_t len = eps_i.size();
  if (eps_j.size() != len) throw Error(Errc::domain_error, "series lengths differ");
  grid.check_fits(static_cast<int>(len));
  std::vector<std::int8_t> abs_i(len), abs_j(len);
  for (std::size_t t = 0; t < len; ++t) {
    abs_i[t] = static_cast<std::int8_t>(eps_i[t] != 0);
    abs_j[t] = static_cast<std::int8_t>(eps_j[t] != 0);
  }
  // Prefix sums give the include-zero marginals in O(1) per lag.
  std::vector<std::int64_t> pre_i(len + 1, 0), pre_j(len + 1, 0);
  for (std::size_t t = 0; t < len; ++t) {
    pre_i[t + 1] = pre_i[t] + eps_i[t];
    pre_j[t + 1] = pre_j[t] + eps_j[t];
  }
  LagSums out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const std::size_t tau = static_cast<std::size_t>(grid[k]);
    const std::size_t span = len - tau;
    const std::int8_t* later = eps_i.data() + tau;
    const std::int8_t* later_abs = abs_i.data() + tau;
    std::int32_t xy = 0, cnt = 0, x_abs = 0, abs_y = 0;
    for (std::size_t t = 0; t < span; ++t) {
      xy += later[t] * eps_j[t];
      cnt += later_abs[t] * abs_j[t];
      x_abs += later[t] * abs_j[t];
      abs_y += later_abs[t] * eps_j[t];
    }
    out.sum_xy[k] = xy;
    if (mode == SignMode::exclude_zero) {
      out.n[k] = cnt;
      out.sum_x[k] = x_abs;
      out.sum_y[k] = abs_y;
    } else {
      out.n[k] = static_cast<std::int64_t>(span);
      out.sum_x[k] = static_cast<double>(pre_i[len] - pre_i[tau]);
      out.sum_y[k] = static_cast<double>(pre_j[span]);
    }
  }
  return out;
}

namespace {

CurveMeta pair_meta(const std::string& i, const std::string& j, SignMode mode, CurveKind kind,
                    const SessionGrid& grid) {
  CurveMeta m;
  m.pair = {i, j};
  m.mode = mode;
  m.kind = kind;
  m.dates = {format_date(grid.date)};
  return m;
}

LagCurve finish_day(const LagSums& sums, const LagGrid& grid, CurveMeta meta) {
  if (!sums.any_samples())
    throw Error(Errc::degenerate_day, "no valid instant at any lag for " + meta.pair.to_string() +
                                          " on " + meta.dates.front() + " (" +
                                          std::string(to_string(meta.mode)) + ")");
  return curve_from_sums(sums, grid, std::move(meta));
}

}  // namespace

LagCurve response_pair_day(const SecondSeries& mid_i, const SignSeries& signs_j,
                           const LagGrid& grid, SignMode mode) {
  require_same_day(mid_i.grid, signs_j.grid);
  return finish_day(response_sums_naive(mid_i.midpoint, signs_j.eps, grid, mode), grid,
                    pair_meta(mid_i.symbol, signs_j.symbol, mode, CurveKind::response, mid_i.grid));
}

LagCurve response_fast(const SecondSeries& mid_i, const SignSeries& signs_j, const LagGrid& grid,
                       SignMode mode) {
  require_same_day(mid_i.grid, signs_j.grid);
  return finish_day(response_sums_fast(mid_i.midpoint, signs_j.eps, grid, mode), grid,
                    pair_meta(mid_i.symbol, signs_j.symbol, mode, CurveKind::response, mid_i.grid));
}

LagCurve correlator_pair_day(const SignSeries& signs_i, const SignSeries& signs_j,
                             const LagGrid& grid, SignMode mode) {
  require_same_day(signs_i.grid, signs_j.grid);
  return finish_day(
      correlator_sums_naive(signs_i.eps, signs_j.eps, grid, mode), grid,
      pair_meta(signs_i.symbol, signs_j.symbol, mode, CurveKind::correlator, signs_i.grid));
}

LagCurve correlator_fast(const SignSeries& signs_i, const SignSeries& signs_j, const LagGrid& grid,
                         SignMode mode) {
  require_same_day(signs_i.grid, signs_j.grid);
  return finish_day(
      correlator_sums_fast(signs_i.eps, signs_j.eps, grid, mode), grid,
      pair_meta(signs_i.symbol, signs_j.symbol, mode, CurveKind::correlator, signs_i.grid));
}

DayAverager::DayAverager(std::size_t lags) : days_(lags, 0), mean_(lags, 0.0), m2_(lags, 0.0) {}

void DayAverager::add(std::span<const double> value, std::span<const std::int64_t> n) {
  if (value.size() != mean_.size() || n.size() != mean_.size())
    throw Error(Errc::domain_error, "day curve has a different lag count");
  for (std::size_t k = 0; k < mean_.size(); ++k) {
    if (n[k] <= 0 || !is_present(value[k])) continue;
    ++days_[k];
    const double delta = value[k] - mean_[k];
    mean_[k] += delta / static_cast<double>(days_[k]);
    m2_[k] += delta * (value[k] - mean_[k]);
  }
}

LagCurve DayAverager::finish(std::vector<int> lags, CurveMeta meta) const {
  LagCurve c;
  c.lags = std::move(lags);
  c.value.resize(mean_.size());
  c.dispersion.resize(mean_.size());
  c.n_samples = days_;
  for (std::size_t k = 0; k < mean_.size(); ++k) {
    if (days_[k] == 0) {
      c.value[k] = c.dispersion[k] = kMissing;
    } else {
      c.value[k] = mean_[k];
      c.dispersion[k] = std::sqrt(std::max(0.0, m2_[k] / static_cast<double>(days_[k])));
    }
  }
  c.meta = std::move(meta);
  return c;
}

LagCurve average_days(std::span<const LagCurve> day_curves) {
  if (day_curves.empty()) throw Error(Errc::empty_input, "no day curves to average");
  const auto& first = day_curves.front();
  DayAverager avg(first.size());
  CurveMeta meta = first.meta;
  meta.dates.clear();
  for (const auto& c : day_curves) {
    if (c.lags != first.lags || c.meta.pair != first.meta.pair || c.meta.mode != first.meta.mode ||
        c.meta.kind != first.meta.kind)
      throw Error(Errc::domain_error, "day curves disagree on pair, mode, kind or lag grid");
    avg.add(c);
    meta.dates.insert(meta.dates.end(), c.meta.dates.begin(), c.meta.dates.end());
  }
  meta.weighting = "equal_day";
  return avg.finish(first.lags, std::move(meta));
}

DayPooler::DayPooler(std::size_t lags) : total_(lags), spread_(lags) {}

void DayPooler::add(const LagSums& s) {
  if (s.size() != total_.size()) throw Error(Errc::domain_error, "day sums have a different lag count");
  std::vector<double> v(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    total_.n[k] += s.n[k];
    total_.sum_x[k] += s.sum_x[k];
    total_.sum_y[k] += s.sum_y[k];
    total_.sum_xy[k] += s.sum_xy[k];
    v[k] = covariance_value(s.n[k], s.sum_x[k], s.sum_y[k], s.sum_xy[k]);
  }
  spread_.add(v, s.n);
}

LagCurve DayPooler::finish(const LagGrid& grid, CurveMeta meta) const {
  meta.weighting = "pooled";
  auto by_day = spread_.finish({grid.lags().begin(), grid.lags().end()}, meta);
  auto pooled = curve_from_sums(total_, grid, std::move(meta));
  pooled.n_samples = by_day.n_samples;
  pooled.dispersion = by_day.dispersion;
  return pooled;
}

LagCurve pool_days(std::span<const LagSums> day_sums, const LagGrid& grid, CurveMeta meta) {
  if (day_sums.empty()) throw Error(Errc::empty_input, "no day sums to pool");
  DayPooler pool(grid.size());
  for (const auto& s : day_sums) pool.add(s);
  return pool.finish(grid, std::move(meta));
}

// --- panel path -------------------------------------------------------------

PanelLagSums::PanelLagSums(std::size_t symbols)
    : n(symbols),
      count(symbols * symbols, 0),
      sum_x(symbols * symbols, 0.0),
      sum_y(symbols * symbols, 0.0),
      sum_xy(symbols * symbols, 0.0) {}

double PanelLagSums::value(std::size_t i, std::size_t j) const {
  const auto idx = i * n + j;
  return covariance_value(count[idx], sum_x[idx], sum_y[idx], sum_xy[idx]);
}

namespace {

constexpr Eigen::Index kPanelRowBlock = 2048;

void check_panel(const DayPanel& panel, bool need_mid) {
  const auto n = panel.size();
  if (panel.present.size() != n || (need_mid && panel.mid.size() != n) || panel.eps.size() != n)
    throw Error(Errc::domain_error, "day panel arrays disagree in size");
  for (std::size_t s = 0; s < n; ++s) {
    if (!panel.present[s]) continue;
    if ((need_mid && static_cast<int>(panel.mid[s].size()) != panel.grid.len()) ||
        static_cast<int>(panel.eps[s].size()) != panel.grid.len())
      throw Error(Errc::domain_error, "panel series for " + panel.symbols[s] + " has wrong length");
  }
}

PanelDaySums empty_result(std::size_t lags, std::size_t n) {
  PanelDaySums out;
  out[0].assign(lags, PanelLagSums(n));
  out[1].assign(lags, PanelLagSums(n));
  return out;
}

}  // namespace

PanelDaySums response_panel_day(const DayPanel& panel, const LagGrid& grid, int threads) {
  check_panel(panel, true);
  const Eigen::Index n = static_cast<Eigen::Index>(panel.size());
  const Eigen::Index len = panel.grid.len();
  require_response_lags(grid, static_cast<int>(len));

  // Right factor: [eps_j | |eps_j|], one column per symbol.
  Eigen::MatrixXd right = Eigen::MatrixXd::Zero(len, 2 * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!panel.present[j]) continue;
    for (Eigen::Index t = 0; t < len; ++t) {
      right(t, j) = panel.eps[j][t];
      right(t, n + j) = panel.eps[j][t] != 0 ? 1.0 : 0.0;
    }
  }

  auto out = empty_result(grid.size(), panel.size());
  parallel_for(grid.size(), threads, [&](std::size_t k) {
    const Eigen::Index tau = grid[k];
    const Eigen::Index span = len - tau;
    // Left factor: [masked returns x_i | validity mask v_i].
    Eigen::MatrixXd left = Eigen::MatrixXd::Zero(span, 2 * n);
    std::vector<double> col_x(n, 0.0);
    std::vector<std::int64_t> col_v(n, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!panel.present[i]) continue;
      const auto& m = panel.mid[i];
      std::int64_t valid = 0;
      for (Eigen::Index t = 0; t < span; ++t) {
        if (is_present(m[t]) && is_present(m[t + tau])) {
          left(t, i) = (m[t + tau] - m[t]) / m[t];
          left(t, n + i) = 1.0;
          ++valid;
        }
      }
      col_x[i] = sum_blocked(left.col(i).data(), static_cast<std::size_t>(span));
      col_v[i] = valid;
    }
    std::vector<CompensatedSum> acc(static_cast<std::size_t>(4 * n * n));
    Eigen::MatrixXd block(2 * n, 2 * n);
    for (Eigen::Index s = 0; s < span; s += kPanelRowBlock) {
      const Eigen::Index rows = std::min(kPanelRowBlock, span - s);
      block.noalias() = left.middleRows(s, rows).transpose() * right.middleRows(s, rows);
      for (Eigen::Index c = 0; c < 2 * n; ++c)
        for (Eigen::Index r = 0; r < 2 * n; ++r) acc[c * 2 * n + r].add(block(r, c));
    }
    auto P = [&](Eigen::Index r, Eigen::Index c) { return acc[c * 2 * n + r].value(); };

    auto& inc = out[0][k];
    auto& exc = out[1][k];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!panel.present[i]) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!panel.present[j]) continue;
        const auto idx = static_cast<std::size_t>(i * n + j);
        const double xy = P(i, j);
        const double vy = P(n + i, j);
        inc.count[idx] = col_v[i];
        inc.sum_x[idx] = col_x[i];
        inc.sum_y[idx] = vy;
        inc.sum_xy[idx] = xy;
        exc.count[idx] = static_cast<std::int64_t>(std::llround(P(n + i, n + j)));
        exc.sum_x[idx] = P(i, n + j);
        exc.sum_y[idx] = vy;
        exc.sum_xy[idx] = xy;
      }
    }
  });
  return out;
}

PanelDaySums correlator_panel_day(const DayPanel& panel, const LagGrid& grid, int threads) {
  check_panel(panel, false);
  const Eigen::Index n = static_cast<Eigen::Index>(panel.size());
  const Eigen::Index len = panel.grid.len();
  grid.check_fits(static_cast<int>(len));

  // [eps | |eps|] in single precision: every product is 0 or +-1 and every
  // partial sum is an integer below 2^24, so float GEMM is exact here.
  Eigen::MatrixXf signs = Eigen::MatrixXf::Zero(len, 2 * n);
  std::vector<std::vector<std::int64_t>> prefix(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    prefix[s].assign(len + 1, 0);
    if (!panel.present[s]) continue;
    for (Eigen::Index t = 0; t < len; ++t) {
      signs(t, s) = panel.eps[s][t];
      signs(t, n + s) = panel.eps[s][t] != 0 ? 1.0f : 0.0f;
      prefix[s][t + 1] = prefix[s][t] + panel.eps[s][t];
    }
  }

  auto out = empty_result(grid.size(), panel.size());
  parallel_for(grid.size(), threads, [&](std::size_t k) {
    const Eigen::Index tau = grid[k];
    const Eigen::Index span = len - tau;
    Eigen::MatrixXf q = signs.middleRows(tau, span).transpose() * signs.topRows(span);
    auto Q = [&](Eigen::Index r, Eigen::Index c) { return static_cast<double>(q(r, c)); };
    auto& inc = out[0][k];
    auto& exc = out[1][k];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!panel.present[i]) continue;
      const double later_sum = static_cast<double>(prefix[i][len] - prefix[i][tau]);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!panel.present[j]) continue;
        const auto idx = static_cast<std::size_t>(i * n + j);
        inc.count[idx] = span;
        inc.sum_x[idx] = later_sum;
        inc.sum_y[idx] = static_cast<double>(prefix[j][span]);
        inc.sum_xy[idx] = Q(i, j);
        exc.count[idx] = static_cast<std::int64_t>(Q(n + i, n + j));
        exc.sum_x[idx] = Q(i, n + j);
        exc.sum_y[idx] = Q(n + i, j);
        exc.sum_xy[idx] = Q(i, j);
      }
    }
  });
  return out;
}

}  // namespace impactlab
