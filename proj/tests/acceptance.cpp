// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance [--only N[,M...]] [--work DIR] [--threads T]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "impactlab/aggregation.hpp"
#include "impactlab/error.hpp"
#include "impactlab/estimators.hpp"
#include "impactlab/fitting.hpp"
#include "impactlab/parallel.hpp"
#include "impactlab/pipeline.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/signing.hpp"
#include "impactlab/synth.hpp"
#include "impactlab/text.hpp"

using namespace impactlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

int g_threads = 1;
fs::path g_work;

// ---------------------------------------------------------------------------
// 1. fast and panel estimator paths against a plain double loop

struct Instance {
  SessionGrid grid;
  std::vector<std::vector<std::vector<double>>> mid;  // [day][symbol][t]
  std::vector<std::vector<std::vector<Sign>>> eps;
  LagGrid lags;
};

Instance random_instance(std::mt19937_64& g, int which) {
  std::uniform_int_distribution<int> nsym(1, 3), ndays(1, 5), len_d(50, 1000);
  Instance in;
  const int n = nsym(g), days = ndays(g), len = len_d(g);
  in.grid = SessionGrid::make(*parse_date("2008-01-02"));
  in.grid.bounds.close_s = in.grid.bounds.open_s + len;

  if (which % 2 == 0) {
    SynthConfig c;
    c.n_symbols = n;
    c.n_days = days;
    c.session = in.grid.bounds;
    c.seed = g();
    c.metaorder_rate = std::uniform_real_distribution<double>(0.005, 0.2)(g);
    c.metaorder_length_exponent = std::uniform_real_distribution<double>(1.5, 4.0)(g);
    c.metaorder_length_min = 1;
    c.metaorder_length_max = 400;
    c.participation = std::uniform_real_distribution<double>(0.2, 1.0)(g);
    c.impact = {1e-3, 5.0, std::uniform_real_distribution<double>(0.0, 1.0)(g)};
    c.cross_coupling.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) c.cross_coupling[i][j] = std::uniform_real_distribution<double>(0, 0.5)(g);
    c.noise_std = 1e-3;
    auto t = generate(c, 1);
    for (auto& d : t.days) {
      in.mid.push_back(d.mid);
      in.eps.push_back(d.eps);
    }
  } else {
    std::normal_distribution<double> step(0.0, 0.01);
    std::uniform_real_distribution<double> u(0, 1);
    for (int d = 0; d < days; ++d) {
      std::vector<std::vector<double>> m(n);
      std::vector<std::vector<Sign>> e(n);
      for (int s = 0; s < n; ++s) {
        const int lead = static_cast<int>(u(g) * 20);
        double p = 20 + 80 * u(g);
        for (int t = 0; t < len; ++t) {
          p *= std::exp(step(g));
          m[s].push_back(t < lead ? kMissing : p);
          const double r = u(g);
          e[s].push_back(static_cast<Sign>(r < 0.4 ? 0 : (r < 0.7 ? 1 : -1)));
        }
      }
      in.mid.push_back(std::move(m));
      in.eps.push_back(std::move(e));
    }
  }
  std::set<int> lag_set{1, len - 1};
  std::uniform_int_distribution<int> lag_d(1, len - 1);
  const int extra = std::uniform_int_distribution<int>(0, 8)(g);
  for (int k = 0; k < extra; ++k) lag_set.insert(lag_d(g));
  in.lags = LagGrid::from_lags({lag_set.begin(), lag_set.end()});
  return in;
}

struct OracleValue {
  long double value = 0;
  long double scale = 0;  // |<xy>| + |<x><y>|, averaged over days
  int days = 0;
};

// Per-day two-term covariance by direct summation, then a plain day mean.
OracleValue loop_oracle(const Instance& in, std::size_t i, std::size_t j, int tau, SignMode mode,
                        bool response) {
  OracleValue out;
  for (std::size_t d = 0; d < in.mid.size(); ++d) {
    long double n = 0, sx = 0, sy = 0, sxy = 0;
    const int len = in.grid.len();
    for (int t = 0; t + tau < len; ++t) {
      const Sign ej = in.eps[d][j][t];
      double x;
      if (response) {
        const double a = in.mid[d][i][t], b = in.mid[d][i][t + tau];
        if (std::isnan(a) || std::isnan(b)) continue;
        x = (b - a) / a;
      } else {
        x = in.eps[d][i][t + tau];
      }
      if (mode == SignMode::exclude_zero) {
        if (ej == 0) continue;
        if (!response && x == 0) continue;
      }
      n += 1;
      sx += x;
      sy += ej;
      sxy += static_cast<long double>(x) * ej;
    }
    if (n == 0) continue;
    const long double exy = sxy / n, ex = sx / n, ey = sy / n;
    out.value += exy - ex * ey;
    out.scale += std::fabs(exy) + std::fabs(ex * ey);
    ++out.days;
  }
  if (out.days) {
    out.value /= out.days;
    out.scale /= out.days;
  }
  return out;
}

Outcome criterion_oracle() {
  std::mt19937_64 g(20240601);
  double worst = 0;
  long comparisons = 0;
  std::string where;
  for (int which = 0; which < 20; ++which) {
    auto in = random_instance(g, which);
    const std::size_t n = in.mid[0].size();
    const auto L = in.lags.size();
    for (bool response : {true, false}) {
      std::vector<PanelDaySums> panels;
      for (std::size_t d = 0; d < in.mid.size(); ++d) {
        DayPanel p;
        p.grid = in.grid;
        p.present.assign(n, 1);
        for (std::size_t s = 0; s < n; ++s) p.symbols.push_back("S" + std::to_string(s));
        p.mid = in.mid[d];
        p.eps = in.eps[d];
        panels.push_back(response ? response_panel_day(p, in.lags, 2) : correlator_panel_day(p, in.lags, 2));
      }
      for (auto mode : {SignMode::include_zero, SignMode::exclude_zero}) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            DayAverager fast(L), panel(L);
            for (std::size_t d = 0; d < in.mid.size(); ++d) {
              auto sums = response ? response_sums_fast(in.mid[d][i], in.eps[d][j], in.lags, mode)
                                   : correlator_sums_fast(in.eps[d][i], in.eps[d][j], in.lags, mode);
              std::vector<double> fv(L, kMissing), pv(L, kMissing);
              std::vector<std::int64_t> pn(L);
              for (std::size_t k = 0; k < L; ++k) {
                if (sums.n[k] > 0) fv[k] = covariance_value(sums.n[k], sums.sum_x[k], sums.sum_y[k], sums.sum_xy[k]);
                const auto& ps = panels[d][mode_index(mode)][k];
                pn[k] = ps.count[i * n + j];
                if (pn[k] > 0) pv[k] = ps.value(i, j);
              }
              fast.add(fv, sums.n);
              panel.add(pv, pn);
            }
            auto fc = fast.finish({in.lags.lags().begin(), in.lags.lags().end()}, {});
            auto pc = panel.finish({in.lags.lags().begin(), in.lags.lags().end()}, {});
            for (std::size_t k = 0; k < L; ++k) {
              auto o = loop_oracle(in, i, j, in.lags[k], mode, response);
              if (o.days != fc.n_samples[k] || o.days != pc.n_samples[k]) {
                return {false, "day counts differ at instance " + std::to_string(which)};
              }
              if (!o.days) continue;
              for (double got : {fc.value[k], pc.value[k]}) {
                const long double ref = o.value;
                const long double denom =
                    std::max({std::fabs(ref), static_cast<long double>(std::fabs(got)), o.scale, 1e-300L});
                const double rel = static_cast<double>(std::fabs(got - ref) / denom);
                ++comparisons;
                if (rel > worst) {
                  worst = rel;
                  where = "instance " + std::to_string(which) + (response ? " response" : " correlator") +
                          " tau " + std::to_string(in.lags[k]);
                }
              }
            }
          }
        }
      }
    }
  }
  Outcome out;
  out.pass = worst <= 1e-12;
  out.detail = std::to_string(comparisons) + " comparisons over 20 instances, worst relative " + fmt("%.2e", worst) +
               (where.empty() ? "" : " (" + where + ")");
  return out;
}

// ---------------------------------------------------------------------------
// 2. sign rules against their two-branch definitions

Sign direct_sgn(long x) { return static_cast<Sign>(x > 0 ? 1 : (x < 0 ? -1 : 0)); }

std::vector<Sign> direct_tick(const std::vector<double>& s) {
  std::vector<Sign> e;
  for (std::size_t n = 0; n < s.size(); ++n) {
    if (n == 0) e.push_back(0);
    else if (s[n] != s[n - 1]) e.push_back(s[n] > s[n - 1] ? 1 : -1);
    else e.push_back(e[n - 1]);
  }
  return e;
}

Outcome criterion_signs() {
  const double alphabet[3] = {9.99, 10.0, 10.01};
  long checked = 0, bad = 0;
  auto grid = SessionGrid::make(*parse_date("2008-01-02"));
  grid.bounds.close_s = grid.bounds.open_s + 2;
  for (int len = 0; len <= 4; ++len) {
    int total = 1;
    for (int k = 0; k < len; ++k) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::vector<double> p;
      for (int k = 0, c = code; k < len; ++k, c /= 3) p.push_back(alphabet[c % 3]);
      auto ticks = tick_signs(p);
      ++checked;
      if (ticks != direct_tick(p)) ++bad;
      // Every split of the day into two cells.
      for (int cut = 0; cut <= len; ++cut) {
        std::vector<std::uint32_t> off{0, static_cast<std::uint32_t>(cut), static_cast<std::uint32_t>(len)};
        auto s = second_signs(ticks, off, "X", grid);
        long a = 0, b = 0;
        auto ref = direct_tick(p);
        for (int k = 0; k < cut; ++k) a += ref[k];
        for (int k = cut; k < len; ++k) b += ref[k];
        ++checked;
        if (s.eps[0] != (cut > 0 ? direct_sgn(a) : 0) || s.eps[1] != (len > cut ? direct_sgn(b) : 0)) ++bad;
      }
    }
  }
  grid.bounds.close_s = grid.bounds.open_s + 1;
  for (int size = 0; size <= 4; ++size) {
    int total = 1;
    for (int k = 0; k < size; ++k) total *= 3;
    for (int code = 0; code < total; ++code) {
      std::vector<Sign> cell;
      long sum = 0;
      for (int k = 0, c = code; k < size; ++k, c /= 3) {
        cell.push_back(static_cast<Sign>(c % 3 - 1));
        sum += c % 3 - 1;
      }
      std::vector<std::uint32_t> off{0, static_cast<std::uint32_t>(size)};
      auto s = second_signs(cell, off, "X", grid);
      ++checked;
      const Sign want = size == 0 ? 0 : direct_sgn(sum);
      if (s.eps[0] != want || s.n_trades[0] != static_cast<std::uint32_t>(size)) ++bad;
    }
  }
  return {bad == 0, std::to_string(checked) + " cases, " + std::to_string(bad) + " mismatches"};
}

// ---------------------------------------------------------------------------
// 3. fit recovery

Outcome criterion_fit() {
  const std::vector<ModelParams> regimes{{0.03, 0.6, 0.8}, {0.02, 1.24, 1.139}};
  auto grid = LagGrid::default_grid();
  std::vector<double> tau(grid.lags().begin(), grid.lags().end());
  double worst = 0;
  std::vector<int> hits;
  for (const auto& p : regimes) {
    std::vector<double> v;
    for (double t : tau) v.push_back(eval_model(p, t));
    auto f = fit_points(tau, v);
    worst = std::max({worst, std::abs(f.params.theta - p.theta) / p.theta,
                      std::abs(std::abs(f.params.tau_scale) - p.tau_scale) / p.tau_scale,
                      std::abs(f.params.gamma - p.gamma) / p.gamma});
    int ok = 0;
    for (int seed = 0; seed < 20; ++seed) {
      std::mt19937_64 g(1000 + seed);
      std::normal_distribution<double> noise(0.0, 1e-5);
      std::vector<double> y;
      for (double x : v) y.push_back(x + noise(g));
      auto fn = fit_points(tau, y);
      ok += std::abs(fn.params.gamma - p.gamma) <= 0.05;
    }
    hits.push_back(ok);
  }
  Outcome out;
  out.pass = worst <= 1e-6 && hits[0] >= 18 && hits[1] >= 18;
  out.detail = "noiseless worst relative " + fmt("%.1e", worst) + ", noisy gamma within 0.05 in " +
               std::to_string(hits[0]) + "/20 and " + std::to_string(hits[1]) + "/20";
  return out;
}

// ---------------------------------------------------------------------------
// 4-6. synthetic regimes

struct MarketRun {
  LagGrid grid = LagGrid::default_grid();
  std::vector<std::string> symbols;
  // [mode]
  std::array<PairCurves, 2> response_equal, response_pooled, correlator_equal;
};

SynthConfig regime_config(double beta, double coupling, double alpha) {
  SynthConfig c;
  c.n_symbols = 10;
  c.n_days = 50;
  c.seed = 4242;
  c.metaorder_rate = 0.01;
  c.metaorder_length_exponent = alpha;
  c.metaorder_length_min = 10;
  c.metaorder_length_max = 30000;
  c.participation = 0.6;
  c.warmup_s = 20000;
  c.impact = {0.001, 10.0, beta};
  c.cross_impact = 0.0;
  c.cross_coupling.assign(10, std::vector<double>(10, coupling));
  for (int i = 0; i < 10; ++i) c.cross_coupling[i][i] = 0.0;
  c.noise_std = 0.0;
  return c;
}

MarketRun run_market(const SynthConfig& cfg, bool with_prices) {
  MarketRun run;
  auto truth = with_prices ? generate(cfg, g_threads) : gen_signs(cfg, g_threads);
  run.symbols = truth.symbols;
  const auto n = run.symbols.size();
  const auto L = run.grid.size();
  std::array<std::vector<DayAverager>, 2> req, ceq;
  std::array<std::vector<DayPooler>, 2> rpool;
  for (int m = 0; m < 2; ++m) {
    req[m].assign(n * n, DayAverager(L));
    ceq[m].assign(n * n, DayAverager(L));
    rpool[m].assign(n * n, DayPooler(L));
  }
  for (std::size_t d = 0; d < truth.days.size(); ++d) {
    DayPanel p;
    p.grid = truth.grid(d);
    p.symbols = truth.symbols;
    p.present.assign(n, 1);
    p.eps = truth.days[d].eps;
    if (with_prices) p.mid = truth.days[d].mid;
    auto cs = correlator_panel_day(p, run.grid, g_threads);
    std::optional<PanelDaySums> rs;
    if (with_prices) rs = response_panel_day(p, run.grid, g_threads);
    for (int m = 0; m < 2; ++m) {
      for (std::size_t idx = 0; idx < n * n; ++idx) {
        std::vector<double> cv(L), rv(L);
        std::vector<std::int64_t> cn(L), rn(L);
        LagSums ls(L);
        for (std::size_t k = 0; k < L; ++k) {
          const auto& c = cs[m][k];
          cn[k] = c.count[idx];
          cv[k] = cn[k] > 0 ? covariance_value(c.count[idx], c.sum_x[idx], c.sum_y[idx], c.sum_xy[idx]) : kMissing;
          if (rs) {
            const auto& r = (*rs)[m][k];
            rn[k] = r.count[idx];
            rv[k] = rn[k] > 0 ? covariance_value(r.count[idx], r.sum_x[idx], r.sum_y[idx], r.sum_xy[idx]) : kMissing;
            ls.n[k] = r.count[idx];
            ls.sum_x[k] = r.sum_x[idx];
            ls.sum_y[k] = r.sum_y[idx];
            ls.sum_xy[k] = r.sum_xy[idx];
          }
        }
        ceq[m][idx].add(cv, cn);
        if (rs) {
          req[m][idx].add(rv, rn);
          rpool[m][idx].add(ls);
        }
      }
    }
  }
  const std::vector<int> lags(run.grid.lags().begin(), run.grid.lags().end());
  for (int m = 0; m < 2; ++m) {
    const auto mode = m == 0 ? SignMode::include_zero : SignMode::exclude_zero;
    for (auto* pc : {&run.response_equal[m], &run.response_pooled[m], &run.correlator_equal[m]}) {
      pc->symbols = run.symbols;
      pc->mode = mode;
    }
    run.correlator_equal[m].kind = CurveKind::correlator;
    for (std::size_t idx = 0; idx < n * n; ++idx) {
      CurveMeta meta;
      meta.pair = {run.symbols[idx / n], run.symbols[idx % n]};
      meta.mode = mode;
      run.correlator_equal[m].insert(ceq[m][idx].finish(lags, meta));
      if (with_prices) {
        run.response_equal[m].insert(req[m][idx].finish(lags, meta));
        run.response_pooled[m].insert(rpool[m][idx].finish(run.grid, meta));
      }
    }
  }
  return run;
}

std::vector<double> smooth5(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::size_t lo = k >= 2 ? k - 2 : 0, hi = std::min(v.size() - 1, k + 2);
    double s = 0;
    for (std::size_t q = lo; q <= hi; ++q) s += v[q];
    out[k] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::size_t last_decade_start(const std::vector<int>& lags) {
  const int from = lags.back() / 10;
  std::size_t k = 0;
  while (k < lags.size() && lags[k] < from) ++k;
  return k;
}

struct Shape {
  bool rises_then_falls = false;
  bool non_decreasing_tail = false;
  int peak_tau = 0;
};

Shape shape_of(const LagCurve& c) {
  auto s = smooth5(c.value);
  Shape sh;
  const auto peak = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  sh.peak_tau = c.lags[peak];
  const auto tail = last_decade_start(c.lags);
  bool dec = true, inc = true;
  for (std::size_t k = tail + 1; k < s.size(); ++k) {
    dec = dec && s[k] <= s[k - 1];
    inc = inc && s[k] >= s[k - 1];
  }
  sh.rises_then_falls = peak > 0 && peak + 1 < s.size() && s[peak] > s.front() && s.back() < s[peak] && dec;
  sh.non_decreasing_tail = inc;
  return sh;
}

std::optional<MarketRun> g_transient, g_permanent;

void ensure_regime_runs() {
  if (!g_transient) g_transient = run_market(regime_config(0.5, 0.3, 2.2), true);
  if (!g_permanent) g_permanent = run_market(regime_config(0.0, 0.0, 2.2), true);
}

Outcome criterion_regimes() {
  ensure_regime_runs();
  std::string detail;
  bool pass = true;
  for (int m = 0; m < 2; ++m) {
    const char* tag = m == 0 ? "incl" : "excl";
    auto tp = shape_of(market_average(g_transient->response_pooled[m], Selector::parse("self")));
    auto pp = shape_of(market_average(g_permanent->response_pooled[m], Selector::parse("self")));
    auto te = shape_of(market_average(g_transient->response_equal[m], Selector::parse("self")));
    auto pe = shape_of(market_average(g_permanent->response_equal[m], Selector::parse("self")));
    pass = pass && tp.rises_then_falls && pp.non_decreasing_tail;
    detail += std::string(tag) + ": transient peak " + std::to_string(tp.peak_tau) + "s " +
              (tp.rises_then_falls ? "rise-fall" : "NOT rise-fall") + ", permanent tail " +
              (pp.non_decreasing_tail ? "non-decreasing" : "DECREASING") + " [equal-day weighting: transient " +
              (te.rises_then_falls ? "rise-fall" : "not rise-fall") + ", permanent tail " +
              (pe.non_decreasing_tail ? "non-decreasing" : "decreasing") + "]; ";
  }
  detail += "pooled-day weighting";
  return {pass, detail};
}

Outcome criterion_cross() {
  ensure_regime_runs();
  bool pass = true;
  double worst_null = 0, weakest_coupled = INFINITY;
  for (int m = 0; m < 2; ++m) {
    auto null = market_average(g_permanent->response_equal[m], Selector::parse("cross"));
    auto coupled = market_average(g_transient->response_equal[m], Selector::parse("cross"));
    for (std::size_t k = 0; k < null.size(); ++k) {
      const double z = std::abs(null.value[k]) / null.dispersion[k];
      worst_null = std::max(worst_null, z);
      if (!(z < 5)) pass = false;
    }
    for (std::size_t k = 0; k < coupled.size() && coupled.lags[k] <= 100; ++k) {
      const double z = coupled.value[k] / coupled.dispersion[k];
      weakest_coupled = std::min(weakest_coupled, z);
      if (!(z >= 5)) pass = false;
    }
  }
  return {pass, "coupling 0: max |R|/sd " + fmt("%.2f", worst_null) + " (< 5); coupling 0.3, tau <= 100: min R/sd " +
                    fmt("%.2f", weakest_coupled) + " (>= 5); sd = cross-pair dispersion, both modes"};
}

Outcome criterion_memory() {
  ensure_regime_runs();
  auto light = run_market(regime_config(0.0, 0.0, 4.5), false);
  std::string detail;
  bool pass = true;
  for (int m = 0; m < 2; ++m) {
    auto heavy_fit = fit_powerlaw(market_average(g_transient->correlator_equal[m], Selector::parse("self")));
    auto light_fit = fit_powerlaw(market_average(light.correlator_equal[m], Selector::parse("self")));
    if (m == 0) {
      pass = heavy_fit.converged && light_fit.converged &&
             classify_memory(heavy_fit).memory == Memory::long_memory &&
             classify_memory(light_fit).memory == Memory::short_memory;
      detail += "incl: alpha 2.2 gamma " + fmt("%.3f", heavy_fit.params.gamma) + ", alpha 4.5 gamma " +
                fmt("%.3f", light_fit.params.gamma);
    } else {
      detail += "; excl (diagnostic): " + fmt("%.3f", heavy_fit.params.gamma) + " / " +
                fmt("%.3f", light_fit.params.gamma);
    }
  }
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// 7. aggregation identities

Outcome criterion_aggregation() {
  std::mt19937_64 g(77);
  std::normal_distribution<double> d(1e-5, 1e-4);
  const std::vector<std::string> secs{"Energy", "Materials", "Utilities"};
  SectorMap map;
  PairCurves pc;
  for (int s = 0; s < 3; ++s)
    for (int k = 0; k < 3; ++k) {
      auto name = secs[s].substr(0, 3) + std::to_string(k);
      map.add(name, secs[s]);
      pc.symbols.push_back(name);
    }
  const std::size_t L = 12;
  for (const auto& i : pc.symbols)
    for (const auto& j : pc.symbols) {
      LagCurve c;
      for (std::size_t k = 0; k < L; ++k) {
        c.lags.push_back(static_cast<int>(k + 1));
        c.value.push_back(d(g));
        c.dispersion.push_back(0);
        c.n_samples.push_back(1);
      }
      c.meta.pair = {i, j};
      pc.insert(std::move(c));
    }
  auto cross = market_average(pc, Selector::parse("cross"), &map);
  auto intra = market_average(pc, Selector::parse("intra"), &map);
  auto inter = market_average(pc, Selector::parse("inter"), &map);
  double worst = 0;
  auto check = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}));
  };
  for (std::size_t k = 0; k < L; ++k) {
    double flat = 0, fi = 0, fo = 0;
    int n = 0, ni = 0, no = 0;
    for (const auto& i : pc.symbols)
      for (const auto& j : pc.symbols) {
        if (i == j) continue;
        const double v = pc.find(i, j)->value[k];
        flat += v;
        ++n;
        if (map.sector_of(i) == map.sector_of(j)) {
          fi += v;
          ++ni;
        } else {
          fo += v;
          ++no;
        }
      }
    check(cross.value[k], flat / n);
    check(intra.value[k], fi / ni);
    check(inter.value[k], fo / no);
    check((ni * intra.value[k] + no * inter.value[k]) / (ni + no), cross.value[k]);
    double pm = 0, am = 0;
    for (const auto& s : pc.symbols) {
      pm += passive_curve(pc, s).value[k];
      am += active_curve(pc, s).value[k];
    }
    check(pm / 9, cross.value[k]);
    check(am / 9, cross.value[k]);
  }
  return {worst <= 1e-12, "9 symbols in 3 sectors, 12 lags, worst relative " + fmt("%.1e", worst)};
}

// ---------------------------------------------------------------------------
// 8. full pipeline determinism and throughput

Outcome criterion_pipeline() {
  const auto root = g_work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  auto sectors = SectorMap::read(fs::path(IMPACTLAB_DATA_DIR) / "sectors" / "gics_2008.csv");
  auto symbols = sectors.symbols();
  nlohmann::ordered_json synth = to_json(regime_config(0.3, 0.05, 2.2));
  synth["n_symbols"] = symbols.size();
  synth["symbols"] = symbols;
  synth["n_days"] = 5;
  synth["warmup_s"] = 2000;
  synth["cross_coupling"] = 0.05;
  synth["noise_std"] = 1e-4;
  const auto map_text = read_text_file(fs::path(IMPACTLAB_DATA_DIR) / "sectors" / "gics_2008.csv");

  std::vector<double> seconds;
  std::vector<std::string> checksums, manifests;
  const int hw = std::max(2, g_threads);
  for (int threads : {1, hw}) {
    // Identical inputs and config under separate roots; only the thread count differs.
    const auto base = root / ("t" + std::to_string(threads));
    write_text_file(base / "synth.json", synth.dump(2) + "\n");
    write_text_file(base / "sectors.csv", map_text);
    nlohmann::json cfg = {{"sector_map", "sectors.csv"},
                          {"input", {{"synth", "synth.json"}}},
                          {"output", "run"},
                          {"threads", threads},
                          {"report", {{"display_scale", 6}}}};
    auto rc = parse_run_config(cfg, base);
    auto t0 = std::chrono::steady_clock::now();
    auto summary = run_pipeline(rc);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    checksums.push_back(read_text_file(summary.work / "checksums.sha256"));
    manifests.push_back(read_text_file(summary.work / "manifest.json"));
  }
  std::size_t files = std::count(checksums[0].begin(), checksums[0].end(), '\n');
  bool same_bytes = checksums[0] == checksums[1] && manifests[0] == manifests[1];
  // Byte comparison of every output, not only the digests.
  std::size_t differing = 0;
  std::string first_diff;
  const auto run1 = root / "t1" / "run", run2 = root / ("t" + std::to_string(hw)) / "run";
  for (const auto& e : fs::recursive_directory_iterator(run1)) {
    if (!e.is_regular_file()) continue;
    auto other = run2 / fs::relative(e.path(), run1);
    if (!fs::exists(other) || read_text_file(other) != read_text_file(e.path())) {
      if (!differing++) first_diff = fs::relative(e.path(), run1).string();
    }
  }
  same_bytes = same_bytes && differing == 0;
  const bool fast = seconds[0] < 900 && seconds[1] < 900;
  fs::remove_all(root);
  return {same_bytes && fast, "99 symbols x 5 days, " + std::to_string(files) + " output files, runs with 1 and " +
                                  std::to_string(hw) + " threads " + (same_bytes ? "byte-identical" : "DIFFER (" + std::to_string(differing) + " files, first " + first_diff + ")") +
                                  ", wall " + fmt("%.0f", seconds[0]) + " s / " + fmt("%.0f", seconds[1]) +
                                  " s on " + std::to_string(resolve_threads(std::nullopt)) + " hardware threads"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  g_work = fs::temp_directory_path() / "impactlab_acceptance";
  g_threads = resolve_threads(std::nullopt);
  for (int a = 1; a < argc; ++a) {
    std::string arg = argv[a];
    if (arg == "--only" && a + 1 < argc) {
      std::stringstream ss(argv[++a]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else if (arg == "--work" && a + 1 < argc) {
      g_work = argv[++a];
    } else if (arg == "--threads" && a + 1 < argc) {
      g_threads = std::stoi(argv[++a]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N,M] [--work DIR] [--threads T]\n");
      return 2;
    }
  }
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "oracle equivalence", 60, criterion_oracle},
      {2, "sign-rule exhaustiveness", 5, criterion_signs},
      {3, "fit recovery", 30, criterion_fit},
      {4, "regime reproduction", 600, criterion_regimes},
      {5, "cross-response emergence", 600, criterion_cross},
      {6, "memory classification", 600, criterion_memory},
      {7, "aggregation identities", 60, criterion_aggregation},
      {8, "determinism and throughput", 900, criterion_pipeline},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    std::printf("%s %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
