#include "impactlab/synth.hpp"

#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <set>

#include "impactlab/error.hpp"
#include "impactlab/parallel.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/taq_ingest.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

double ImpactKernel::operator()(double u) const { return g0 / std::pow(1.0 + u / tau0, beta); }

std::vector<std::string> SynthConfig::symbol_names() const {
  if (!symbols.empty()) return symbols;
  const int width = std::max<int>(2, static_cast<int>(std::to_string(std::max(0, n_symbols - 1)).size()));
  std::vector<std::string> out;
  for (int s = 0; s < n_symbols; ++s) {
    auto digits = std::to_string(s);
    out.push_back("S" + std::string(width - digits.size(), '0') + digits);
  }
  return out;
}

double SynthConfig::coupling(int i, int j) const {
  if (i == j || cross_coupling.empty()) return 0.0;
  return cross_coupling[i][j];
}

namespace {

const std::set<std::string> kConfigKeys = {
    "n_symbols", "n_days", "session", "start_date", "seed", "symbols", "metaorder_rate",
    "metaorder_length_exponent", "metaorder_length_min", "metaorder_length_max", "participation", "warmup_s",
    "impact", "cross_impact", "cross_coupling", "noise_std", "initial_price", "half_spread"};
const std::set<std::string> kImpactKeys = {"g0", "tau0", "beta"};

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::config_error, where + " must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw Error(Errc::config_error, "unknown key '" + k + "' in " + where);
}

}  // namespace

SynthConfig parse_synth_config(const nlohmann::json& j) {
  reject_unknown(j, kConfigKeys, "synth config");
  SynthConfig c;
  try {
    if (j.contains("symbols")) c.symbols = j["symbols"].get<std::vector<std::string>>();
    if (j.contains("n_symbols")) c.n_symbols = j["n_symbols"].get<int>();
    else if (!c.symbols.empty()) c.n_symbols = static_cast<int>(c.symbols.size());
    c.n_days = j.value("n_days", c.n_days);
    if (j.contains("session")) c.session = SessionBounds::parse(j["session"].get<std::string>());
    if (j.contains("start_date")) {
      auto d = parse_date(j["start_date"].get<std::string>());
      if (!d) throw Error(Errc::config_error, "bad start_date");
      c.start_date = *d;
    }
    c.seed = j.value("seed", c.seed);
    c.metaorder_rate = j.value("metaorder_rate", c.metaorder_rate);
    c.metaorder_length_exponent = j.value("metaorder_length_exponent", c.metaorder_length_exponent);
    c.metaorder_length_min = j.value("metaorder_length_min", c.metaorder_length_min);
    c.metaorder_length_max = j.value("metaorder_length_max", c.metaorder_length_max);
    c.participation = j.value("participation", c.participation);
    c.warmup_s = j.value("warmup_s", c.warmup_s);
    if (j.contains("impact")) {
      const auto& im = j["impact"];
      reject_unknown(im, kImpactKeys, "impact");
      c.impact.g0 = im.value("g0", c.impact.g0);
      c.impact.tau0 = im.value("tau0", c.impact.tau0);
      c.impact.beta = im.value("beta", c.impact.beta);
    }
    c.cross_impact = j.value("cross_impact", c.cross_impact);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.initial_price = j.value("initial_price", c.initial_price);
    c.half_spread = j.value("half_spread", c.half_spread);
    if (j.contains("cross_coupling")) {
      const auto& cc = j["cross_coupling"];
      if (cc.is_number()) {
        const double v = cc.get<double>();
        c.cross_coupling.assign(c.n_symbols, std::vector<double>(c.n_symbols, v));
        for (int s = 0; s < c.n_symbols; ++s) c.cross_coupling[s][s] = 0.0;
      } else {
        c.cross_coupling = cc.get<std::vector<std::vector<double>>>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::config_error, std::string("synth config: ") + e.what());
  }
  validate(c);
  return c;
}

SynthConfig read_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open " + path.string());
  try {
    return parse_synth_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["n_symbols"] = c.n_symbols;
  j["n_days"] = c.n_days;
  j["session"] = c.session.to_string();
  j["start_date"] = format_date(c.start_date);
  j["seed"] = c.seed;
  j["symbols"] = c.symbol_names();
  j["metaorder_rate"] = c.metaorder_rate;
  j["metaorder_length_exponent"] = c.metaorder_length_exponent;
  j["metaorder_length_min"] = c.metaorder_length_min;
  j["metaorder_length_max"] = c.metaorder_length_max;
  j["participation"] = c.participation;
  j["warmup_s"] = c.warmup_s;
  j["impact"] = {{"g0", c.impact.g0}, {"tau0", c.impact.tau0}, {"beta", c.impact.beta}};
  j["cross_impact"] = c.cross_impact;
  if (c.cross_coupling.empty())
    j["cross_coupling"] = 0.0;
  else
    j["cross_coupling"] = c.cross_coupling;
  j["noise_std"] = c.noise_std;
  j["initial_price"] = c.initial_price;
  j["half_spread"] = c.half_spread;
  return j;
}

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::config_error, m); };
  if (c.n_symbols < 1) fail("n_symbols must be >= 1");
  if (c.n_days < 1) fail("n_days must be >= 1");
  if (!c.symbols.empty()) {
    if (static_cast<int>(c.symbols.size()) != c.n_symbols) fail("symbols list does not match n_symbols");
    std::set<std::string> u(c.symbols.begin(), c.symbols.end());
    if (u.size() != c.symbols.size()) fail("duplicate symbols");
    for (const auto& s : c.symbols)
      if (s.empty() || s.find_first_of(", \t\r\n") != std::string::npos) fail("bad symbol '" + s + "'");
  }
  if (c.session.open_s >= c.session.close_s) fail("session open must precede close");
  if (!(c.metaorder_rate >= 0 && c.metaorder_rate <= 1)) fail("metaorder_rate must lie in [0, 1]");
  if (!(c.metaorder_length_exponent > 1)) fail("metaorder_length_exponent must exceed 1");
  if (c.metaorder_length_min < 1 || c.metaorder_length_max < c.metaorder_length_min)
    fail("metaorder lengths need 1 <= min <= max");
  if (!(c.participation >= 0 && c.participation <= 1)) fail("participation must lie in [0, 1]");
  if (c.warmup_s < 0) fail("warmup_s must be >= 0");
  if (!(c.impact.g0 >= 0)) fail("impact.g0 must be >= 0");
  if (!(c.impact.tau0 > 0)) fail("impact.tau0 must be > 0");
  if (!(c.impact.beta >= 0)) fail("impact.beta must be >= 0");
  if (!(c.cross_impact >= 0)) fail("cross_impact must be >= 0");
  if (!(c.noise_std >= 0)) fail("noise_std must be >= 0");
  if (!(c.half_spread > 0)) fail("half_spread must be > 0");
  if (!c.cross_coupling.empty()) {
    if (static_cast<int>(c.cross_coupling.size()) != c.n_symbols) fail("cross_coupling must be n x n");
    for (const auto& row : c.cross_coupling) {
      if (static_cast<int>(row.size()) != c.n_symbols) fail("cross_coupling must be n x n");
      for (double v : row)
        if (!(v >= 0 && v <= 1)) fail("cross_coupling entries must lie in [0, 1]");
    }
  }
  const int len = c.session.len() + c.warmup_s;
  double kernel_mass = 0;
  for (int u = 1; u < len; ++u) kernel_mass += c.impact(u);
  double worst_fan_in = 1.0;
  for (int i = 0; i < c.n_symbols; ++i) {
    double row = 0;
    for (int j = 0; j < c.n_symbols; ++j) row += c.coupling(i, j);
    worst_fan_in = std::max(worst_fan_in, 1.0 + c.cross_impact * row);
  }
  const double reach = kernel_mass * worst_fan_in + 6.0 * c.noise_std * std::sqrt(static_cast<double>(len));
  if (!(reach < c.initial_price - c.half_spread))
    fail("worst-case drift " + format_double(reach) + " could push prices to zero");
}

std::vector<Date> synth_dates(const SynthConfig& c) {
  std::vector<Date> out;
  std::chrono::sys_days d{c.start_date};
  while (static_cast<int>(out.size()) < c.n_days) {
    std::chrono::weekday wd{d};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.emplace_back(d);
    d += std::chrono::days{1};
  }
  return out;
}

SynthRng::SynthRng(std::uint64_t seed, std::uint64_t symbol, std::uint64_t day, std::uint64_t stream) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(symbol), hi(symbol), lo(day), hi(day), lo(stream), hi(stream)};
  engine_.seed(seq);
}

double SynthRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SynthRng::normal() {
  if (spare_) {
    double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = 0;
  while (u1 == 0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  return r * std::cos(a);
}

std::vector<Metaorder> draw_metaorders(const SynthConfig& c, int len, SynthRng& rng) {
  std::vector<Metaorder> out;
  if (c.metaorder_rate <= 0) return out;
  const double e = 1.0 - c.metaorder_length_exponent;
  const double a = std::pow(static_cast<double>(c.metaorder_length_min), e);
  const double b = std::pow(static_cast<double>(c.metaorder_length_max) + 1.0, e);
  for (int t = 0; t < len; ++t) {
    if (!rng.bernoulli(c.metaorder_rate)) continue;
    const double u = rng.uniform();
    double l = std::floor(std::pow(a - u * (a - b), 1.0 / e));
    l = std::clamp(l, static_cast<double>(c.metaorder_length_min), static_cast<double>(c.metaorder_length_max));
    const int dir = rng.uniform() < 0.5 ? -1 : 1;
    out.push_back({t, static_cast<int>(l), dir});
  }
  return out;
}

std::vector<int> emit_child_orders(int len, std::span<const Metaorder> orders, double participation,
                                   SynthRng& rng, std::vector<std::uint8_t>* active) {
  std::vector<int> sum(len, 0);
  if (active) active->assign(len, 0);
  for (const auto& m : orders) {
    const int end = std::min(len, m.start + m.length);
    for (int t = std::max(0, m.start); t < end; ++t) {
      if (participation < 1 && !rng.bernoulli(participation)) continue;
      sum[t] += m.direction;
      if (active) (*active)[t] = 1;
    }
  }
  return sum;
}

SynthTruth gen_signs(const SynthConfig& cfg, int threads) {
  validate(cfg);
  SynthTruth truth;
  truth.config = cfg;
  truth.symbols = cfg.symbol_names();
  const int warm = cfg.warmup_s;
  const int span = cfg.session.len() + warm;
  const auto dates = synth_dates(cfg);
  const auto n = static_cast<std::size_t>(cfg.n_symbols);
  truth.days.resize(dates.size());
  truth.kernel.resize(span);
  for (int u = 0; u < span; ++u) truth.kernel[u] = cfg.impact(u);

  std::vector<std::vector<int>> own(dates.size() * n);
  std::vector<std::vector<std::uint8_t>> emitted(dates.size() * n);
  parallel_for(dates.size() * n, threads, [&](std::size_t cell) {
    const auto d = cell / n, s = cell % n;
    SynthRng rng(cfg.seed, s, d, 0);
    auto orders = draw_metaorders(cfg, span, rng);
    own[cell] = emit_child_orders(span, orders, cfg.participation, rng, &emitted[cell]);
  });
  for (std::size_t d = 0; d < dates.size(); ++d) {
    truth.days[d].date = dates[d];
    truth.days[d].warmup_eps.resize(n);
    truth.days[d].eps.resize(n);
    truth.days[d].busy.resize(n);
  }
  parallel_for(dates.size() * n, threads, [&](std::size_t cell) {
    const auto d = cell / n, i = cell % n;
    SynthRng rng(cfg.seed, i, d, 1);
    std::vector<Sign> eps(span, 0);
    std::vector<std::uint8_t> busy = emitted[cell];
    for (int t = 0; t < span; ++t) {
      int total = own[cell][t];
      for (std::size_t j = 0; j < n; ++j) {
        const double c = cfg.coupling(static_cast<int>(i), static_cast<int>(j));
        if (c <= 0) continue;
        const int other = (own[d * n + j][t] > 0) - (own[d * n + j][t] < 0);
        if (other == 0) continue;
        if (rng.bernoulli(c)) {
          total += other;
          busy[t] = 1;
        }
      }
      eps[t] = static_cast<Sign>((total > 0) - (total < 0));
    }
    auto& day = truth.days[d];
    day.warmup_eps[i].assign(eps.begin(), eps.begin() + warm);
    day.eps[i].assign(eps.begin() + warm, eps.end());
    day.busy[i].assign(busy.begin() + warm, busy.end());
  });
  return truth;
}

std::vector<double> convolve_causal(std::span<const double> f, std::span<const double> kernel) {
  const std::size_t n = f.size();
  if (kernel.size() < n) throw Error(Errc::domain_error, "kernel shorter than forcing");
  std::vector<double> out(n, 0.0);
  std::size_t nonzero = 0;
  for (double v : f) nonzero += v != 0;
  if (nonzero == 0) return out;
  if (nonzero <= 64) {
    for (std::size_t s = 0; s < n; ++s) {
      if (f[s] == 0) continue;
      for (std::size_t t = s + 1; t < n; ++t) out[t] += kernel[t - s] * f[s];
    }
    return out;
  }
  std::size_t size = 1;
  while (size < 2 * n) size <<= 1;
  std::vector<double> a(size, 0.0), b(size, 0.0);
  std::copy(f.begin(), f.end(), a.begin());
  for (std::size_t u = 1; u < n; ++u) b[u] = kernel[u];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> c;
  fft.inv(c, fa);
  std::copy(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n), out.begin());
  return out;
}

void gen_prices(SynthTruth& truth, int threads) {
  const auto& cfg = truth.config;
  const auto n = truth.symbols.size();
  const int warm = cfg.warmup_s;
  const int span = cfg.session.len() + warm;
  auto sign_at = [&](const SynthDay& day, std::size_t s, int t) {
    return t < warm ? day.warmup_eps[s][t] : day.eps[s][t - warm];
  };
  parallel_for(truth.days.size() * n, threads, [&](std::size_t cell) {
    const auto d = cell / n, i = cell % n;
    auto& day = truth.days[d];
    std::vector<double> forcing(span, 0.0);
    for (int t = 0; t < span; ++t) forcing[t] = sign_at(day, i, t);
    if (cfg.cross_impact > 0) {
      for (std::size_t j = 0; j < n; ++j) {
        const double c = cfg.coupling(static_cast<int>(i), static_cast<int>(j));
        if (c <= 0) continue;
        for (int t = 0; t < span; ++t) forcing[t] += cfg.cross_impact * c * sign_at(day, j, t);
      }
    }
    auto impact = convolve_causal(forcing, truth.kernel);
    std::vector<double> mid(span);
    SynthRng rng(cfg.seed, i, d, 2);
    double walk = 0;
    for (int t = 0; t < span; ++t) {
      mid[t] = cfg.initial_price + impact[t] + walk;
      if (cfg.noise_std > 0) walk += cfg.noise_std * rng.normal();
    }
    day.mid[i].assign(mid.begin() + warm, mid.end());
  });
}

SynthTruth generate(const SynthConfig& cfg, int threads) {
  auto truth = gen_signs(cfg, threads);
  for (auto& d : truth.days) d.mid.resize(truth.symbols.size());
  gen_prices(truth, threads);
  return truth;
}

DayPanel SynthTruth::panel(std::size_t d) const {
  DayPanel p;
  p.grid = grid(d);
  p.symbols = symbols;
  p.present.assign(symbols.size(), 1);
  p.mid = days[d].mid;
  p.eps = days[d].eps;
  return p;
}

SignSeries SynthTruth::sign_series(std::size_t d, std::size_t s) const {
  SignSeries out;
  out.symbol = symbols[s];
  out.grid = grid(d);
  out.eps = days[d].eps[s];
  out.n_trades.assign(out.eps.size(), 0);
  return out;
}

SecondSeries SynthTruth::second_series(std::size_t d, std::size_t s) const {
  SecondSeries out;
  out.symbol = symbols[s];
  out.grid = grid(d);
  out.midpoint = days[d].mid[s];
  out.cell_offsets.assign(out.midpoint.size() + 1, 0);
  return out;
}

namespace {

// "<date>T" + HH:MM:SS.fffffffff for the second `sod` plus `ns`.
void append_stamp(std::string& out, const std::string& date_t, int sod, int ns) {
  out += date_t;
  char buf[19];
  const int h = sod / 3600, m = sod / 60 % 60, s = sod % 60;
  buf[0] = static_cast<char>('0' + h / 10);
  buf[1] = static_cast<char>('0' + h % 10);
  buf[2] = ':';
  buf[3] = static_cast<char>('0' + m / 10);
  buf[4] = static_cast<char>('0' + m % 10);
  buf[5] = ':';
  buf[6] = static_cast<char>('0' + s / 10);
  buf[7] = static_cast<char>('0' + s % 10);
  buf[8] = '.';
  for (int k = 17; k >= 9; --k) {
    buf[k] = static_cast<char>('0' + ns % 10);
    ns /= 10;
  }
  out.append(buf, 18);
}

struct TickState {
  bool any = false;
  double last = 0;
  int sign = 0;

  int peek(double price) const {
    if (!any) return 0;
    if (price > last) return 1;
    if (price < last) return -1;
    return sign;
  }
  void take(double price) {
    sign = peek(price);
    last = price;
    any = true;
  }
};

// Trade prices (bid or ask) whose tick-rule signs aggregate to `eps`.
int plan_trades(const TickState& st, int eps, double bid, double ask, double out[3]) {
  if (eps > 0) {
    out[0] = bid, out[1] = ask, out[2] = ask;
    return 3;
  }
  if (eps < 0) {
    out[0] = ask, out[1] = bid, out[2] = bid;
    return 3;
  }
  const int at_ask = st.peek(ask);
  if (at_ask > 0) {
    out[0] = ask, out[1] = bid;
    return 2;
  }
  if (at_ask == 0) {
    out[0] = ask;
    return 1;
  }
  out[0] = bid, out[1] = ask;
  return 2;
}

}  // namespace

void write_synth(const SynthTruth& truth, const std::filesystem::path& dir, int threads) {
  const auto& cfg = truth.config;
  const auto n = truth.symbols.size();
  const int len = cfg.session.len();
  std::filesystem::create_directories(dir);
  for (std::size_t d = 0; d < truth.days.size(); ++d) {
    const auto& day = truth.days[d];
    const std::string date = format_date(day.date);
    const std::string date_t = date + "T";
    std::vector<std::string> trades(n), quotes(n);
    parallel_for(n, threads, [&](std::size_t i) {
      const auto& sym = truth.symbols[i];
      auto& tq = quotes[i];
      auto& tt = trades[i];
      TickState st;
      double prev_mid = kMissing;
      for (int t = 0; t < len; ++t) {
        const int sod = cfg.session.open_s + t;
        const double mid = day.mid[i][t];
        const double bid = mid - cfg.half_spread, ask = mid + cfg.half_spread;
        if (!(mid == prev_mid)) {
          tq += sym;
          tq += ',';
          append_stamp(tq, date_t, sod, 0);
          tq += ',';
          append_double(tq, bid);
          tq += ',';
          append_double(tq, ask);
          tq += ",100,100\n";
          prev_mid = mid;
        }
        if (!day.busy[i][t] && day.eps[i][t] == 0) continue;
        double px[3];
        const int k = plan_trades(st, day.eps[i][t], bid, ask, px);
        for (int q = 0; q < k; ++q) {
          st.take(px[q]);
          tt += sym;
          tt += ',';
          append_stamp(tt, date_t, sod, (q + 1) * 1'000'000);
          tt += ',';
          append_double(tt, px[q]);
          tt += ",100\n";
        }
      }
    });
    std::string all_trades = "symbol,ts,price,size\n";
    std::string all_quotes = "symbol,ts,bid,ask,bid_size,ask_size\n";
    for (std::size_t i = 0; i < n; ++i) {
      all_trades += trades[i];
      all_quotes += quotes[i];
      std::string().swap(trades[i]);
      std::string().swap(quotes[i]);
    }
    write_text_file(dir / ("trades_" + date + ".csv"), all_trades);
    write_text_file(dir / ("quotes_" + date + ".csv"), all_quotes);
  }
  write_text_file(dir / "truth.json", truth_json(truth).dump(2) + "\n");
}

nlohmann::ordered_json truth_json(const SynthTruth& truth) {
  nlohmann::ordered_json j;
  j["format"] = "impactlab-synth-truth";
  j["version"] = 1;
  j["config"] = to_json(truth.config);
  std::vector<std::string> dates;
  for (const auto& d : truth.days) dates.push_back(format_date(d.date));
  j["dates"] = dates;
  j["kernel"] = {{"form", "g0 / (1 + u/tau0)^beta"},
                 {"g0", truth.config.impact.g0},
                 {"tau0", truth.config.impact.tau0},
                 {"beta", truth.config.impact.beta}};
  auto grid = LagGrid::default_grid();
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (int u : grid.lags())
    if (u < static_cast<int>(truth.kernel.size())) table.push_back({u, truth.kernel[u]});
  j["kernel_table"] = table;
  return j;
}

double expected_response_oracle(const SynthTruth& truth, std::size_t i, std::size_t j, int tau,
                                SignMode mode) {
  const int len = truth.config.session.len();
  if (truth.symbols.size() > 3 || len > 2000 || truth.days.size() > 20)
    throw Error(Errc::instance_too_large, "oracle is limited to 3 symbols, 2000 s and 20 days");
  if (tau < 1 || tau >= len) throw Error(Errc::domain_error, "tau out of range");
  long double total = 0;
  int days = 0;
  for (const auto& day : truth.days) {
    const auto& m = day.mid[i];
    const auto& e = day.eps[j];
    long double sx = 0, sy = 0, sxy = 0;
    long n = 0;
    for (int t = 0; t + tau < len; ++t) {
      if (mode == SignMode::exclude_zero && e[t] == 0) continue;
      const double r = (m[t + tau] - m[t]) / m[t];
      sx += r;
      sy += e[t];
      sxy += static_cast<long double>(r) * e[t];
      ++n;
    }
    if (n == 0) continue;
    total += sxy / n - (sx / n) * (sy / n);
    ++days;
  }
  if (days == 0) throw Error(Errc::degenerate_day, "no valid instants");
  return static_cast<double>(total / days);
}

}  // namespace impactlab
