#include "impactlab/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "impactlab/error.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

const std::vector<std::string>& gics_sectors() {
  static const std::vector<std::string> order = {
      "Industrials", "Health Care", "Consumer Discretionary", "Information Technology",
      "Utilities",   "Financials",  "Materials",              "Energy",
      "Consumer Staples", "Telecommunications Services"};
  return order;
}

SectorMap SectorMap::parse(std::istream& in) {
  SectorMap m;
  std::string line;
  std::vector<std::string_view> f;
  std::int64_t row = 0;
  while (read_line(in, line)) {
    ++row;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    split_fields(t, ',', f);
    if (f.size() != 2) throw Error(Errc::format_error, "sector map rows are symbol,sector", row);
    auto sym = std::string(trim(f[0]));
    auto sec = std::string(trim(f[1]));
    if (row == 1 && sym == "symbol" && sec == "sector") continue;
    try {
      m.add(sym, sec);
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), row);
    }
  }
  return m;
}

SectorMap SectorMap::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open sector map " + path.string());
  return parse(in);
}

void SectorMap::add(const std::string& symbol, const std::string& sector) {
  const auto& known = gics_sectors();
  if (std::find(known.begin(), known.end(), sector) == known.end())
    throw Error(Errc::config_error, "unknown sector '" + sector + "' for " + symbol);
  if (!sector_.emplace(symbol, sector).second)
    throw Error(Errc::config_error, "symbol " + symbol + " mapped twice");
}

const std::string& SectorMap::sector_of(const std::string& symbol) const {
  auto it = sector_.find(symbol);
  if (it == sector_.end())
    throw Error(Errc::incomplete_universe, "no sector for " + symbol, -1, {symbol});
  return it->second;
}

int SectorMap::sector_rank(const std::string& symbol) const {
  const auto& known = gics_sectors();
  return static_cast<int>(std::find(known.begin(), known.end(), sector_of(symbol)) - known.begin());
}

std::vector<std::string> SectorMap::symbols() const {
  std::vector<std::string> out;
  for (const auto& [s, _] : sector_) out.push_back(s);
  return out;
}

std::vector<std::string> SectorMap::order(std::vector<std::string> symbols) const {
  std::vector<std::string> missing;
  for (const auto& s : symbols)
    if (!contains(s)) missing.push_back(s);
  if (!missing.empty())
    throw Error(Errc::incomplete_universe, std::to_string(missing.size()) + " symbols lack a sector",
                -1, missing);
  std::sort(symbols.begin(), symbols.end(), [&](const std::string& a, const std::string& b) {
    return std::pair(sector_rank(a), a) < std::pair(sector_rank(b), b);
  });
  return symbols;
}

std::vector<std::string> read_universe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config_error, "cannot open universe " + path.string());
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string line;
  std::vector<std::string_view> f;
  bool first = true;
  while (read_line(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    split_fields(t, ',', f);
    auto sym = std::string(trim(f[0]));
    if (first && sym == "symbol") {
      first = false;
      continue;
    }
    first = false;
    if (seen.insert(sym).second) out.push_back(sym);
  }
  if (out.empty()) throw Error(Errc::config_error, "universe " + path.string() + " is empty");
  return out;
}

const LagCurve* PairCurves::find(const std::string& i, const std::string& j) const {
  auto it = curves.find(PairKey{i, j});
  return it == curves.end() ? nullptr : &it->second;
}

void PairCurves::insert(LagCurve curve) {
  if (lags.empty() && curves.empty()) lags = curve.lags;
  if (curve.lags != lags) throw Error(Errc::domain_error, "curve lag grids differ");
  auto key = curve.meta.pair;
  curves.insert_or_assign(std::move(key), std::move(curve));
}

Selector Selector::parse(std::string_view text) {
  Selector s;
  auto colon = text.find(':');
  auto head = text.substr(0, colon);
  auto tail = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (head == "self" || head == "market-self" || head == "market_self") s.kind = SelectorKind::self;
  else if (head == "cross" || head == "market-cross" || head == "market_cross") s.kind = SelectorKind::cross;
  else if (head == "intra") s.kind = SelectorKind::intra;
  else if (head == "inter") s.kind = SelectorKind::inter;
  else if (head == "sector_self") s.kind = SelectorKind::sector_self;
  else if (head == "sector_cross") s.kind = SelectorKind::sector_cross;
  else throw Error(Errc::config_error, "unknown selector '" + std::string(text) + "'");
  const bool wants_sector = s.kind == SelectorKind::sector_self || s.kind == SelectorKind::sector_cross;
  if (wants_sector != !tail.empty())
    throw Error(Errc::config_error, "selector '" + std::string(text) + "' sector argument mismatch");
  s.sector = std::string(tail);
  return s;
}

std::string Selector::name() const {
  switch (kind) {
    case SelectorKind::self: return "market_self";
    case SelectorKind::cross: return "market_cross";
    case SelectorKind::intra: return "intra_sector";
    case SelectorKind::inter: return "inter_sector";
    case SelectorKind::sector_self: return "sector_self:" + sector;
    case SelectorKind::sector_cross: return "sector_cross:" + sector;
  }
  return {};
}

namespace {

struct Inner {
  std::string i;
  std::vector<const LagCurve*> members;
};

// Population mean and std of the values of `units` that are defined at k.
struct UnitStats {
  double mean = kMissing;
  double std = kMissing;
  std::int64_t count = 0;
};

UnitStats unit_stats(const std::vector<const LagCurve*>& units, std::size_t k) {
  UnitStats s;
  double sum = 0;
  for (const auto* c : units) {
    if (!c->defined(k)) continue;
    sum += c->value[k];
    ++s.count;
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0;
  for (const auto* c : units) {
    if (!c->defined(k)) continue;
    const double d = c->value[k] - s.mean;
    ss += d * d;
  }
  s.std = std::sqrt(ss / static_cast<double>(s.count));
  return s;
}

LagCurve make_aggregate(const PairCurves& pc, std::string name, std::size_t lags) {
  LagCurve c;
  c.lags = pc.lags;
  c.value.assign(lags, kMissing);
  c.dispersion.assign(lags, kMissing);
  c.n_samples.assign(lags, 0);
  c.meta.kind = pc.kind;
  c.meta.mode = pc.mode;
  c.meta.aggregate = std::move(name);
  return c;
}

std::vector<Inner> collect(const PairCurves& pc, const std::vector<PairKey>& wanted) {
  std::vector<std::string> missing;
  std::vector<Inner> groups;
  for (const auto& key : wanted) {
    const auto* c = pc.find(key.i, key.j);
    if (!c) {
      missing.push_back(key.to_string());
      continue;
    }
    if (groups.empty() || groups.back().i != key.i) groups.push_back({key.i, {}});
    groups.back().members.push_back(c);
  }
  if (!missing.empty())
    throw Error(Errc::incomplete_universe,
                std::to_string(missing.size()) + " pair curves missing (first " + missing.front() + ")",
                -1, missing);
  return groups;
}

LagCurve double_mean(const PairCurves& pc, const std::vector<PairKey>& wanted, std::string name) {
  auto groups = collect(pc, wanted);
  auto out = make_aggregate(pc, std::move(name), pc.lags.size());
  std::vector<const LagCurve*> all;
  for (const auto& g : groups) all.insert(all.end(), g.members.begin(), g.members.end());
  for (std::size_t k = 0; k < pc.lags.size(); ++k) {
    double outer = 0;
    std::int64_t outer_n = 0;
    for (const auto& g : groups) {
      auto inner = unit_stats(g.members, k);
      if (inner.count == 0) continue;
      outer += inner.mean;
      ++outer_n;
    }
    if (outer_n == 0) continue;
    auto spread = unit_stats(all, k);
    out.value[k] = outer / static_cast<double>(outer_n);
    out.dispersion[k] = spread.std;
    out.n_samples[k] = spread.count;
  }
  return out;
}

LagCurve flat_mean(const PairCurves& pc, const std::vector<PairKey>& wanted, std::string name) {
  auto groups = collect(pc, wanted);
  auto out = make_aggregate(pc, std::move(name), pc.lags.size());
  std::vector<const LagCurve*> all;
  for (const auto& g : groups) all.insert(all.end(), g.members.begin(), g.members.end());
  for (std::size_t k = 0; k < pc.lags.size(); ++k) {
    auto s = unit_stats(all, k);
    if (s.count == 0) continue;
    out.value[k] = s.mean;
    out.dispersion[k] = s.std;
    out.n_samples[k] = s.count;
  }
  return out;
}

}  // namespace

LagCurve market_average(const PairCurves& pc, const Selector& sel, const SectorMap* sectors) {
  const bool needs_sectors = sel.kind != SelectorKind::self && sel.kind != SelectorKind::cross;
  if (needs_sectors && !sectors)
    throw Error(Errc::config_error, "selector " + sel.name() + " needs a sector map");
  if (needs_sectors) sectors->order(pc.symbols);  // throws on unmapped symbols
  auto in_sector = [&](const std::string& s) { return sectors->sector_of(s) == sel.sector; };

  std::vector<PairKey> wanted;
  for (const auto& i : pc.symbols) {
    for (const auto& j : pc.symbols) {
      bool take = false;
      switch (sel.kind) {
        case SelectorKind::self: take = i == j; break;
        case SelectorKind::cross: take = i != j; break;
        case SelectorKind::intra: take = i != j && sectors->sector_of(i) == sectors->sector_of(j); break;
        case SelectorKind::inter: take = sectors->sector_of(i) != sectors->sector_of(j); break;
        case SelectorKind::sector_self: take = i == j && in_sector(i); break;
        case SelectorKind::sector_cross: take = i != j && in_sector(i) && in_sector(j); break;
      }
      if (take) wanted.push_back({i, j});
    }
  }
  if (wanted.empty())
    throw Error(Errc::incomplete_universe, "selector " + sel.name() + " matches no pairs");
  if (sel.kind == SelectorKind::self || sel.kind == SelectorKind::sector_self)
    return flat_mean(pc, wanted, sel.name());
  return double_mean(pc, wanted, sel.name());
}

LagCurve passive_curve(const PairCurves& pc, const std::string& i) {
  std::vector<PairKey> wanted;
  for (const auto& j : pc.symbols)
    if (j != i) wanted.push_back({i, j});
  auto c = flat_mean(pc, wanted, "passive");
  c.meta.pair = {i, ""};
  return c;
}

LagCurve active_curve(const PairCurves& pc, const std::string& j) {
  std::vector<PairKey> wanted;
  for (const auto& i : pc.symbols)
    if (i != j) wanted.push_back({i, j});
  auto c = flat_mean(pc, wanted, "active");
  c.meta.pair = {"", j};
  return c;
}

ResponseMatrix matrix_at(const PairCurves& pc, int tau) {
  auto it = std::find(pc.lags.begin(), pc.lags.end(), tau);
  if (it == pc.lags.end())
    throw Error(Errc::missing_dependency, "lag " + std::to_string(tau) + " is not on the curve grid");
  const auto k = static_cast<std::size_t>(it - pc.lags.begin());
  ResponseMatrix m;
  m.tau = tau;
  m.symbols = pc.symbols;
  const auto n = pc.symbols.size();
  m.values.assign(n * n, kMissing);
  std::vector<std::string> missing;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const auto* c = pc.find(pc.symbols[a], pc.symbols[b]);
      if (!c || !c->defined(k)) {
        missing.push_back(PairKey{pc.symbols[a], pc.symbols[b]}.to_string());
        continue;
      }
      m.values[a * n + b] = c->value[k];
    }
  }
  if (!missing.empty())
    throw Error(Errc::incomplete_universe,
                std::to_string(missing.size()) + " pairs lack a value at tau=" + std::to_string(tau),
                -1, missing);
  return m;
}

std::string_view to_string(Normalizer n) { return n == Normalizer::global ? "global" : "per_pair"; }

Normalizer parse_normalizer(std::string_view text) {
  if (text == "global") return Normalizer::global;
  if (text == "per_pair" || text == "per-pair") return Normalizer::per_pair;
  throw Error(Errc::config_error, "unknown normalizer '" + std::string(text) + "'");
}

NormalizedResponseMatrix normalize_matrix(const ResponseMatrix& raw, const SectorMap& sectors,
                                          Normalizer mode, const PairCurves* curves) {
  const auto n = raw.symbols.size();
  std::map<std::string, std::size_t> pos;
  for (std::size_t a = 0; a < n; ++a) pos[raw.symbols[a]] = a;
  std::vector<std::string> missing;
  for (std::size_t a = 0; a < n * n; ++a)
    if (!is_present(raw.values[a])) missing.push_back(raw.symbols[a / n] + "__" + raw.symbols[a % n]);
  if (!missing.empty())
    throw Error(Errc::incomplete_universe, "matrix has undefined entries", -1, missing);

  NormalizedResponseMatrix m;
  m.tau = raw.tau;
  m.normalizer_mode = mode;
  m.ordering = sectors.order(raw.symbols);
  for (const auto& s : m.ordering) m.sectors.push_back(sectors.sector_of(s));
  m.rho.assign(n * n, 0.0);

  if (mode == Normalizer::global) {
    double peak = 0;
    for (double v : raw.values) peak = std::max(peak, std::abs(v));
    if (peak == 0) throw Error(Errc::all_zero, "all responses are zero at tau=" + std::to_string(raw.tau));
    m.normalizer = peak;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        m.rho[a * n + b] = raw.values[pos[m.ordering[a]] * n + pos[m.ordering[b]]] / peak;
    return m;
  }

  m.normalizer = kMissing;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double v = raw.values[pos[m.ordering[a]] * n + pos[m.ordering[b]]];
      double peak = std::abs(v);
      if (curves) {
        if (const auto* c = curves->find(m.ordering[a], m.ordering[b])) {
          for (std::size_t k = 0; k < c->size(); ++k)
            if (c->defined(k)) peak = std::max(peak, std::abs(c->value[k]));
        }
      }
      m.rho[a * n + b] = peak == 0 ? 0.0 : v / peak;
    }
  }
  return m;
}

NormalizedResponseMatrix normalized_matrix(const PairCurves& curves, const SectorMap& sectors,
                                           int tau, Normalizer mode) {
  return normalize_matrix(matrix_at(curves, tau), sectors, mode, &curves);
}

namespace {

void append_matrix(std::string& out, const std::vector<std::string>& symbols,
                   const std::vector<double>& values) {
  const auto n = symbols.size();
  out += "symbol";
  for (const auto& s : symbols) out += ',' + s;
  out += '\n';
  for (std::size_t a = 0; a < n; ++a) {
    out += symbols[a];
    for (std::size_t b = 0; b < n; ++b) {
      out += ',';
      append_double(out, values[a * n + b]);
    }
    out += '\n';
  }
}

}  // namespace

std::string matrix_csv(const ResponseMatrix& m) {
  std::string out = "# impactlab-matrix v1 tau=" + std::to_string(m.tau) + " values=raw\n";
  append_matrix(out, m.symbols, m.values);
  return out;
}

ResponseMatrix parse_matrix_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!read_line(in, line)) throw Error(Errc::format_error, "empty matrix file");
  auto kv = parse_header_line(line, "impactlab-matrix", 1);
  ResponseMatrix m;
  auto tau = parse_int(kv["tau"]);
  if (!tau) throw Error(Errc::format_error, "matrix header lacks tau");
  m.tau = static_cast<int>(*tau);
  std::vector<std::string_view> f;
  if (!read_line(in, line)) throw Error(Errc::format_error, "matrix lacks a symbol header", 2);
  split_fields(line, ',', f);
  if (f.empty() || f[0] != "symbol") throw Error(Errc::format_error, "bad matrix header", 2);
  for (std::size_t a = 1; a < f.size(); ++a) m.symbols.emplace_back(f[a]);
  const auto n = m.symbols.size();
  m.values.assign(n * n, kMissing);
  for (std::size_t a = 0; a < n; ++a) {
    const auto row = static_cast<std::int64_t>(a + 3);
    if (!read_line(in, line)) throw Error(Errc::format_error, "matrix truncated", row);
    split_fields(line, ',', f);
    if (f.size() != n + 1 || f[0] != m.symbols[a]) throw Error(Errc::format_error, "bad matrix row", row);
    for (std::size_t b = 0; b < n; ++b) {
      if (f[b + 1].empty()) continue;
      auto v = parse_double(f[b + 1]);
      if (!v) throw Error(Errc::format_error, "bad matrix value", row);
      m.values[a * n + b] = *v;
    }
  }
  return m;
}

std::string normalized_matrix_csv(const NormalizedResponseMatrix& m) {
  std::string out = "# impactlab-matrix v1 tau=" + std::to_string(m.tau) +
                    " values=normalized normalizer=" + std::string(to_string(m.normalizer_mode)) + "\n";
  append_matrix(out, m.ordering, m.rho);
  return out;
}

}  // namespace impactlab
