#include "impactlab/pipeline.hpp"

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

#include "impactlab/curve_io.hpp"
#include "impactlab/error.hpp"
#include "impactlab/fitting.hpp"
#include "impactlab/hash.hpp"
#include "impactlab/parallel.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/signing.hpp"
#include "impactlab/synth.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestVersion = "impactlab-manifest/1";

std::string slug(std::string s) {
  for (auto& c : s)
    if (c == ' ' || c == '/') c = '_';
  return s;
}

std::string mode_dir(SignMode m) { return std::string(to_string(m)); }

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> csv_stems(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(Errc::missing_dependency, what + " not found: " + p.string());
}

std::string date_of_path(const std::string& path) {
  static const std::regex re(R"((\d{4}-\d{2}-\d{2}))");
  std::smatch m;
  auto name = fs::path(path).filename().string();
  return std::regex_search(name, m, re) ? m[1].str() : std::string{};
}

std::vector<std::string> mode_names(const std::vector<SignMode>& modes) {
  std::vector<std::string> out;
  for (auto m : modes) out.emplace_back(to_string(m));
  return out;
}

// One accumulator per pair, weighting chosen at run time.
class PairAccumulator {
 public:
  PairAccumulator(Weighting w, std::size_t lags) : weighting_(w), avg_(lags), pool_(lags) {}

  void add(const LagSums& day) {
    if (weighting_ == Weighting::pooled) {
      pool_.add(day);
      return;
    }
    std::vector<double> v(day.size(), kMissing);
    for (std::size_t k = 0; k < day.size(); ++k)
      if (day.n[k] > 0) v[k] = covariance_value(day.n[k], day.sum_x[k], day.sum_y[k], day.sum_xy[k]);
    avg_.add(v, day.n);
  }

  LagCurve finish(const LagGrid& grid, CurveMeta meta) const {
    meta.weighting = std::string(to_string(weighting_));
    if (weighting_ == Weighting::pooled) return pool_.finish(grid, std::move(meta));
    return avg_.finish(std::vector<int>(grid.lags().begin(), grid.lags().end()), std::move(meta));
  }

 private:
  Weighting weighting_;
  DayAverager avg_;
  DayPooler pool_;
};

struct PairIndex {
  std::vector<std::pair<std::size_t, std::size_t>> ij;
};

PairIndex select_pairs(const std::vector<std::string>& symbols, const std::vector<PairKey>& pairs) {
  PairIndex out;
  std::map<std::string, std::size_t> pos;
  for (std::size_t s = 0; s < symbols.size(); ++s) pos[symbols[s]] = s;
  if (pairs.empty()) {
    for (std::size_t i = 0; i < symbols.size(); ++i)
      for (std::size_t j = 0; j < symbols.size(); ++j) out.ij.emplace_back(i, j);
    return out;
  }
  for (const auto& p : pairs) {
    auto a = pos.find(p.i), b = pos.find(p.j);
    if (a == pos.end() || b == pos.end())
      throw Error(Errc::incomplete_universe, "pair " + p.to_string() + " is outside the universe");
    out.ij.emplace_back(a->second, b->second);
  }
  return out;
}

std::vector<std::string> discover_symbols(const fs::path& dir, const std::vector<std::string>& dates) {
  std::set<std::string> syms;
  for (const auto& d : dates)
    for (auto& s : csv_stems(dir / d)) syms.insert(s);
  return {syms.begin(), syms.end()};
}

DayPanel load_panel(const fs::path& series_dir, const fs::path& signs_dir, const std::string& date,
                    const std::vector<std::string>& symbols, bool need_mid, int threads) {
  DayPanel panel;
  panel.symbols = symbols;
  const auto n = symbols.size();
  panel.present.assign(n, 0);
  panel.mid.resize(n);
  panel.eps.resize(n);
  std::vector<SessionGrid> grids(n);
  parallel_for(n, threads, [&](std::size_t s) {
    auto sp = signs_dir / date / (symbols[s] + ".csv");
    if (!fs::exists(sp)) return;
    std::istringstream sin(read_text_file(sp));
    auto signs = read_signs(sin);
    if (need_mid) {
      auto mp = series_dir / date / (symbols[s] + ".csv");
      if (!fs::exists(mp)) return;
      std::istringstream min(read_text_file(mp));
      auto series = read_series(min);
      if (!(series.grid == signs.grid))
        throw Error(Errc::domain_error, "series and signs disagree on the grid for " + symbols[s] + " " + date);
      panel.mid[s] = std::move(series.midpoint);
    }
    grids[s] = signs.grid;
    panel.eps[s] = std::move(signs.eps);
    panel.present[s] = 1;
  });
  bool have = false;
  for (std::size_t s = 0; s < n; ++s) {
    if (!panel.present[s]) continue;
    if (!have) {
      panel.grid = grids[s];
      have = true;
    } else if (!(grids[s] == panel.grid)) {
      throw Error(Errc::domain_error, "symbols disagree on the session grid for " + date);
    }
  }
  if (!have) panel.grid = SessionGrid::make(*parse_date(date));
  return panel;
}

LagSums pair_sums(const std::vector<PanelLagSums>& per_lag, std::size_t idx) {
  LagSums s(per_lag.size());
  for (std::size_t k = 0; k < per_lag.size(); ++k) {
    s.n[k] = per_lag[k].count[idx];
    s.sum_x[k] = per_lag[k].sum_x[idx];
    s.sum_y[k] = per_lag[k].sum_y[idx];
    s.sum_xy[k] = per_lag[k].sum_xy[idx];
  }
  return s;
}

struct EstimateJob {
  CurveKind kind;
  const fs::path* series_dir;
  const fs::path* signs_dir;
};

std::size_t estimate(const EstimateJob& job, const EstimateOptions& opt, const fs::path& out_dir) {
  const int threads = std::max(1, opt.threads);
  const bool response = job.kind == CurveKind::response;
  auto dates = sorted_subdirs(*job.signs_dir);
  if (dates.empty()) throw Error(Errc::empty_input, "no sign series under " + job.signs_dir->string());
  auto symbols = opt.universe.empty() ? discover_symbols(*job.signs_dir, dates) : opt.universe;
  if (symbols.empty()) throw Error(Errc::empty_input, "no symbols to estimate");
  const auto n = symbols.size();
  auto pairs = select_pairs(symbols, opt.pairs);

  std::optional<LagGrid> matrix_grid;
  int matrix_k = -1;
  if (response && opt.matrix_tau) {
    matrix_k = opt.grid.index_of(*opt.matrix_tau);
    if (matrix_k < 0) matrix_grid = LagGrid::from_lags({*opt.matrix_tau});
  }

  const auto lags = opt.grid.size();
  std::vector<std::vector<PairAccumulator>> acc(opt.modes.size());
  std::vector<std::vector<PairAccumulator>> macc(opt.modes.size());
  for (std::size_t m = 0; m < opt.modes.size(); ++m) {
    acc[m].assign(pairs.ij.size(), PairAccumulator(opt.weighting, lags));
    if (matrix_grid) macc[m].assign(n * n, PairAccumulator(opt.weighting, 1));
  }

  for (const auto& date : dates) {
    auto panel = load_panel(*job.series_dir, *job.signs_dir, date, symbols, response, threads);
    auto sums = response ? response_panel_day(panel, opt.grid, threads)
                         : correlator_panel_day(panel, opt.grid, threads);
    for (std::size_t m = 0; m < opt.modes.size(); ++m) {
      const auto& per_lag = sums[mode_index(opt.modes[m])];
      parallel_for(pairs.ij.size(), threads, [&](std::size_t p) {
        auto [i, j] = pairs.ij[p];
        acc[m][p].add(pair_sums(per_lag, i * n + j));
      });
    }
    if (matrix_grid) {
      auto ms = response_panel_day(panel, *matrix_grid, threads);
      for (std::size_t m = 0; m < opt.modes.size(); ++m)
        for (std::size_t idx = 0; idx < n * n; ++idx)
          macc[m][idx].add(pair_sums(ms[mode_index(opt.modes[m])], idx));
    }
  }

  const auto grid_hash = opt.grid.hash();
  std::size_t written = 0;
  for (std::size_t m = 0; m < opt.modes.size(); ++m) {
    const auto dir = out_dir / mode_dir(opt.modes[m]);
    fs::create_directories(dir);
    std::vector<LagCurve> done(pairs.ij.size());
    parallel_for(pairs.ij.size(), threads, [&](std::size_t p) {
      auto [i, j] = pairs.ij[p];
      CurveMeta meta;
      meta.pair = {symbols[i], symbols[j]};
      meta.mode = opt.modes[m];
      meta.kind = job.kind;
      meta.dates = dates;
      done[p] = acc[m][p].finish(opt.grid, meta);
      write_curve(dir / meta.pair.to_string(), done[p], grid_hash);
    });
    written += pairs.ij.size();

    if (response && opt.matrix_tau) {
      ResponseMatrix raw;
      raw.tau = *opt.matrix_tau;
      raw.symbols = symbols;
      raw.values.assign(n * n, kMissing);
      if (matrix_grid) {
        for (std::size_t idx = 0; idx < n * n; ++idx) {
          auto c = macc[m][idx].finish(*matrix_grid, {});
          if (c.defined(0)) raw.values[idx] = c.value[0];
        }
      } else {
        for (std::size_t p = 0; p < pairs.ij.size(); ++p) {
          auto [i, j] = pairs.ij[p];
          const auto& c = done[p];
          if (c.defined(static_cast<std::size_t>(matrix_k))) raw.values[i * n + j] = c.value[matrix_k];
        }
      }
      write_text_file(dir / ("matrix_tau" + std::to_string(raw.tau) + ".csv"), matrix_csv(raw));
    }
  }
  return written;
}

ordered_json report_json(const IngestReport& r) {
  ordered_json j;
  j["format"] = "impactlab-ingest-report";
  j["version"] = 1;
  j["trade_rows"] = r.trade_rows;
  j["trade_kept"] = r.trade_kept;
  j["trade_dropped"] = r.trade_dropped;
  j["trade_malformed"] = r.trade_malformed;
  j["quote_rows"] = r.quote_rows;
  j["quote_kept"] = r.quote_kept;
  j["quote_dropped"] = r.quote_dropped;
  j["quote_malformed"] = r.quote_malformed;
  j["empty_days"] = r.empty_days;
  auto errs = ordered_json::array();
  for (const auto& e : r.errors) {
    ordered_json x;
    x["code"] = std::string(to_string(e.code));
    x["row"] = e.row;
    x["message"] = e.message;
    errs.push_back(std::move(x));
  }
  j["errors"] = std::move(errs);
  return j;
}

void merge_report(IngestReport& into, IngestReport&& part) {
  into.trade_rows += part.trade_rows;
  into.trade_kept += part.trade_kept;
  into.trade_dropped += part.trade_dropped;
  into.trade_malformed += part.trade_malformed;
  into.quote_rows += part.quote_rows;
  into.quote_kept += part.quote_kept;
  into.quote_dropped += part.quote_dropped;
  into.quote_malformed += part.quote_malformed;
  for (auto& e : part.errors)
    if (into.errors.size() < 100) into.errors.push_back(std::move(e));
  for (auto& d : part.empty_days) into.empty_days.push_back(std::move(d));
}

}  // namespace

std::string_view to_string(Weighting w) { return w == Weighting::pooled ? "pooled" : "equal_day"; }

Weighting parse_weighting(std::string_view text) {
  if (text == "equal_day" || text == "equal-day") return Weighting::equal_day;
  if (text == "pooled") return Weighting::pooled;
  throw Error(Errc::config_error, "unknown weighting '" + std::string(text) + "'");
}

// --- run config ----------------------------------------------------------------

fs::path RunConfig::resolve(const std::string& p) const {
  fs::path path(p);
  return (path.is_absolute() ? path : base_dir / path).lexically_normal();
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::config_error, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error(Errc::config_error, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
T get_as(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::config_error, std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"universe", "sector_map", "session", "lags", "modes", "input", "output", "threads",
                  "weighting", "matrix_tau", "normalizer", "fit_split", "report"},
                 "run config");
  RunConfig c;
  c.base_dir = base_dir;
  if (j.contains("universe")) c.universe = get_as<std::string>(j, "universe", "config");
  if (!j.contains("sector_map")) throw Error(Errc::config_error, "run config needs a sector_map");
  c.sector_map = get_as<std::string>(j, "sector_map", "config");
  if (j.contains("session")) c.session = SessionBounds::parse(get_as<std::string>(j, "session", "config"));
  if (j.contains("lags")) {
    const auto& l = j.at("lags");
    if (l.is_string()) {
      c.lags = l.get<std::string>();
    } else if (l.is_array()) {
      std::string s = "list:";
      for (std::size_t k = 0; k < l.size(); ++k) {
        if (!l[k].is_number_integer()) throw Error(Errc::config_error, "lags must be integers");
        s += (k ? "," : "") + std::to_string(l[k].get<long long>());
      }
      c.lags = s;
    } else {
      throw Error(Errc::config_error, "lags must be a spec string or an array");
    }
  }
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) {
      if (!m.is_string()) throw Error(Errc::config_error, "modes must be strings");
      auto mode = parse_sign_mode(m.get<std::string>());
      if (std::find(c.modes.begin(), c.modes.end(), mode) == c.modes.end()) c.modes.push_back(mode);
    }
    std::sort(c.modes.begin(), c.modes.end(),
              [](SignMode a, SignMode b) { return mode_index(a) < mode_index(b); });
    if (c.modes.empty()) throw Error(Errc::config_error, "modes is empty");
  }
  if (!j.contains("input")) throw Error(Errc::config_error, "run config needs an input section");
  const auto& in = j.at("input");
  reject_unknown(in, {"trades", "quotes", "synth"}, "input");
  if (in.contains("synth")) {
    if (in.contains("trades") || in.contains("quotes"))
      throw Error(Errc::config_error, "input takes either synth or trades/quotes");
    c.synth = get_as<std::string>(in, "synth", "input");
  } else {
    c.trades = get_as<std::string>(in, "trades", "input");
    c.quotes = get_as<std::string>(in, "quotes", "input");
  }
  if (!j.contains("output")) throw Error(Errc::config_error, "run config needs an output directory");
  c.output = get_as<std::string>(j, "output", "config");
  if (j.contains("threads")) c.threads = get_as<int>(j, "threads", "config");
  if (j.contains("weighting")) c.weighting = parse_weighting(get_as<std::string>(j, "weighting", "config"));
  if (j.contains("matrix_tau")) c.matrix_tau = get_as<int>(j, "matrix_tau", "config");
  if (j.contains("normalizer")) c.normalizer = parse_normalizer(get_as<std::string>(j, "normalizer", "config"));
  if (j.contains("fit_split")) c.fit_split = get_as<int>(j, "fit_split", "config");
  if (j.contains("report")) {
    const auto& r = j.at("report");
    reject_unknown(r, {"log_tau", "overlay_modes", "display_scale", "clip_negative"}, "report");
    if (r.contains("log_tau")) c.report.log_tau = get_as<bool>(r, "log_tau", "report");
    if (r.contains("overlay_modes")) c.report.overlay_modes = get_as<bool>(r, "overlay_modes", "report");
    if (r.contains("display_scale")) c.report.display_scale = get_as<double>(r, "display_scale", "report");
    if (r.contains("clip_negative")) c.report.clip_negative = get_as<bool>(r, "clip_negative", "report");
  }
  return c;
}

RunConfig read_run_config(const fs::path& path) {
  require_file(path, "run config");
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::config_error, path.string() + ": " + e.what());
  }
  auto base = fs::absolute(path).parent_path();
  return parse_run_config(j, base);
}

ordered_json canonical_json(const RunConfig& c) {
  ordered_json j;
  j["universe"] = c.universe;
  j["sector_map"] = c.sector_map;
  j["session"] = c.session.to_string();
  j["lags"] = LagGrid::parse(c.lags).canonical();
  j["modes"] = mode_names(c.modes);
  ordered_json in;
  if (!c.synth.empty()) {
    in["synth"] = c.synth;
  } else {
    in["trades"] = c.trades;
    in["quotes"] = c.quotes;
  }
  j["input"] = std::move(in);
  j["output"] = c.output;
  j["weighting"] = std::string(to_string(c.weighting));
  j["matrix_tau"] = c.matrix_tau;
  j["normalizer"] = std::string(to_string(c.normalizer));
  j["fit_split"] = c.fit_split;
  ordered_json r;
  r["log_tau"] = c.report.log_tau;
  r["overlay_modes"] = c.report.overlay_modes;
  r["display_scale"] = c.report.display_scale;
  r["clip_negative"] = c.report.clip_negative;
  j["report"] = std::move(r);
  return j;
}

void validate(const RunConfig& c) {
  auto must_exist = [&](const std::string& p, const char* what) {
    if (!fs::exists(c.resolve(p)))
      throw Error(Errc::config_error, std::string(what) + " not found: " + c.resolve(p).string());
  };
  if (c.sector_map.empty()) throw Error(Errc::config_error, "sector_map is required");
  must_exist(c.sector_map, "sector map");
  if (!c.universe.empty()) must_exist(c.universe, "universe file");
  if (!c.synth.empty()) must_exist(c.synth, "synth config");
  if (c.output.empty()) throw Error(Errc::config_error, "output directory is required");
  auto grid = LagGrid::parse(c.lags);
  grid.check_fits(c.session.len());
  if (!(c.report.display_scale > 0) || !std::isfinite(c.report.display_scale))
    throw Error(Errc::config_error, "display_scale must be positive");
  if (c.matrix_tau < 1 || c.matrix_tau >= c.session.len())
    throw Error(Errc::config_error, "matrix_tau must lie inside the session");
  if (c.fit_split < 1) throw Error(Errc::config_error, "fit_split must be positive");
  if (c.threads && *c.threads < 1) throw Error(Errc::config_error, "threads must be positive");

  auto sectors = SectorMap::read(c.resolve(c.sector_map));
  auto universe = c.universe.empty() ? sectors.symbols() : read_universe(c.resolve(c.universe));
  sectors.order(universe);
  if (!c.synth.empty()) {
    auto sc = read_synth_config(c.resolve(c.synth));
    if (!(sc.session == c.session))
      throw Error(Errc::config_error, "synth session differs from the run session");
    std::set<std::string> have;
    for (auto& s : sc.symbol_names()) have.insert(s);
    for (const auto& u : universe)
      if (!have.count(u)) throw Error(Errc::config_error, "universe symbol " + u + " is not generated by the synth config");
  }
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0)
    for (std::size_t k = 0; k < g.gl_pathc; ++k) out.emplace_back(g.gl_pathv[k]);
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw Error(Errc::io_error, "glob failed for " + pattern);
  std::sort(out.begin(), out.end());
  return out;
}

// --- stages --------------------------------------------------------------------

IngestReport stage_ingest(const std::vector<std::string>& trade_files,
                          const std::vector<std::string>& quote_files, const SessionBounds& bounds,
                          const std::vector<std::string>& universe, const fs::path& series_dir,
                          int threads) {
  if (trade_files.empty() && quote_files.empty()) throw Error(Errc::empty_input, "no input files");
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> groups;
  for (const auto& f : trade_files) groups[date_of_path(f)].first.push_back(f);
  for (const auto& f : quote_files) groups[date_of_path(f)].second.push_back(f);
  const std::set<std::string> keep(universe.begin(), universe.end());

  IngestReport total;
  std::size_t series_count = 0;
  for (auto& [date, files] : groups) {
    auto out = ingest_files(files.first, files.second, bounds);
    std::vector<const SecondSeries*> todo;
    for (const auto& s : out.series)
      if (keep.empty() || keep.count(s.symbol)) todo.push_back(&s);
    parallel_for(todo.size(), threads, [&](std::size_t k) {
      const auto& s = *todo[k];
      auto dir = series_dir / format_date(s.grid.date);
      std::ostringstream os;
      write_series(os, s);
      fs::create_directories(dir);
      write_text_file(dir / (s.symbol + ".csv"), os.str());
    });
    series_count += todo.size();
    merge_report(total, std::move(out.report));
  }
  std::sort(total.empty_days.begin(), total.empty_days.end());
  if (series_count == 0) throw Error(Errc::empty_input, "ingest produced no series");
  fs::create_directories(series_dir);
  write_text_file(series_dir / "ingest_report.json", report_json(total).dump(2) + "\n");
  return total;
}

void stage_signs(const fs::path& series_dir, const fs::path& signs_dir, int threads) {
  std::vector<std::pair<std::string, std::string>> todo;
  for (const auto& d : sorted_subdirs(series_dir))
    for (const auto& s : csv_stems(series_dir / d)) todo.emplace_back(d, s);
  if (todo.empty()) throw Error(Errc::missing_dependency, "no series under " + series_dir.string());
  for (const auto& d : sorted_subdirs(series_dir)) fs::create_directories(signs_dir / d);
  parallel_for(todo.size(), threads, [&](std::size_t k) {
    const auto& [d, s] = todo[k];
    std::istringstream in(read_text_file(series_dir / d / (s + ".csv")));
    auto signs = sign_series(read_series(in));
    std::ostringstream os;
    write_signs(os, signs);
    write_text_file(signs_dir / d / (s + ".csv"), os.str());
  });
}

std::size_t stage_respond(const fs::path& series_dir, const fs::path& signs_dir,
                          const EstimateOptions& opt, const fs::path& out_dir) {
  if (!fs::is_directory(series_dir)) throw Error(Errc::missing_dependency, "series directory " + series_dir.string());
  if (!fs::is_directory(signs_dir)) throw Error(Errc::missing_dependency, "signs directory " + signs_dir.string());
  return estimate({CurveKind::response, &series_dir, &signs_dir}, opt, out_dir);
}

std::size_t stage_correlate(const fs::path& signs_dir, const EstimateOptions& opt, const fs::path& out_dir) {
  if (!fs::is_directory(signs_dir)) throw Error(Errc::missing_dependency, "signs directory " + signs_dir.string());
  auto o = opt;
  o.matrix_tau.reset();
  return estimate({CurveKind::correlator, &signs_dir, &signs_dir}, o, out_dir);
}

PairCurves load_pair_curves(const fs::path& dir, const std::vector<std::string>& universe) {
  if (!fs::is_directory(dir)) throw Error(Errc::missing_dependency, "curve directory " + dir.string());
  PairCurves pc;
  pc.symbols = universe;
  std::vector<std::optional<LagCurve>> loaded(universe.size() * universe.size());
  parallel_for(loaded.size(), resolve_threads(std::nullopt), [&](std::size_t k) {
    PairKey key{universe[k / universe.size()], universe[k % universe.size()]};
    auto p = dir / (key.to_string() + ".csv");
    if (fs::exists(p)) loaded[k] = read_curve(p);
  });
  bool first = true;
  for (auto& c : loaded) {
    if (!c) continue;
    if (first) {
      pc.kind = c->meta.kind;
      pc.mode = c->meta.mode;
      first = false;
    }
    pc.insert(std::move(*c));
  }
  if (first) throw Error(Errc::missing_dependency, "no pair curves in " + dir.string());
  return pc;
}

namespace {

bool wanted(const std::vector<std::string>& what, const std::string& name) {
  return what.empty() || std::find(what.begin(), what.end(), name) != what.end();
}

void write_aggregate(const fs::path& stem, const LagCurve& c) {
  write_curve(stem, c, LagGrid::from_lags(c.lags).hash());
}

ordered_json matrix_sidecar(const NormalizedResponseMatrix& m, SignMode mode) {
  ordered_json j;
  j["format"] = "impactlab-matrix";
  j["version"] = 1;
  j["tau"] = m.tau;
  j["mode"] = std::string(to_string(mode));
  j["normalizer_mode"] = std::string(to_string(m.normalizer_mode));
  if (is_present(m.normalizer)) j["normalizer"] = m.normalizer;
  else j["normalizer"] = nullptr;
  j["ordering"] = m.ordering;
  j["sectors"] = m.sectors;
  return j;
}

}  // namespace

void stage_aggregate(const fs::path& curves_dir, const SectorMap& sectors, const AggregateOptions& opt,
                     const fs::path& out_dir) {
  auto universe = opt.universe.empty() ? sectors.symbols() : opt.universe;
  for (auto kind : {CurveKind::response, CurveKind::correlator}) {
    for (auto mode : opt.modes) {
      const auto src = curves_dir / std::string(to_string(kind)) / mode_dir(mode);
      const auto dst = out_dir / std::string(to_string(kind)) / mode_dir(mode);
      auto pc = load_pair_curves(src, universe);
      fs::create_directories(dst);

      std::vector<Selector> sels{{SelectorKind::self, {}}, {SelectorKind::cross, {}},
                                 {SelectorKind::intra, {}}, {SelectorKind::inter, {}}};
      std::map<std::string, int> per_sector;
      for (const auto& s : universe) ++per_sector[sectors.sector_of(s)];
      for (const auto& sec : gics_sectors()) {
        auto it = per_sector.find(sec);
        if (it == per_sector.end()) continue;
        sels.push_back({SelectorKind::sector_self, sec});
        if (it->second > 1) sels.push_back({SelectorKind::sector_cross, sec});
      }
      bool any_intra = false, any_inter = per_sector.size() > 1;
      for (auto& [sec, cnt] : per_sector) any_intra = any_intra || cnt > 1;

      for (const auto& sel : sels) {
        if (sel.kind == SelectorKind::intra && !any_intra) continue;
        if (sel.kind == SelectorKind::inter && !any_inter) continue;
        auto name = sel.name();
        const bool is_sector = sel.kind == SelectorKind::sector_self || sel.kind == SelectorKind::sector_cross;
        const auto file = is_sector ? slug(sel.kind == SelectorKind::sector_self ? "sector_self_" + sel.sector
                                                                                 : "sector_cross_" + sel.sector)
                                    : name;
        const auto short_name = sel.kind == SelectorKind::self    ? "market-self"
                                : sel.kind == SelectorKind::cross ? "market-cross"
                                : sel.kind == SelectorKind::intra ? "intra"
                                : sel.kind == SelectorKind::inter ? "inter"
                                                                  : "sector";
        if (!wanted(opt.what, short_name)) continue;
        write_aggregate(dst / file, market_average(pc, sel, &sectors));
      }

      if (kind != CurveKind::response) continue;
      if (universe.size() > 1) {
        if (wanted(opt.what, "passive")) {
          fs::create_directories(dst / "passive");
          for (const auto& s : universe) write_aggregate(dst / "passive" / s, passive_curve(pc, s));
        }
        if (wanted(opt.what, "active")) {
          fs::create_directories(dst / "active");
          for (const auto& s : universe) write_aggregate(dst / "active" / s, active_curve(pc, s));
        }
      }
      if (wanted(opt.what, "matrix")) {
        const auto tag = "matrix_tau" + std::to_string(opt.matrix_tau);
        ResponseMatrix raw;
        const auto raw_path = src / (tag + ".csv");
        if (fs::exists(raw_path)) {
          raw = parse_matrix_csv(read_text_file(raw_path));
          std::vector<std::string> missing;
          for (std::size_t k = 0; k < raw.values.size(); ++k)
            if (!is_present(raw.values[k]))
              missing.push_back(raw.symbols[k / raw.symbols.size()] + "__" + raw.symbols[k % raw.symbols.size()]);
          if (!missing.empty())
            throw Error(Errc::incomplete_universe, "response matrix has undefined entries", -1, missing);
          if (raw.symbols != universe) {
            std::map<std::string, std::size_t> pos;
            for (std::size_t k = 0; k < raw.symbols.size(); ++k) pos[raw.symbols[k]] = k;
            ResponseMatrix sub;
            sub.tau = raw.tau;
            sub.symbols = universe;
            for (const auto& a : universe)
              for (const auto& b : universe) {
                auto ia = pos.find(a), ib = pos.find(b);
                if (ia == pos.end() || ib == pos.end())
                  throw Error(Errc::incomplete_universe, "response matrix lacks " + a + "__" + b);
                sub.values.push_back(raw.at(ia->second, ib->second));
              }
            raw = std::move(sub);
          }
        } else {
          raw = matrix_at(pc, opt.matrix_tau);
        }
        auto norm = normalize_matrix(raw, sectors, opt.normalizer, &pc);
        write_text_file(dst / (tag + ".csv"), normalized_matrix_csv(norm));
        write_text_file(dst / (tag + ".json"), matrix_sidecar(norm, mode).dump(2) + "\n");
      }
    }
  }
}

void stage_fit(const fs::path& aggregates_dir, const std::vector<SignMode>& modes, int split,
               const fs::path& out_dir) {
  for (auto mode : modes) {
    const auto src = aggregates_dir / "correlator" / mode_dir(mode);
    const auto dst = out_dir / "correlator" / mode_dir(mode);
    fs::create_directories(dst);
    for (const char* name : {"market_self", "market_cross"}) {
      const auto path = src / (std::string(name) + ".csv");
      require_file(path, "correlator curve");
      auto curve = read_curve(path);
      ordered_json j;
      j["format"] = "impactlab-fit";
      j["version"] = 1;
      j["curve"] = std::string("aggregates/correlator/") + mode_dir(mode) + "/" + name + ".csv";
      try {
        j["fit"] = fit_report(fit_powerlaw(curve));
      } catch (const Error& e) {
        j["fit"] = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
      }
      ordered_json tw;
      tw["split"] = split;
      try {
        auto two = fit_two_windows(curve, split);
        tw["short"] = fit_report(two.short_lags);
        tw["long"] = fit_report(two.long_lags);
      } catch (const Error& e) {
        tw["error"] = std::string(to_string(e.code()));
        tw["message"] = e.what();
      }
      j["two_window"] = std::move(tw);
      write_text_file(dst / (std::string(name) + ".json"), j.dump(2) + "\n");
    }
  }
}

// --- figures ---------------------------------------------------------------------

double display_scaled(double v, double factor) {
  if (!is_present(v) || factor == 1.0) return v;
  const double w0 = v * factor;
  if (w0 / factor == v) return w0;
  double up = w0, down = w0;
  for (int step = 0; step < 16; ++step) {
    up = std::nextafter(up, INFINITY);
    if (up / factor == v) return up;
    down = std::nextafter(down, -INFINITY);
    if (down / factor == v) return down;
  }
  return w0;
}

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids{"market_self", "market_cross", "sectoral", "sign_self",
                                            "sign_cross",  "matrix",       "active_passive"};
  return ids;
}

namespace {

struct Column {
  std::string name;
  std::vector<double> values;
};

struct FigureData {
  std::string id;
  std::vector<int> lags;
  std::vector<Column> columns;
  std::vector<std::string> scaled;
  std::vector<std::string> sources;
  std::size_t inexact = 0;  // scaled values whose quotient misses the stored value
  ordered_json extra = ordered_json::object();
};

class FigureBuilder {
 public:
  FigureBuilder(const fs::path& work, const ReportOptions& report) : work_(work), report_(report) {}

  LagCurve curve(FigureData& fig, const std::string& rel) {
    auto p = work_ / rel;
    if (!fs::exists(p)) throw Error(Errc::missing_dependency, "figure " + fig.id + " needs " + rel);
    auto c = read_curve(p);
    if (fig.lags.empty()) fig.lags = c.lags;
    if (c.lags != fig.lags) throw Error(Errc::domain_error, "figure " + fig.id + ": series lag grids differ");
    fig.sources.push_back(rel);
    return c;
  }

  // Adds value and dispersion columns; undefined lags stay empty.
  void add(FigureData& fig, const std::string& name, const LagCurve& c, bool scale) {
    Column v{name, {}}, d{name + "_dispersion", {}};
    const double f = scale ? report_.display_scale : 1.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      const double w = c.defined(k) ? display_scaled(c.value[k], f) : kMissing;
      if (c.defined(k) && w / f != c.value[k]) ++fig.inexact;
      v.values.push_back(w);
      d.values.push_back(c.defined(k) ? c.dispersion[k] : kMissing);
    }
    if (scale && f != 1.0) fig.scaled.push_back(name);
    fig.columns.push_back(std::move(v));
    fig.columns.push_back(std::move(d));
  }

  void write(const FigureData& fig, const fs::path& out_dir, const std::string& file) const {
    std::string csv = "# impactlab-figure v1 id=" + fig.id + "\ntau";
    for (const auto& c : fig.columns) csv += "," + c.name;
    csv += "\n";
    for (std::size_t k = 0; k < fig.lags.size(); ++k) {
      append_int(csv, fig.lags[k]);
      for (const auto& c : fig.columns) {
        csv += ',';
        if (is_present(c.values[k])) append_double(csv, c.values[k]);
      }
      csv += '\n';
    }
    ordered_json j;
    j["format"] = "impactlab-figure";
    j["version"] = 1;
    j["id"] = fig.id;
    j["n_lags"] = fig.lags.size();
    std::vector<std::string> names;
    for (const auto& c : fig.columns) names.push_back(c.name);
    j["columns"] = names;
    j["log_tau"] = report_.log_tau;
    j["display_scale"] = fig.scaled.empty() ? 1.0 : report_.display_scale;
    j["scaled_columns"] = fig.scaled;
    j["scale_inexact"] = fig.inexact;
    j["sources"] = fig.sources;
    for (const auto& [k, v] : fig.extra.items()) j[k] = v;
    fs::create_directories(out_dir);
    write_text_file(out_dir / (file + ".csv"), csv);
    write_text_file(out_dir / (file + ".json"), j.dump(2) + "\n");
  }

  const ReportOptions& report() const { return report_; }
  const fs::path& work() const { return work_; }

 private:
  fs::path work_;
  ReportOptions report_;
};

std::string agg_path(const char* kind, SignMode m, const std::string& name) {
  return std::string("aggregates/") + kind + "/" + mode_dir(m) + "/" + name + ".csv";
}

// Builds one dataset per mode group: all modes together when overlaid.
template <class Fn>
void per_mode_group(const std::string& id, const std::vector<SignMode>& modes, const FigureBuilder& b,
                    const fs::path& out_dir, Fn&& fill) {
  if (b.report().overlay_modes) {
    FigureData fig;
    fig.id = id;
    for (auto m : modes) fill(fig, m, std::string(to_string(m)));
    b.write(fig, out_dir, id);
    return;
  }
  for (auto m : modes) {
    FigureData fig;
    fig.id = id;
    fill(fig, m, std::string(to_string(m)));
    b.write(fig, out_dir, id + "_" + mode_dir(m));
  }
}

}  // namespace

void emit_figure_data(const std::string& id, const fs::path& work, const std::vector<SignMode>& modes,
                      int matrix_tau, const ReportOptions& report, const fs::path& out_dir) {
  FigureBuilder b(work, report);
  auto scale_for = [](SignMode m) { return m == SignMode::include_zero; };

  if (id == "market_self" || id == "market_cross") {
    per_mode_group(id, modes, b, out_dir, [&](FigureData& fig, SignMode m, const std::string& tag) {
      b.add(fig, tag, b.curve(fig, agg_path("response", m, id)), scale_for(m));
    });
  } else if (id == "sectoral") {
    per_mode_group(id, modes, b, out_dir, [&](FigureData& fig, SignMode m, const std::string& tag) {
      b.add(fig, "intra_" + tag, b.curve(fig, agg_path("response", m, "intra_sector")), scale_for(m));
      b.add(fig, "inter_" + tag, b.curve(fig, agg_path("response", m, "inter_sector")), scale_for(m));
    });
  } else if (id == "sign_self" || id == "sign_cross") {
    const std::string name = id == "sign_self" ? "market_self" : "market_cross";
    per_mode_group(id, modes, b, out_dir, [&](FigureData& fig, SignMode m, const std::string& tag) {
      auto c = b.curve(fig, agg_path("correlator", m, name));
      b.add(fig, tag, c, false);
      const auto rel = "fits/correlator/" + mode_dir(m) + "/" + name + ".json";
      if (!fs::exists(work / rel)) throw Error(Errc::missing_dependency, "figure " + id + " needs " + rel);
      auto fj = json::parse(read_text_file(work / rel));
      fig.sources.push_back(rel);
      Column fitcol{tag + "_fit", std::vector<double>(c.size(), kMissing)};
      if (!fj.at("fit").contains("error")) {
        auto fit = parse_fit_report(fj.at("fit"));
        for (std::size_t k = 0; k < c.size(); ++k) fitcol.values[k] = eval_model(fit.params, c.lags[k]);
        fig.extra["fits"][tag] = fj.at("fit");
      } else {
        fig.extra["fits"][tag] = nullptr;
      }
      fig.columns.push_back(std::move(fitcol));
    });
  } else if (id == "matrix") {
    const auto tag = "matrix_tau" + std::to_string(matrix_tau);
    for (auto m : modes) {
      const auto base = "aggregates/response/" + mode_dir(m) + "/" + tag;
      for (const char* ext : {".csv", ".json"})
        if (!fs::exists(work / (base + ext)))
          throw Error(Errc::missing_dependency, "figure matrix needs " + base + ext);
      auto side = json::parse(read_text_file(work / (base + ".json")));
      ordered_json meta;
      meta["format"] = "impactlab-figure";
      meta["version"] = 1;
      meta["id"] = "matrix";
      meta["mode"] = mode_dir(m);
      meta["tau"] = side.at("tau");
      meta["normalizer_mode"] = side.at("normalizer_mode");
      meta["normalizer"] = side.at("normalizer");
      meta["ordering"] = side.at("ordering");
      meta["sectors"] = side.at("sectors");
      meta["sources"] = {base + ".csv"};
      fs::create_directories(out_dir);
      write_text_file(out_dir / ("matrix_" + mode_dir(m) + ".csv"), read_text_file(work / (base + ".csv")));
      write_text_file(out_dir / ("matrix_" + mode_dir(m) + ".json"), meta.dump(2) + "\n");
    }
  } else if (id == "active_passive") {
    for (auto m : modes) {
      FigureData fig;
    fig.id = id;
      for (const char* side : {"passive", "active"}) {
        const auto dir = "aggregates/response/" + mode_dir(m) + "/" + side;
        auto stems = csv_stems(work / dir);
        if (stems.empty()) throw Error(Errc::missing_dependency, "figure active_passive needs " + dir);
        for (const auto& s : stems) {
          auto c = b.curve(fig, dir + "/" + s + ".csv");
          Column v{std::string(side) + "_" + s, {}};
          for (std::size_t k = 0; k < c.size(); ++k) {
            double x = c.defined(k) ? c.value[k] : kMissing;
            if (report.clip_negative && is_present(x) && x < 0) x = kMissing;
            v.values.push_back(x);
          }
          fig.columns.push_back(std::move(v));
        }
      }
      fig.extra["mode"] = mode_dir(m);
      fig.extra["clip_negative"] = report.clip_negative;
      if (fig.sources.size() > 8) {
        auto n = fig.sources.size();
        fig.sources = {"aggregates/response/" + mode_dir(m) + "/passive/*.csv",
                       "aggregates/response/" + mode_dir(m) + "/active/*.csv"};
        fig.extra["n_sources"] = n;
      }
      b.write(fig, out_dir, "active_passive_" + mode_dir(m));
    }
  } else {
    throw Error(Errc::config_error, "unknown figure id '" + id + "'");
  }
}

// --- orchestration -----------------------------------------------------------------

namespace {

struct StageDigest {
  std::size_t files = 0;
  std::uintmax_t bytes = 0;
  std::string digest;
  std::vector<std::pair<std::string, std::string>> entries;  // relative path, sha256
};

StageDigest digest_tree(const fs::path& work, const fs::path& dir, int threads) {
  StageDigest d;
  std::vector<fs::path> files;
  if (fs::exists(dir))
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
  std::vector<std::string> rel(files.size()), sums(files.size());
  for (std::size_t k = 0; k < files.size(); ++k) rel[k] = fs::relative(files[k], work).generic_string();
  parallel_for(files.size(), threads, [&](std::size_t k) { sums[k] = sha256_file(files[k]); });
  std::vector<std::size_t> order(files.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rel[a] < rel[b]; });
  std::string listing;
  for (auto k : order) {
    d.bytes += fs::file_size(files[k]);
    listing += sums[k] + "  " + rel[k] + "\n";
    d.entries.emplace_back(rel[k], sums[k]);
  }
  d.files = files.size();
  d.digest = sha256_hex(listing);
  return d;
}

template <class Fn>
void run_stage(const std::string& name, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + name + ": " + e.message(), e.row(), e.details());
  } catch (const std::exception& e) {
    throw Error(Errc::io_error, "stage " + name + ": " + e.what());
  }
}

}  // namespace

RunSummary run_pipeline(const RunConfig& cfg) {
  validate(cfg);
  const int threads = resolve_threads(cfg.threads);
  const auto work = cfg.resolve(cfg.output);
  const auto grid = LagGrid::parse(cfg.lags);
  auto sectors = SectorMap::read(cfg.resolve(cfg.sector_map));
  auto universe = cfg.universe.empty() ? sectors.symbols() : read_universe(cfg.resolve(cfg.universe));
  universe = [&] {
    auto u = universe;
    std::sort(u.begin(), u.end());
    return u;
  }();

  fs::create_directories(work);
  for (const char* d : {"input", "series", "signs", "curves", "aggregates", "fits", "figures"})
    fs::remove_all(work / d);
  fs::remove(work / "manifest.json");
  fs::remove(work / "checksums.sha256");

  std::vector<std::string> trades, quotes;
  ordered_json inputs = ordered_json::array();
  if (!cfg.synth.empty()) {
    run_stage("synth", [&] {
      auto sc = read_synth_config(cfg.resolve(cfg.synth));
      write_synth(generate(sc, threads), work / "input", threads);
    });
    trades = expand_glob((work / "input" / "trades_*.csv").string());
    quotes = expand_glob((work / "input" / "quotes_*.csv").string());
  } else {
    trades = expand_glob(cfg.resolve(cfg.trades).string());
    quotes = expand_glob(cfg.resolve(cfg.quotes).string());
  }
  if (trades.empty() || quotes.empty())
    throw Error(Errc::empty_input, "stage ingest: input globs matched no trades or no quotes");
  {
    std::vector<std::string> all(trades);
    all.insert(all.end(), quotes.begin(), quotes.end());
    std::vector<std::string> sums(all.size());
    parallel_for(all.size(), threads, [&](std::size_t k) { sums[k] = sha256_file(all[k]); });
    for (std::size_t k = 0; k < all.size(); ++k)
      inputs.push_back({{"file", fs::path(all[k]).filename().string()}, {"sha256", sums[k]}});
  }

  EstimateOptions est;
  est.grid = grid;
  est.modes = cfg.modes;
  est.weighting = cfg.weighting;
  est.universe = universe;
  est.threads = threads;

  IngestReport ingest_report;
  std::size_t response_files = 0, correlator_files = 0;
  run_stage("ingest", [&] {
    ingest_report = stage_ingest(trades, quotes, cfg.session, universe, work / "series", threads);
  });
  run_stage("signs", [&] { stage_signs(work / "series", work / "signs", threads); });
  run_stage("respond", [&] {
    auto o = est;
    o.matrix_tau = cfg.matrix_tau;
    response_files = stage_respond(work / "series", work / "signs", o, work / "curves" / "response");
  });
  run_stage("correlate", [&] {
    correlator_files = stage_correlate(work / "signs", est, work / "curves" / "correlator");
  });
  run_stage("aggregate", [&] {
    AggregateOptions ao;
    ao.modes = cfg.modes;
    ao.universe = universe;
    ao.matrix_tau = cfg.matrix_tau;
    ao.normalizer = cfg.normalizer;
    stage_aggregate(work / "curves", sectors, ao, work / "aggregates");
  });
  run_stage("fit", [&] { stage_fit(work / "aggregates", cfg.modes, cfg.fit_split, work / "fits"); });
  run_stage("figure", [&] {
    for (const auto& id : figure_ids())
      emit_figure_data(id, work, cfg.modes, cfg.matrix_tau, cfg.report, work / "figures");
  });

  const std::vector<std::pair<std::string, std::vector<std::string>>> stage_dirs{
      {"ingest", {"series"}},
      {"signs", {"signs"}},
      {"respond", {"curves/response"}},
      {"correlate", {"curves/correlator"}},
      {"aggregate", {"aggregates"}},
      {"fit", {"fits"}},
      {"figure", {"figures"}}};

  ordered_json m;
  m["format"] = "impactlab-manifest";
  m["version"] = kManifestVersion;
  auto canon = canonical_json(cfg);
  m["config_hash"] = sha256_hex(canon.dump());
  m["config"] = canon;
  m["lag_grid_hash"] = grid.hash();
  m["inputs"] = inputs;
  auto dates = sorted_subdirs(work / "series");
  ordered_json counts;
  counts["dates"] = dates.size();
  counts["symbols"] = universe.size();
  counts["pairs"] = universe.size() * universe.size();
  counts["lags"] = grid.size();
  counts["modes"] = cfg.modes.size();
  counts["response_curves"] = response_files;
  counts["correlator_curves"] = correlator_files;
  counts["trade_rows"] = ingest_report.trade_rows;
  counts["quote_rows"] = ingest_report.quote_rows;
  counts["empty_days"] = ingest_report.empty_days.size();
  m["counts"] = counts;
  m["dates"] = dates;

  std::string checksums;
  ordered_json stages = ordered_json::array();
  for (const auto& [name, dirs] : stage_dirs) {
    ordered_json s;
    s["name"] = name;
    s["outputs"] = dirs;
    std::size_t files = 0;
    std::uintmax_t bytes = 0;
    std::string combined;
    for (const auto& d : dirs) {
      auto dg = digest_tree(work, work / d, threads);
      files += dg.files;
      bytes += dg.bytes;
      combined += dg.digest;
      for (const auto& [rel, sum] : dg.entries) checksums += sum + "  " + rel + "\n";
    }
    s["digest"] = dirs.size() == 1 ? combined : sha256_hex(combined);
    s["files"] = files;
    s["bytes"] = bytes;
    stages.push_back(std::move(s));
  }
  m["stages"] = std::move(stages);
  write_text_file(work / "checksums.sha256", checksums);
  m["checksums_sha256"] = sha256_hex(checksums);
  write_text_file(work / "manifest.json", m.dump(2) + "\n");
  return {work, m};
}

}  // namespace impactlab
