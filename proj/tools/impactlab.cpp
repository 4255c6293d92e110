#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "impactlab/aggregation.hpp"
#include "impactlab/curve_io.hpp"
#include "impactlab/error.hpp"
#include "impactlab/fitting.hpp"
#include "impactlab/parallel.hpp"
#include "impactlab/pipeline.hpp"
#include "impactlab/series_io.hpp"
#include "impactlab/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace impactlab;

namespace {

std::vector<SignMode> parse_modes(const std::string& text) {
  if (text == "both") return {SignMode::include_zero, SignMode::exclude_zero};
  return {parse_sign_mode(text)};
}

std::vector<PairKey> parse_pairs(const std::string& spec, const std::vector<std::string>& universe) {
  std::vector<PairKey> out;
  if (spec == "all") return out;
  if (spec == "self" || spec == "cross") {
    for (const auto& i : universe)
      for (const auto& j : universe)
        if ((i == j) == (spec == "self")) out.push_back({i, j});
    return out;
  }
  std::string body = spec;
  if (body.rfind("list:", 0) == 0) body = body.substr(5);
  std::vector<std::string> items;
  if (fs::exists(body)) {
    std::istringstream in(read_text_file(body));
    for (std::string line; std::getline(in, line);)
      if (!line.empty() && line[0] != '#') items.push_back(line);
  } else {
    std::stringstream ss(body);
    for (std::string item; std::getline(ss, item, ',');) items.push_back(item);
  }
  for (auto item : items) {
    while (!item.empty() && (item.back() == '\r' || item.back() == ' ')) item.pop_back();
    auto sep = item.find("__");
    if (sep == std::string::npos) sep = item.find(':');
    if (sep == std::string::npos) throw Error(Errc::config_error, "pair '" + item + "' is not I__J");
    auto skip = item.compare(sep, 2, "__") == 0 ? 2 : 1;
    out.push_back({item.substr(0, sep), item.substr(sep + skip)});
  }
  if (out.empty()) throw Error(Errc::config_error, "pair list is empty");
  return out;
}

int fail(const Error& e) {
  std::cerr << "impactlab: " << e.what() << "\n";
  const auto& d = e.details();
  for (std::size_t k = 0; k < d.size() && k < 20; ++k) std::cerr << "  " << d[k] << "\n";
  if (d.size() > 20) std::cerr << "  ... " << d.size() - 20 << " more\n";
  return e.code() == Errc::config_error ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price response and trade-sign correlation analytics on a one-second grid"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (fallback: IMPACTLAB_THREADS)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Trades and quotes to per-second series");
  std::string trades, quotes, session = "09:40-15:50", out, universe_file;
  ingest->add_option("--trades", trades, "Trade file glob")->required();
  ingest->add_option("--quotes", quotes, "Quote file glob")->required();
  ingest->add_option("--session", session, "Session window HH:MM-HH:MM");
  ingest->add_option("--universe", universe_file, "Keep only these symbols");
  ingest->add_option("--out", out, "Series directory")->required();

  // signs
  auto* signs = app.add_subcommand("signs", "Series to per-second trade signs");
  std::string in_dir;
  signs->add_option("--in", in_dir, "Series directory")->required();
  signs->add_option("--out", out, "Signs directory")->required();

  // respond / correlate
  std::string pairs = "all", mode = "both", lags = "default", weighting = "equal_day", series_dir, signs_dir;
  std::optional<int> matrix_tau;
  auto add_estimate_opts = [&](CLI::App* sub) {
    sub->add_option("--in", in_dir, "Work directory holding series/ and signs/");
    sub->add_option("--signs", signs_dir, "Signs directory (default <in>/signs)");
    sub->add_option("--universe", universe_file, "Universe file, one symbol per line");
    sub->add_option("--pairs", pairs, "all | self | cross | list:<file or I__J,...>");
    sub->add_option("--mode", mode, "include | exclude | both");
    sub->add_option("--lags", lags, "default | log:LO:HI:COUNT | list:a,b,...");
    sub->add_option("--weighting", weighting, "equal_day | pooled");
    sub->add_option("--out", out, "Curve directory")->required();
  };
  auto* respond = app.add_subcommand("respond", "Self- and cross-response curves");
  add_estimate_opts(respond);
  respond->add_option("--series", series_dir, "Series directory (default <in>/series)");
  respond->add_option("--matrix-tau", matrix_tau, "Also write the raw response matrix at this lag");
  auto* correlate = app.add_subcommand("correlate", "Trade-sign self- and cross-correlators");
  add_estimate_opts(correlate);

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "Market, sector and stock level averages");
  std::string sector_map, normalizer = "global";
  std::vector<std::string> what;
  int tau = 30;
  aggregate->add_option("--in", in_dir, "Curve directory with response/ and correlator/")->required();
  aggregate->add_option("--sector-map", sector_map, "CSV symbol,sector")->required();
  aggregate->add_option("--universe", universe_file, "Universe file (default: sector map symbols)");
  aggregate->add_option("--what", what, "market-self market-cross intra inter sector active passive matrix");
  aggregate->add_option("--tau", tau, "Matrix lag");
  aggregate->add_option("--normalizer", normalizer, "global | per_pair");
  aggregate->add_option("--mode", mode, "include | exclude | both");
  aggregate->add_option("--out", out, "Aggregate directory")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Power-law fit of a correlator curve");
  std::string curve_path;
  std::optional<int> split;
  fit->add_option("--curve", curve_path, "Curve CSV")->required();
  fit->add_option("--split", split, "Also fit tau<=S and tau>S separately");
  fit->add_option("--out", out, "Write the JSON report here instead of stdout");

  // synth
  auto* synth = app.add_subcommand("synth", "Synthetic market with known ground truth");
  std::string config;
  synth->add_option("--config", config, "Synth config JSON")->required();
  synth->add_option("--out", out, "Output directory")->required();

  // figure
  auto* figure = app.add_subcommand("figure", "Plot-ready figure data");
  std::string fig_id = "all";
  figure->add_option("--what", fig_id, "Figure id or all");
  figure->add_option("--config", config, "Run config (work dir and report options)")->required();
  figure->add_option("--out", out, "Output directory (default <work>/figures)");

  // run
  auto* run = app.add_subcommand("run", "Full pipeline from a run config");
  run->add_option("--config", config, "Run config JSON")->required();
  run->add_option("--out", out, "Override the configured output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const int nthreads = resolve_threads(threads);
    if (*ingest) {
      std::vector<std::string> universe;
      if (!universe_file.empty()) universe = read_universe(universe_file);
      auto rep = stage_ingest(expand_glob(trades), expand_glob(quotes), SessionBounds::parse(session),
                              universe, out, nthreads);
      std::cout << "trades kept " << rep.trade_kept << " of " << rep.trade_rows << ", quotes kept "
                << rep.quote_kept << " of " << rep.quote_rows << ", empty days " << rep.empty_days.size()
                << "\n";
    } else if (*signs) {
      stage_signs(in_dir, out, nthreads);
    } else if (*respond || *correlate) {
      EstimateOptions opt;
      opt.grid = LagGrid::parse(lags);
      opt.modes = parse_modes(mode);
      opt.weighting = parse_weighting(weighting);
      if (!universe_file.empty()) opt.universe = read_universe(universe_file);
      opt.threads = nthreads;
      const fs::path root = in_dir.empty() ? fs::path(".") : fs::path(in_dir);
      const fs::path sg = signs_dir.empty() ? root / "signs" : fs::path(signs_dir);
      if (pairs != "all") {
        if (opt.universe.empty() && (pairs == "self" || pairs == "cross"))
          throw Error(Errc::config_error, "--pairs self|cross needs --universe");
        opt.pairs = parse_pairs(pairs, opt.universe);
        if (opt.universe.empty()) {
          std::set<std::string> u;
          for (const auto& p : opt.pairs) u.insert({p.i, p.j});
          opt.universe.assign(u.begin(), u.end());
        }
      }
      std::size_t n = 0;
      if (*respond) {
        opt.matrix_tau = matrix_tau;
        const fs::path se = series_dir.empty() ? root / "series" : fs::path(series_dir);
        n = stage_respond(se, sg, opt, out);
      } else {
        n = stage_correlate(sg, opt, out);
      }
      std::cout << n << " curves written to " << out << "\n";
    } else if (*aggregate) {
      auto sectors = SectorMap::read(sector_map);
      AggregateOptions opt;
      opt.modes = parse_modes(mode);
      if (!universe_file.empty()) opt.universe = read_universe(universe_file);
      opt.matrix_tau = tau;
      opt.normalizer = parse_normalizer(normalizer);
      opt.what = what;
      stage_aggregate(in_dir, sectors, opt, out);
    } else if (*fit) {
      auto curve = read_curve(curve_path);
      nlohmann::ordered_json j;
      j["format"] = "impactlab-fit";
      j["version"] = 1;
      j["curve"] = curve_path;
      j["fit"] = fit_report(fit_powerlaw(curve));
      if (split) {
        auto two = fit_two_windows(curve, *split);
        j["two_window"] = {{"split", *split}, {"short", fit_report(two.short_lags)}, {"long", fit_report(two.long_lags)}};
      }
      if (out.empty()) std::cout << j.dump(2) << "\n";
      else write_text_file(out, j.dump(2) + "\n");
    } else if (*synth) {
      auto cfg = read_synth_config(config);
      auto truth = generate(cfg, nthreads);
      write_synth(truth, out, nthreads);
      std::cout << truth.days.size() << " days of " << truth.symbols.size() << " symbols written to " << out << "\n";
    } else if (*figure) {
      auto cfg = read_run_config(config);
      const auto work = cfg.resolve(cfg.output);
      const fs::path dst = out.empty() ? work / "figures" : fs::path(out);
      if (fig_id == "all") {
        for (const auto& id : figure_ids()) emit_figure_data(id, work, cfg.modes, cfg.matrix_tau, cfg.report, dst);
      } else {
        emit_figure_data(fig_id, work, cfg.modes, cfg.matrix_tau, cfg.report, dst);
      }
    } else if (*run) {
      auto cfg = read_run_config(config);
      if (threads) cfg.threads = threads;
      if (!out.empty()) cfg.output = fs::absolute(out).string();
      auto summary = run_pipeline(cfg);
      std::cout << "run complete: " << summary.work.string() << "\n"
                << "config hash " << summary.manifest["config_hash"].get<std::string>() << "\n";
      for (const auto& s : summary.manifest["stages"])
        std::cout << "  " << s["name"].get<std::string>() << " " << s["files"].get<std::size_t>() << " files "
                  << s["digest"].get<std::string>().substr(0, 16) << "\n";
    }
  } catch (const Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    std::cerr << "impactlab: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
