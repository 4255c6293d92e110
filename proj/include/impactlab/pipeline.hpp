#pragma once

// Batch pipeline over a work directory:
//
//   series/<date>/<SYM>.csv                  ingest
//   signs/<date>/<SYM>.csv                   signs
//   curves/response/<mode>/<I>__<J>.csv      respond (+ .json sidecars,
//                                            matrix_tau<T>.csv raw matrix)
//   curves/correlator/<mode>/<I>__<J>.csv    correlate
//   aggregates/<kind>/<mode>/...             aggregate
//   fits/correlator/<mode>/<name>.json       fit
//   figures/<id>[_<mode>].{csv,json}         figure
//   manifest.json, checksums.sha256

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "impactlab/aggregation.hpp"
#include "impactlab/estimators.hpp"
#include "impactlab/lag_grid.hpp"
#include "impactlab/session.hpp"
#include "impactlab/taq_ingest.hpp"
#include "json.hpp"

namespace impactlab {

enum class Weighting { equal_day, pooled };
std::string_view to_string(Weighting w);
Weighting parse_weighting(std::string_view text);

struct ReportOptions {
  bool log_tau = true;
  bool overlay_modes = true;
  double display_scale = 1.0;  // applied to include-zero response series only
  bool clip_negative = false;  // active/passive figure data only
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string universe;            // optional; defaults to the sector map symbols
  std::string sector_map;
  SessionBounds session{};
  std::string lags = "default";
  std::vector<SignMode> modes{SignMode::include_zero, SignMode::exclude_zero};
  std::string trades;  // glob
  std::string quotes;  // glob
  std::string synth;   // optional synth config generating the inputs
  std::string output;
  std::optional<int> threads;
  Weighting weighting = Weighting::equal_day;
  int matrix_tau = 30;
  Normalizer normalizer = Normalizer::global;
  int fit_split = 300;
  ReportOptions report{};

  std::filesystem::path resolve(const std::string& p) const;
};

/// Strict: unknown keys anywhere are config errors.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig read_run_config(const std::filesystem::path& path);
/// Canonical form used for the config hash; the thread count is left out.
nlohmann::ordered_json canonical_json(const RunConfig& cfg);
/// Checks referenced files and option values before any compute.
void validate(const RunConfig& cfg);

/// POSIX glob, sorted; a pattern without wildcards must name a file.
std::vector<std::string> expand_glob(const std::string& pattern);

// --- stages ----------------------------------------------------------------

/// Universe filter is optional (empty keeps every symbol). Input files whose
/// names carry a YYYY-MM-DD date are processed one date at a time.
IngestReport stage_ingest(const std::vector<std::string>& trade_files,
                          const std::vector<std::string>& quote_files, const SessionBounds& bounds,
                          const std::vector<std::string>& universe,
                          const std::filesystem::path& series_dir, int threads);

void stage_signs(const std::filesystem::path& series_dir, const std::filesystem::path& signs_dir,
                 int threads);

struct EstimateOptions {
  LagGrid grid = LagGrid::default_grid();
  std::vector<SignMode> modes{SignMode::include_zero, SignMode::exclude_zero};
  Weighting weighting = Weighting::equal_day;
  std::vector<std::string> universe;  // empty: every symbol found
  std::vector<PairKey> pairs;         // empty: all ordered pairs
  std::optional<int> matrix_tau;      // responses only
  int threads = 1;
};

/// Returns the number of curve files written.
std::size_t stage_respond(const std::filesystem::path& series_dir,
                          const std::filesystem::path& signs_dir, const EstimateOptions& opt,
                          const std::filesystem::path& out_dir);
std::size_t stage_correlate(const std::filesystem::path& signs_dir, const EstimateOptions& opt,
                            const std::filesystem::path& out_dir);

/// Loads every pair curve of one kind and mode.
PairCurves load_pair_curves(const std::filesystem::path& dir, const std::vector<std::string>& universe);

struct AggregateOptions {
  std::vector<SignMode> modes{SignMode::include_zero, SignMode::exclude_zero};
  std::vector<std::string> universe;
  int matrix_tau = 30;
  Normalizer normalizer = Normalizer::global;
  std::vector<std::string> what;  // empty: everything
};

void stage_aggregate(const std::filesystem::path& curves_dir, const SectorMap& sectors,
                     const AggregateOptions& opt, const std::filesystem::path& out_dir);

void stage_fit(const std::filesystem::path& aggregates_dir, const std::vector<SignMode>& modes,
               int split, const std::filesystem::path& out_dir);

/// Figure ids: market_self, market_cross, sectoral, sign_self, sign_cross,
/// matrix, active_passive. Throws missing_dependency naming the absent file.
void emit_figure_data(const std::string& id, const std::filesystem::path& work,
                      const std::vector<SignMode>& modes, int matrix_tau,
                      const ReportOptions& report, const std::filesystem::path& out_dir);
const std::vector<std::string>& figure_ids();

/// Value stored in a scaled figure column: the double closest to v * factor
/// among those whose quotient by factor gives back v, when one exists.
double display_scaled(double v, double factor);

// --- orchestration ---------------------------------------------------------

struct RunSummary {
  std::filesystem::path work;
  nlohmann::ordered_json manifest;
};

/// Runs all seven stages and writes manifest.json and checksums.sha256.
RunSummary run_pipeline(const RunConfig& cfg);

}  // namespace impactlab
