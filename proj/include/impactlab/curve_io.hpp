#pragma once

// Curve files: a versioned CSV with one row per lag and a JSON sidecar that
// carries the metadata.
//
//   # impactlab-curve v1 kind=response mode=include_zero
//   tau,value,dispersion,n_samples
//   1,0.000123,4.5e-05,250
//
// Undefined values (n_samples == 0) are written as empty fields.

#include <filesystem>
#include <string>

#include "impactlab/estimators.hpp"
#include "json.hpp"

namespace impactlab {

std::string curve_csv(const LagCurve& curve);
LagCurve parse_curve_csv(const std::string& text);

nlohmann::ordered_json curve_sidecar(const LagCurve& curve, const std::string& lag_grid_hash);
/// Fills pair, kind, mode, aggregate, dates and weighting from a sidecar.
void apply_sidecar(LagCurve& curve, const nlohmann::json& sidecar);

/// Writes `<stem>.csv` and `<stem>.json`.
void write_curve(const std::filesystem::path& stem, const LagCurve& curve,
                 const std::string& lag_grid_hash);
/// Reads a curve CSV and, when present, the sidecar next to it.
LagCurve read_curve(const std::filesystem::path& csv_path);

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix);

}  // namespace impactlab
