#pragma once

// Market, sector and per-stock averages of pair curves, and the normalized
// response matrix.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "impactlab/estimators.hpp"

namespace impactlab {

/// The ten GICS sectors in the display order of the heat maps.
const std::vector<std::string>& gics_sectors();

class SectorMap {
 public:
  SectorMap() = default;

  /// CSV `symbol,sector`; header optional. Rejects unknown sector labels
  /// and duplicate symbols.
  static SectorMap parse(std::istream& in);
  static SectorMap read(const std::filesystem::path& path);

  void add(const std::string& symbol, const std::string& sector);
  bool contains(const std::string& symbol) const { return sector_.count(symbol) > 0; }
  const std::string& sector_of(const std::string& symbol) const;
  int sector_rank(const std::string& symbol) const;
  std::vector<std::string> symbols() const;

  /// Sector display order, then symbol. Throws incomplete_universe when a
  /// symbol has no sector.
  std::vector<std::string> order(std::vector<std::string> symbols) const;

 private:
  std::map<std::string, std::string> sector_;
};

/// Reads a universe file: one symbol per line, or the first column of a CSV
/// whose header starts with `symbol`. Blank lines and `#` comments skipped.
std::vector<std::string> read_universe(const std::filesystem::path& path);

/// Day-averaged pair curves of one kind and mode over a shared lag grid.
struct PairCurves {
  CurveKind kind = CurveKind::response;
  SignMode mode = SignMode::include_zero;
  std::vector<std::string> symbols;
  std::vector<int> lags;
  std::map<PairKey, LagCurve> curves;

  const LagCurve* find(const std::string& i, const std::string& j) const;
  void insert(LagCurve curve);
};

enum class SelectorKind { self, cross, intra, inter, sector_self, sector_cross };

struct Selector {
  SelectorKind kind = SelectorKind::self;
  std::string sector;

  /// `self`, `cross`, `intra`, `inter`, `sector_self:<sector>`,
  /// `sector_cross:<sector>`.
  static Selector parse(std::string_view text);
  std::string name() const;
};

/// self and sector_self average the diagonal curves. The cross selectors
/// take the literal double mean: inner over j in the selected set for fixed
/// i, outer over the i whose inner set is nonempty. Pairs undefined at a
/// lag are left out at that lag. dispersion is the population std across
/// the contributing unit curves and n_samples counts them.
/// Throws incomplete_universe listing the missing pairs.
LagCurve market_average(const PairCurves& curves, const Selector& selector,
                        const SectorMap* sectors = nullptr);

/// passive(i) = mean_{j != i} R_ij; active(j) = mean_{i != j} R_ij.
LagCurve passive_curve(const PairCurves& curves, const std::string& i);
LagCurve active_curve(const PairCurves& curves, const std::string& j);

/// Dense R_ij(tau), row i impacted, column j impacting, in `symbols` order.
struct ResponseMatrix {
  int tau = 0;
  std::vector<std::string> symbols;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * symbols.size() + j]; }
};

ResponseMatrix matrix_at(const PairCurves& curves, int tau);

enum class Normalizer { global, per_pair };
std::string_view to_string(Normalizer n);
Normalizer parse_normalizer(std::string_view text);

struct NormalizedResponseMatrix {
  int tau = 0;
  Normalizer normalizer_mode = Normalizer::global;
  double normalizer = 0.0;  // global mode; NaN in per-pair mode
  std::vector<std::string> ordering;
  std::vector<std::string> sectors;  // sector of each ordered symbol
  std::vector<double> rho;           // row-major over `ordering`

  double at(std::size_t i, std::size_t j) const { return rho[i * ordering.size() + j]; }
};

/// Global mode divides by max |R_kl(tau)| and throws all_zero when it is 0.
/// Per-pair mode divides each entry by max over lags of |R_ij|, taken over
/// `curves` and the entry itself; a pair that is zero everywhere maps to 0.
NormalizedResponseMatrix normalize_matrix(const ResponseMatrix& raw, const SectorMap& sectors,
                                          Normalizer mode = Normalizer::global,
                                          const PairCurves* curves = nullptr);
NormalizedResponseMatrix normalized_matrix(const PairCurves& curves, const SectorMap& sectors,
                                           int tau, Normalizer mode = Normalizer::global);

std::string matrix_csv(const ResponseMatrix& m);
ResponseMatrix parse_matrix_csv(const std::string& text);
std::string normalized_matrix_csv(const NormalizedResponseMatrix& m);

}  // namespace impactlab
