#pragma once

// Seeded synthetic market: metaorder-driven trade signs and transient-impact
// midpoints, written in the same trade/quote CSV schema the ingest reads.
//
// Randomness comes from std::mt19937_64 substreams seeded with
// std::seed_seq{seed, symbol, day, stream}; uniform and normal variates are
// derived by hand so output bytes do not depend on the standard library.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "impactlab/estimators.hpp"
#include "impactlab/session.hpp"
#include "impactlab/signing.hpp"
#include "json.hpp"

namespace impactlab {

struct ImpactKernel {
  double g0 = 0.001;
  double tau0 = 10.0;
  double beta = 0.5;

  /// G(u) = g0 / (1 + u/tau0)^beta.
  double operator()(double u) const;
};

struct SynthConfig {
  int n_symbols = 3;
  int n_days = 1;
  SessionBounds session{};
  Date start_date{std::chrono::year{2008}, std::chrono::month{1}, std::chrono::day{2}};
  std::uint64_t seed = 1;
  std::vector<std::string> symbols;  // empty: S00, S01, ...

  double metaorder_rate = 0.01;
  double metaorder_length_exponent = 2.5;
  int metaorder_length_min = 1;
  int metaorder_length_max = 5000;
  double participation = 0.5;
  /// Seconds simulated before the session opens so that metaorders and
  /// their impact are already in steady state at the first cell.
  int warmup_s = 0;

  ImpactKernel impact{};
  double cross_impact = 1.0;  // scale of the cross kernels c_ij * G
  /// c[i][j]: probability that j's own sign is added to i's sum each second.
  std::vector<std::vector<double>> cross_coupling;
  double noise_std = 0.0;

  double initial_price = 100.0;
  double half_spread = 0.005;

  std::vector<std::string> symbol_names() const;
  double coupling(int i, int j) const;
};

/// Strict: unknown keys are rejected. `cross_coupling` may be a number
/// (every off-diagonal entry) or an n_symbols x n_symbols matrix.
SynthConfig parse_synth_config(const nlohmann::json& j);
SynthConfig read_synth_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const SynthConfig& cfg);

/// Throws config_error on invariant violations, including parameter sets
/// whose worst-case drift plus six noise standard deviations could reach
/// a non-positive price.
void validate(const SynthConfig& cfg);

/// Weekday dates starting at cfg.start_date.
std::vector<Date> synth_dates(const SynthConfig& cfg);

/// Decorrelated substream for one (symbol, day, purpose).
class SynthRng {
 public:
  SynthRng(std::uint64_t seed, std::uint64_t symbol, std::uint64_t day, std::uint64_t stream);
  double uniform();  // [0, 1)
  double normal();   // Box-Muller
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct Metaorder {
  int start = 0;
  int length = 1;
  int direction = 1;
};

/// Bernoulli(rate) arrivals per second, lengths with pdf proportional to
/// L^-alpha on [min, max], fair-coin directions.
std::vector<Metaorder> draw_metaorders(const SynthConfig& cfg, int len, SynthRng& rng);

/// Per-second sum of emitted child-order signs: every live metaorder emits
/// its direction with probability `participation`. `active[t]` records
/// whether anything was emitted.
std::vector<int> emit_child_orders(int len, std::span<const Metaorder> orders, double participation,
                                   SynthRng& rng, std::vector<std::uint8_t>* active = nullptr);

struct SynthDay {
  Date date{};
  std::vector<std::vector<Sign>> warmup_eps;   // [symbol][warm-up second]
  std::vector<std::vector<Sign>> eps;          // [symbol][t]
  std::vector<std::vector<std::uint8_t>> busy;  // [symbol][t], trades occur
  std::vector<std::vector<double>> mid;        // [symbol][t]
};

struct SynthTruth {
  SynthConfig config;
  std::vector<std::string> symbols;
  std::vector<SynthDay> days;
  std::vector<double> kernel;  // G(u), u = 0 .. warmup + len - 1

  SessionGrid grid(std::size_t day) const { return SessionGrid::make(days[day].date, config.session); }
  DayPanel panel(std::size_t day) const;
  SignSeries sign_series(std::size_t day, std::size_t symbol) const;
  SecondSeries second_series(std::size_t day, std::size_t symbol) const;
};

/// Signs for every symbol-day (midpoints left empty).
SynthTruth gen_signs(const SynthConfig& cfg, int threads = 1);
/// Fills the midpoints: m(t) = m0 + sum_{s<t} G(t-s) f(s) + noise walk,
/// f(s) = eps_i(s) + cross_impact * sum_j c_ij eps_j(s).
void gen_prices(SynthTruth& truth, int threads = 1);
SynthTruth generate(const SynthConfig& cfg, int threads = 1);

/// sum_{s<t} kernel[t-s] * forcing[s] for t in [0, n).
std::vector<double> convolve_causal(std::span<const double> forcing, std::span<const double> kernel);

/// trades_<date>.csv, quotes_<date>.csv per day and truth.json.
void write_synth(const SynthTruth& truth, const std::filesystem::path& dir, int threads = 1);
nlohmann::ordered_json truth_json(const SynthTruth& truth);

/// Day-averaged response R_ij(tau) by brute force over the realized series.
/// Throws instance_too_large beyond 3 symbols, 2000 s or 20 days.
double expected_response_oracle(const SynthTruth& truth, std::size_t i, std::size_t j, int tau,
                                SignMode mode = SignMode::include_zero);

}  // namespace impactlab
