#pragma once

// Tick-rule trade signs and their per-second aggregation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "impactlab/session.hpp"

namespace impactlab {

struct SecondSeries;

using Sign = std::int8_t;

constexpr Sign sgn(double x) { return static_cast<Sign>((x > 0) - (x < 0)); }

/// Per-trade signs of one symbol-day in trade order. A trade takes the sign
/// of its price change and inherits the previous sign when the price is
/// unchanged; the day's first trade has no predecessor and gets 0.
std::vector<Sign> tick_signs(std::span<const double> prices);

/// One ternary sign per grid cell; mode (include/exclude zero) is applied by
/// consumers through zero_mask(), never stored here.
struct SignSeries {
  std::string symbol;
  SessionGrid grid;
  std::vector<Sign> eps;
  std::vector<std::uint32_t> n_trades;

  int len() const { return grid.len(); }
};

/// eps[t] = Sgn(sum of the cell's tick signs) when the cell has trades, 0
/// otherwise. `cell_offsets` has len+1 entries indexing into `ticks`.
SignSeries second_signs(std::span<const Sign> ticks, std::span<const std::uint32_t> cell_offsets,
                        std::string symbol, const SessionGrid& grid);

/// tick_signs over the day followed by second_signs.
SignSeries sign_series(const SecondSeries& series);

/// mask[t] = eps[t] != 0.
std::vector<std::uint8_t> zero_mask(const SignSeries& signs);

}  // namespace impactlab
