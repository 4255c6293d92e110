#include "impactlab/signing.hpp"

#include "impactlab/error.hpp"
#include "impactlab/taq_ingest.hpp"

namespace impactlab {

std::vector<Sign> tick_signs(std::span<const double> prices) {
  std::vector<Sign> out(prices.size(), 0);
  for (std::size_t n = 1; n < prices.size(); ++n) {
    out[n] = prices[n] != prices[n - 1] ? sgn(prices[n] - prices[n - 1]) : out[n - 1];
  }
  return out;
}

SignSeries second_signs(std::span<const Sign> ticks, std::span<const std::uint32_t> cell_offsets,
                        std::string symbol, const SessionGrid& grid) {
  const int len = grid.len();
  if (static_cast<int>(cell_offsets.size()) != len + 1 || cell_offsets.back() != ticks.size())
    throw Error(Errc::format_error, "cell offsets do not match the grid and tick count");
  SignSeries out{std::move(symbol), grid, std::vector<Sign>(len, 0),
                 std::vector<std::uint32_t>(len, 0)};
  for (int t = 0; t < len; ++t) {
    int sum = 0;
    for (auto k = cell_offsets[t]; k < cell_offsets[t + 1]; ++k) sum += ticks[k];
    out.n_trades[t] = cell_offsets[t + 1] - cell_offsets[t];
    out.eps[t] = out.n_trades[t] > 0 ? sgn(sum) : Sign{0};
  }
  return out;
}

SignSeries sign_series(const SecondSeries& series) {
  auto ticks = tick_signs(series.trade_prices);
  return second_signs(ticks, series.cell_offsets, series.symbol, series.grid);
}

std::vector<std::uint8_t> zero_mask(const SignSeries& signs) {
  std::vector<std::uint8_t> mask(signs.eps.size());
  for (std::size_t t = 0; t < mask.size(); ++t) mask[t] = signs.eps[t] != 0;
  return mask;
}

}  // namespace impactlab
