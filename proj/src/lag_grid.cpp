#include "impactlab/lag_grid.hpp"

#include <algorithm>
#include <cmath>

#include "impactlab/error.hpp"
#include "impactlab/hash.hpp"
#include "impactlab/text.hpp"

namespace impactlab {

LagGrid LagGrid::from_lags(std::vector<int> lags) {
  if (lags.empty()) throw Error(Errc::config_error, "lag grid is empty");
  for (std::size_t k = 0; k < lags.size(); ++k) {
    if (lags[k] < 0) throw Error(Errc::config_error, "lags must be non-negative");
    if (k > 0 && lags[k] <= lags[k - 1])
      throw Error(Errc::config_error, "lags must be strictly increasing");
  }
  LagGrid g;
  g.lags_ = std::move(lags);
  return g;
}

LagGrid LagGrid::log_spaced(int lo, int hi, int count) {
  if (lo < 1 || hi < lo || count < 1 || count > hi - lo + 1)
    throw Error(Errc::config_error, "log lag grid needs 1 <= lo <= hi and 1 <= count <= hi-lo+1");
  std::vector<int> lags;
  lags.reserve(count);
  const double a = std::log(static_cast<double>(lo));
  const double b = std::log(static_cast<double>(hi));
  for (int k = 0; k < count; ++k) {
    double x = count == 1 ? a : a + (b - a) * k / (count - 1);
    int lag = static_cast<int>(std::lround(std::exp(x)));
    if (k == count - 1) lag = hi;
    if (!lags.empty() && lag <= lags.back()) lag = lags.back() + 1;
    lags.push_back(lag);
  }
  if (lags.back() != hi) throw Error(Errc::config_error, "log lag grid too dense for its range");
  return from_lags(std::move(lags));
}

LagGrid LagGrid::parse(std::string_view spec) {
  spec = trim(spec);
  if (spec.empty() || spec == "default") return default_grid();
  std::vector<std::string_view> parts;
  if (spec.substr(0, 4) == "log:") {
    split_fields(spec.substr(4), ':', parts);
    if (parts.size() != 3) throw Error(Errc::config_error, "log spec is log:LO:HI:COUNT");
    auto lo = parse_int(parts[0]), hi = parse_int(parts[1]), n = parse_int(parts[2]);
    if (!lo || !hi || !n) throw Error(Errc::config_error, "bad number in lag spec");
    return log_spaced(static_cast<int>(*lo), static_cast<int>(*hi), static_cast<int>(*n));
  }
  if (spec.substr(0, 5) == "list:") spec.remove_prefix(5);
  split_fields(spec, ',', parts);
  std::vector<int> lags;
  for (auto p : parts) {
    auto v = parse_int(p);
    if (!v) throw Error(Errc::config_error, "bad lag '" + std::string(p) + "'");
    lags.push_back(static_cast<int>(*v));
  }
  return from_lags(std::move(lags));
}

int LagGrid::index_of(int tau) const {
  auto it = std::lower_bound(lags_.begin(), lags_.end(), tau);
  return it != lags_.end() && *it == tau ? static_cast<int>(it - lags_.begin()) : -1;
}

void LagGrid::check_fits(int len) const {
  if (lags_.empty() || max_lag() >= len)
    throw Error(Errc::config_error, "largest lag " + std::to_string(lags_.empty() ? 0 : max_lag()) +
                                        " must be below the session length " + std::to_string(len));
}

std::string LagGrid::canonical() const {
  std::string s = "list:";
  for (std::size_t k = 0; k < lags_.size(); ++k) {
    if (k) s += ',';
    s += std::to_string(lags_[k]);
  }
  return s;
}

std::string LagGrid::hash() const { return sha256_hex(canonical()).substr(0, 16); }

}  // namespace impactlab
