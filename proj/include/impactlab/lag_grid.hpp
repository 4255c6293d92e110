#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace impactlab {

/// Strictly increasing, non-negative integer lags in seconds. Lag 0 is
/// accepted for the zero-lag correlator; response estimators require >= 1.
class LagGrid {
 public:
  LagGrid() = default;

  static LagGrid from_lags(std::vector<int> lags);

  /// `count` lags from `lo` to `hi`, log-spaced and rounded; a rounded lag
  /// that would repeat its predecessor is bumped by one second.
  static LagGrid log_spaced(int lo, int hi, int count);

  /// 60 lags spanning 1..10000 s.
  static LagGrid default_grid() { return log_spaced(1, 10000, 60); }

  /// `default`, `log:LO:HI:COUNT`, `list:1,2,5` or a bare comma list.
  static LagGrid parse(std::string_view spec);

  std::span<const int> lags() const { return lags_; }
  std::size_t size() const { return lags_.size(); }
  int operator[](std::size_t k) const { return lags_[k]; }
  int max_lag() const { return lags_.back(); }
  int min_lag() const { return lags_.front(); }

  /// Index of `tau` in the grid or -1.
  int index_of(int tau) const;

  /// Throws config_error unless max_lag() < len.
  void check_fits(int len) const;

  /// Canonical `list:` spec and a short content hash of it.
  std::string canonical() const;
  std::string hash() const;

  friend bool operator==(const LagGrid&, const LagGrid&) = default;

 private:
  std::vector<int> lags_;
};

}  // namespace impactlab
