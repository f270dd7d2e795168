#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace ipm {

/// Piecewise-linear, non-decreasing count of vehicles that have passed a point.
/// Knot i holds the count at `times[i]` and the slope (veh/h) in force until the
/// next knot; the last slope extends to infinity.
class CumulativeCurve {
 public:
  CumulativeCurve() = default;
  explicit CumulativeCurve(double t0, double slope = 0.0) { times_ = {t0}; counts_ = {0.0}; slopes_ = {slope}; }

  bool empty() const { return times_.empty(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& counts() const { return counts_; }
  const std::vector<double>& slopes() const { return slopes_; }
  double start_time() const { return times_.front(); }
  double current_slope() const { return slopes_.back(); }

  /// Rounding can put coincident events a few ulps apart; closer than this
  /// they share a knot.
  static constexpr double kKnotSlack = 1e-12;

  /// Changes the slope from time t onward. Times must be non-decreasing.
  void set_slope(double t, double slope) {
    if (slope < 0.0) {
      throw std::domain_error("cumulative curve slope must be non-negative");
    }
    if (times_.empty()) {
      times_ = {t};
      counts_ = {0.0};
      slopes_ = {slope};
      return;
    }
    if (t < times_.back() && t >= times_.back() - kKnotSlack) {
      t = times_.back();
    }
    if (t < times_.back()) {
      throw std::logic_error("cumulative curve knots must be added in time order");
    }
    if (slope == slopes_.back()) {
      return;
    }
    if (t == times_.back()) {
      slopes_.back() = slope;
      return;
    }
    counts_.push_back(counts_.back() + slopes_.back() * (t - times_.back()));
    times_.push_back(t);
    slopes_.push_back(slope);
  }

  double value(double t) const {
    if (times_.empty() || t <= times_.front()) {
      return 0.0;
    }
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    auto i = static_cast<std::size_t>(std::distance(times_.begin(), it)) - 1;
    return counts_[i] + slopes_[i] * (t - times_[i]);
  }

  /// Earliest time at which the count reaches n. Throws when n is never
  /// reached within `horizon`.
  double inverse(double n, double horizon) const {
    if (times_.empty()) {
      throw std::out_of_range("empty cumulative curve");
    }
    if (n <= 0.0) {
      // first instant the curve starts rising
      for (std::size_t i = 0; i < times_.size(); ++i) {
        if (slopes_[i] > 0.0) {
          return times_[i];
        }
      }
      throw std::out_of_range("cumulative curve never rises");
    }
    for (std::size_t i = 0; i < times_.size(); ++i) {
      double end = i + 1 < times_.size() ? times_[i + 1] : horizon;
      double c_end = counts_[i] + slopes_[i] * (end - times_[i]);
      if (c_end >= n && slopes_[i] > 0.0) {
        double t = times_[i] + (n - counts_[i]) / slopes_[i];
        return std::clamp(t, times_[i], end);
      }
      if (i + 1 < times_.size() && counts_[i + 1] >= n) {
        return times_[i + 1];
      }
    }
    throw std::out_of_range("vehicle number beyond recorded history");
  }

 private:
  std::vector<double> times_;
  std::vector<double> counts_;
  std::vector<double> slopes_;
};

}  // namespace ipm
