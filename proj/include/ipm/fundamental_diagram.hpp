#pragma once

/// @file fundamental_diagram.hpp
/// @brief Flow-density relations and the regime arithmetic built on them.
///
/// Every diagram is stored as an ordered list of (density, flow) breakpoints.
/// A triangular diagram is the three-point special case. Units are veh/km for
/// density, veh/h for flow and km/h for speed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ipm {

/// Absolute tolerance used when classifying densities against branch boundaries.
inline constexpr double kDensityTol = 1e-9;
/// Absolute tolerance for flow comparisons.
inline constexpr double kFlowTol = 1e-9;

/// A traffic state on a fundamental diagram.
struct FlowRegime {
  double density = 0.0;  // veh/km
  double flow = 0.0;     // veh/h

  friend bool operator==(const FlowRegime&, const FlowRegime&) = default;
};

inline bool same_regime(const FlowRegime& a, const FlowRegime& b, double tol = kDensityTol) {
  return std::abs(a.density - b.density) <= tol && std::abs(a.flow - b.flow) <= tol;
}

enum class FdShape { Triangular, PiecewiseLinear };

struct Breakpoint {
  double density = 0.0;
  double flow = 0.0;
};

class FundamentalDiagram {
 public:
  FundamentalDiagram() = default;

  static FundamentalDiagram triangular(double max_flow, double critical_density, double jam_density) {
    if (!(critical_density > 0.0) || !(jam_density > critical_density) || !(max_flow > 0.0)) {
      throw std::invalid_argument("triangular diagram requires 0 < critical_density < jam_density and max_flow > 0");
    }
    FundamentalDiagram fd;
    fd.shape_ = FdShape::Triangular;
    fd.points_ = {{0.0, 0.0}, {critical_density, max_flow}, {jam_density, 0.0}};
    fd.finish();
    return fd;
  }

  /// Breakpoints must start at (0,0), end at (jam,0), have increasing densities
  /// and non-negative flows. Space-mean speed must be non-increasing and the
  /// flow must rise to a single maximum then fall (no concavity required).
  static FundamentalDiagram piecewise_linear(std::vector<Breakpoint> points) {
    if (points.size() < 3) {
      throw std::invalid_argument("piecewise-linear diagram needs at least three breakpoints");
    }
    if (points.front().density != 0.0 || points.front().flow != 0.0) {
      throw std::invalid_argument("first breakpoint must be (0, 0)");
    }
    if (points.back().flow != 0.0) {
      throw std::invalid_argument("last breakpoint must have zero flow (jam density)");
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].density > points[i - 1].density)) {
        throw std::invalid_argument("breakpoint densities must be strictly increasing");
      }
      if (points[i].flow < 0.0) {
        throw std::invalid_argument("breakpoint flows must be non-negative");
      }
    }
    FundamentalDiagram fd;
    fd.shape_ = FdShape::PiecewiseLinear;
    fd.points_ = std::move(points);
    fd.finish();
    return fd;
  }

  FdShape shape() const { return shape_; }
  double max_flow() const { return max_flow_; }
  double critical_density() const { return critical_density_; }
  double jam_density() const { return points_.back().density; }
  const std::vector<Breakpoint>& breakpoints() const { return points_; }

  /// Free speed, the limit of f(k)/k as k -> 0+.
  double free_speed() const { return free_speed_; }

  /// Largest |characteristic speed| over all segments; bounds every wave speed.
  double max_wave_speed() const { return max_wave_speed_; }

  double flow_at(double k) const {
    k = check_domain(k);
    auto seg = segment_of(k);
    const auto& a = points_[seg];
    const auto& b = points_[seg + 1];
    return a.flow + (b.flow - a.flow) * (k - a.density) / (b.density - a.density);
  }

  double speed_at(double k) const {
    k = check_domain(k);
    if (k <= 0.0) {
      return free_speed_;
    }
    return flow_at(k) / k;
  }

  /// Receiving capacity of a link whose upstream end is at density k.
  double inflow_capacity(double k) const {
    k = check_domain(k);
    if (k <= critical_density_ + kDensityTol) {
      return max_flow_;
    }
    return flow_at(k);
  }

  /// Sending flow of a link whose downstream end is at density k.
  double sending_flow(double k) const {
    k = check_domain(k);
    if (k <= critical_density_ + kDensityTol) {
      return flow_at(k);
    }
    return max_flow_;
  }

  bool is_congested(double k) const { return k > critical_density_ + kDensityTol; }

  FlowRegime regime(double k) const { return {k, flow_at(k)}; }

  /// Free-branch state carrying `flow` (smallest density achieving it).
  FlowRegime free_regime(double flow) const {
    if (flow < -kFlowTol || flow > max_flow_ + kFlowTol) {
      throw std::domain_error("flow outside [0, max_flow]: " + std::to_string(flow));
    }
    flow = std::clamp(flow, 0.0, max_flow_);
    if (flow >= max_flow_) {
      return {critical_density_, flow};
    }
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      const auto& a = points_[i];
      const auto& b = points_[i + 1];
      if (b.density > critical_density_ + kDensityTol) {
        break;
      }
      if (flow >= a.flow && flow <= b.flow && b.flow > a.flow) {
        double k = a.density + (flow - a.flow) * (b.density - a.density) / (b.flow - a.flow);
        return {k, flow};
      }
    }
    return {critical_density_, flow};
  }

  /// Congested-branch state carrying `flow` (largest density achieving it).
  FlowRegime congested_regime(double flow) const {
    if (flow < -kFlowTol || flow > max_flow_ + kFlowTol) {
      throw std::domain_error("flow outside [0, max_flow]: " + std::to_string(flow));
    }
    flow = std::clamp(flow, 0.0, max_flow_);
    if (flow >= max_flow_) {
      return {critical_density_, flow};
    }
    for (std::size_t i = points_.size() - 1; i > 0; --i) {
      const auto& a = points_[i - 1];
      const auto& b = points_[i];
      if (a.density < critical_density_ - kDensityTol) {
        break;
      }
      if (flow <= a.flow && flow >= b.flow && a.flow > b.flow) {
        double k = a.density + (a.flow - flow) * (b.density - a.density) / (a.flow - b.flow);
        return {k, flow};
      }
    }
    return {critical_density_, flow};
  }

 private:
  double check_domain(double k) const {
    if (k < -kDensityTol || k > jam_density() + kDensityTol || std::isnan(k)) {
      throw std::domain_error("density outside [0, jam_density]: " + std::to_string(k));
    }
    return std::clamp(k, 0.0, jam_density());
  }

  std::size_t segment_of(double k) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), k,
                               [](double v, const Breakpoint& p) { return v < p.density; });
    auto idx = static_cast<std::size_t>(std::distance(points_.begin(), it));
    if (idx == 0) {
      return 0;
    }
    return std::min(idx - 1, points_.size() - 2);
  }

  void finish() {
    max_flow_ = 0.0;
    critical_density_ = 0.0;
    for (const auto& p : points_) {
      if (p.flow > max_flow_) {
        max_flow_ = p.flow;
        critical_density_ = p.density;
      }
    }
    if (!(max_flow_ > 0.0)) {
      throw std::invalid_argument("diagram has no positive flow");
    }
    // Unimodal: non-decreasing up to the critical density, non-increasing after.
    for (std::size_t i = 1; i < points_.size(); ++i) {
      bool rising = points_[i].density <= critical_density_;
      double d = points_[i].flow - points_[i - 1].flow;
      if ((rising && d < 0.0) || (!rising && d > 0.0)) {
        throw std::invalid_argument("flow must rise to a single maximum and then fall");
      }
    }
    // Space-mean speed non-increasing: each segment's flow intercept is >= 0.
    max_wave_speed_ = 0.0;
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      const auto& a = points_[i];
      const auto& b = points_[i + 1];
      double slope = (b.flow - a.flow) / (b.density - a.density);
      double intercept = a.flow - slope * a.density;
      if (intercept < -1e-9 * std::max(1.0, max_flow_)) {
        throw std::invalid_argument("space-mean speed must be non-increasing in density");
      }
      max_wave_speed_ = std::max(max_wave_speed_, std::abs(slope));
    }
    free_speed_ = points_[1].flow / points_[1].density;
  }

  FdShape shape_ = FdShape::Triangular;
  std::vector<Breakpoint> points_;
  double max_flow_ = 0.0;
  double critical_density_ = 0.0;
  double free_speed_ = 0.0;
  double max_wave_speed_ = 0.0;
};

}  // namespace ipm
