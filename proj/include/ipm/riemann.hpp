#pragma once

/// @file riemann.hpp
/// @brief Wave decomposition of a jump between two regimes on a piecewise-linear
/// fundamental diagram.
///
/// A jump from an upstream state L to a downstream state R resolves into a fan
/// of discontinuities that follow the lower convex hull of f on [kL, kR] when
/// kL < kR, or the upper concave hull on [kR, kL] otherwise. For a concave
/// diagram the first case is a single shock and the second fans through every
/// breakpoint in between (queue discharge through capacity on a triangle).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ipm/fundamental_diagram.hpp"

namespace ipm {

/// One moving discontinuity: `upstream` is spatially behind it, `downstream` ahead.
struct Wave {
  FlowRegime upstream;
  FlowRegime downstream;
  double speed = 0.0;  // km/h, positive = downstream
};

/// Rankine-Hugoniot speed of the discontinuity between an upstream state `a`
/// and a downstream state `b`.
inline double shockwave_speed(const FlowRegime& a, const FlowRegime& b) {
  double dk = b.density - a.density;
  if (std::abs(dk) <= kDensityTol) {
    throw std::domain_error("degenerate wave: equal densities on both sides");
  }
  return (b.flow - a.flow) / dk;
}

namespace detail {

inline double cross(const FlowRegime& o, const FlowRegime& a, const FlowRegime& b) {
  return (a.density - o.density) * (b.flow - o.flow) - (a.flow - o.flow) * (b.density - o.density);
}

/// Hull vertices of the diagram restricted to [lo, hi]; endpoints use the given
/// states verbatim so the resulting wave speeds conserve the stored flows.
inline std::vector<FlowRegime> hull(const FundamentalDiagram& fd, const FlowRegime& lo,
                                    const FlowRegime& hi, bool lower) {
  std::vector<FlowRegime> pts;
  pts.push_back(lo);
  for (const auto& p : fd.breakpoints()) {
    if (p.density > lo.density + kDensityTol && p.density < hi.density - kDensityTol) {
      pts.push_back({p.density, p.flow});
    }
  }
  pts.push_back(hi);
  std::vector<FlowRegime> out;
  for (const auto& p : pts) {
    while (out.size() >= 2) {
      double c = cross(out[out.size() - 2], out.back(), p);
      // lower hull keeps left turns, upper hull keeps right turns; collinear points drop
      if ((lower && c <= 0.0) || (!lower && c >= 0.0)) {
        out.pop_back();
      } else {
        break;
      }
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

/// Waves resolving the jump (upstream `left`, downstream `right`), ordered from
/// upstream to downstream with non-decreasing speeds. Empty when the two
/// states coincide in density.
inline std::vector<Wave> solve_riemann(const FundamentalDiagram& fd, const FlowRegime& left,
                                       const FlowRegime& right) {
  std::vector<Wave> waves;
  if (std::abs(left.density - right.density) <= kDensityTol) {
    return waves;
  }
  std::vector<FlowRegime> states;
  if (left.density < right.density) {
    states = detail::hull(fd, left, right, true);
  } else {
    auto h = detail::hull(fd, right, left, false);
    states.assign(h.rbegin(), h.rend());
  }
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    waves.push_back({states[i], states[i + 1], shockwave_speed(states[i], states[i + 1])});
  }
  return waves;
}

}  // namespace ipm
