#pragma once

// Fine-grid Godunov scheme for a single homogeneous road with a piecewise-linear
// flow-density curve. Written against the raw breakpoints so it shares no code
// with the library's wave solver.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace oracle {

struct Curve {
  std::vector<std::pair<double, double>> pts;  // (density, flow), density ascending, ends at zero flow

  double flow(double k) const {
    k = std::clamp(k, 0.0, pts.back().first);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      if (k <= pts[i + 1].first) {
        const auto [k0, q0] = pts[i];
        const auto [k1, q1] = pts[i + 1];
        return q0 + (q1 - q0) * (k - k0) / (k1 - k0);
      }
    }
    return pts.back().second;
  }
  // Density of the flow maximum.
  double k_peak() const {
    auto it = std::max_element(pts.begin(), pts.end(), [](auto a, auto b) { return a.second < b.second; });
    return it->first;
  }
  double q_peak() const { return flow(k_peak()); }
  double demand(double k) const { return k <= k_peak() ? flow(k) : q_peak(); }
  double supply(double k) const { return k >= k_peak() ? flow(k) : q_peak(); }
  double max_slope() const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      s = std::max(s, std::abs((pts[i + 1].second - pts[i].second) / (pts[i + 1].first - pts[i].first)));
    }
    return s;
  }
};

inline Curve triangular(double qmax, double kc, double kj) { return {{{0.0, 0.0}, {kc, qmax}, {kj, 0.0}}}; }

/// Riemann problem on [x_lo, x_hi] with the jump at x_jump; constant
/// extrapolation at both ends. Returns cell-centre densities at time t.
struct Grid {
  double x_lo, dx;
  std::vector<double> k;

  double x(std::size_t i) const { return x_lo + (static_cast<double>(i) + 0.5) * dx; }
};

inline Grid godunov_riemann(const Curve& c, double k_left, double k_right, double x_jump, double x_lo, double x_hi,
                            double cell_km, double t_end, double cfl = 0.9) {
  const auto n = static_cast<std::size_t>(std::ceil((x_hi - x_lo) / cell_km));
  Grid g{x_lo, (x_hi - x_lo) / static_cast<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    // A cell straddling the jump gets the average.
    const double a = x_lo + static_cast<double>(i) * g.dx, b = a + g.dx;
    if (b <= x_jump) {
      g.k[i] = k_left;
    } else if (a >= x_jump) {
      g.k[i] = k_right;
    } else {
      g.k[i] = (k_left * (x_jump - a) + k_right * (b - x_jump)) / g.dx;
    }
  }
  const double dt_max = cfl * g.dx / c.max_slope();
  std::vector<double> f(n + 1);
  double t = 0.0;
  while (t < t_end - 1e-15) {
    const double dt = std::min(dt_max, t_end - t);
    for (std::size_t i = 0; i <= n; ++i) {
      const double up = i == 0 ? g.k.front() : g.k[i - 1];
      const double dn = i == n ? g.k.back() : g.k[i];
      f[i] = std::min(c.demand(up), c.supply(dn));
    }
    for (std::size_t i = 0; i < n; ++i) {
      g.k[i] += dt / g.dx * (f[i] - f[i + 1]);
    }
    t += dt;
  }
  return g;
}

}  // namespace oracle
