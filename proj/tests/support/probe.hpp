#pragma once

// Virtual probe vehicle driven through the recorded wave field of a run. Each
// link is piecewise constant between wave positions; the probe moves at the
// space-mean speed of the region it is in and changes region when it meets a
// wave, a new snapshot begins, or it reaches the link end.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ipm/sim_engine.hpp"
#include "support/godunov.hpp"

namespace oracle {

inline double region_speed(const Curve& c, double k) {
  if (k <= 1e-12) {
    return c.pts[1].second / c.pts[1].first;
  }
  return c.flow(k) / k;
}

/// Time at which a probe entering link `link_id` at t_in reaches its end.
inline double probe_link(const ipm::Simulator& sim, const Curve& curve, int link_id, double t_in) {
  const auto& hist = sim.history(link_id);
  const double L = sim.link(link_id).length();
  const double eps = 1e-10;
  double t = t_in, x = 0.0;
  // Snapshot in force at t: the last one with time <= t.
  auto snap_index = [&](double tt) {
    auto it = std::upper_bound(hist.begin(), hist.end(), tt, [](double v, const ipm::LinkSnapshot& s) { return v < s.t; });
    if (it == hist.begin()) {
      throw std::logic_error("probe before the first snapshot");
    }
    return static_cast<std::size_t>(std::distance(hist.begin(), it)) - 1;
  };
  for (int guard = 0; guard < 1000000; ++guard) {
    const std::size_t si = snap_index(t);
    const auto& s = hist[si];
    const double t_next = si + 1 < hist.size() ? hist[si + 1].t : std::numeric_limits<double>::infinity();
    // Region of the probe: behind every wave it has not yet passed.
    std::size_t r = 0;
    for (std::size_t i = 0; i < s.ips.size(); ++i) {
      const double xi = s.ips[i].position_at(t);
      const double v_ahead = region_speed(curve, s.regions[i + 1].regime.density);
      if (xi < x - eps || (xi <= x + eps && s.ips[i].speed < v_ahead)) {
        r = i + 1;
      }
    }
    const double v = region_speed(curve, s.regions[r].regime.density);
    double dt = v > 0.0 ? (L - x) / v : std::numeric_limits<double>::infinity();
    // Next wave ahead that the probe catches.
    if (r < s.ips.size()) {
      const auto& ip = s.ips[r];
      const double gap = ip.position_at(t) - x;
      const double closing = v - ip.speed;
      if (closing > 0.0) {
        dt = std::min(dt, std::max(0.0, gap) / closing);
      }
    }
    const double t_stop = std::min(t + dt, t_next);
    if (!std::isfinite(t_stop)) {
      throw std::runtime_error("probe stuck on link " + std::to_string(link_id));
    }
    x = std::min(L, x + v * (t_stop - t));
    if (t + dt <= t_next && x >= L - eps) {
      return t + dt;
    }
    if (t_stop == t && r < s.ips.size()) {
      // Sitting on the wave: step into the region ahead.
      x = std::min(L, s.ips[r].position_at(t) + 1e-12);
    }
    t = t_stop;
  }
  throw std::runtime_error("probe did not finish");
}

inline double probe_route(const ipm::Simulator& sim, const std::vector<Curve>& curves, const std::vector<int>& links,
                          double t_in) {
  double t = t_in;
  for (std::size_t i = 0; i < links.size(); ++i) {
    t = probe_link(sim, curves[i], links[i], t);
  }
  return t;
}

}  // namespace oracle
