#pragma once

// Travel times from cumulative curves. Vehicles keep their order on a link, so
// the vehicle counted N-th at the exit is the one counted N-th at the entry
// (after the vehicles that were already on the link at the start).

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipm/cumulative_curve.hpp"

namespace ipm {

class InsufficientHistory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cumulative curves at both ends of one link plus the count that was
/// already on it when the curves start.
struct LinkCurves {
  const CumulativeCurve* in = nullptr;
  const CumulativeCurve* out = nullptr;
  double initial = 0.0;
};

/// Time spent on the link by the last vehicle to leave at or before t_exit.
inline double link_travel_time(const LinkCurves& c, double t_exit) {
  const double n = c.out->value(t_exit) - c.initial;
  if (!(n > 0.0)) {
    throw InsufficientHistory("no vehicle that entered during the run has left by t=" + std::to_string(t_exit));
  }
  double t_entry = 0.0;
  try {
    t_entry = c.in->inverse(n, t_exit);
  } catch (const std::out_of_range& e) {
    throw InsufficientHistory(e.what());
  }
  return t_exit - t_entry;
}

inline double link_travel_time(const CumulativeCurve& cum_in, const CumulativeCurve& cum_out, double t_exit) {
  return link_travel_time(LinkCurves{&cum_in, &cum_out, 0.0}, t_exit);
}

/// Walks the route backwards: the entry time of each link is the exit time of
/// the link before it.
inline double route_travel_time(const std::vector<LinkCurves>& route, double t_exit) {
  if (route.empty()) {
    throw std::invalid_argument("route has no links");
  }
  double t = t_exit;
  for (auto it = route.rbegin(); it != route.rend(); ++it) {
    t -= link_travel_time(*it, t);
  }
  return t_exit - t;
}

/// Exit time of the vehicle that enters the link at t_entry, or NaN when it
/// has not left within `horizon`.
inline double link_exit_time(const LinkCurves& c, double t_entry, double horizon) {
  const double n = c.in->value(t_entry) + c.initial;
  if (c.out->value(horizon) < n) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return c.out->inverse(n, horizon);
}

/// Forward variant: follows a vehicle entering the route at t_entry through
/// an optional origin queue and every link. NaN when it does not arrive.
inline double route_exit_time(const CumulativeCurve* queue_in, const CumulativeCurve* queue_out,
                              const std::vector<LinkCurves>& route, double t_entry, double horizon) {
  double t = t_entry;
  if (queue_in && queue_out) {
    t = link_exit_time(LinkCurves{queue_in, queue_out, 0.0}, t, horizon);
  }
  for (const auto& c : route) {
    if (std::isnan(t)) {
      break;
    }
    t = link_exit_time(c, t, horizon);
  }
  return t;
}

}  // namespace ipm
