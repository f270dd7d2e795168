#pragma once

/// @file information_packages.hpp
/// @brief Information packages (IPs): moving markers that carry flow-regime
/// changes, route-proportion changes or moving bottlenecks along a link, and
/// the rules that apply when two of them meet.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "ipm/fundamental_diagram.hpp"
#include "ipm/riemann.hpp"

namespace ipm {

using LinkId = int;
using NodeId = int;
using IpId = std::uint64_t;

/// Mixes two words into an identifier. Identifiers are derived from the
/// creating event rather than a running counter so that any execution order
/// that processes the same events names the same packages.
inline IpId derive_id(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + (b ^ (b >> 29)) + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// A stretch of link between two consecutive IPs: one flow regime and the
/// proportions of the link-local routes travelling in it.
struct Region {
  FlowRegime regime;
  std::vector<double> routes;
};

inline bool same_routes(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-9) {
  if (a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) {
      return false;
    }
  }
  return true;
}

enum class IpKind : std::uint8_t { FlowShockwave, RouteProportionFront, MovingBottleneck };

inline std::string_view to_string(IpKind k) {
  switch (k) {
    case IpKind::FlowShockwave: return "shock";
    case IpKind::RouteProportionFront: return "route";
    case IpKind::MovingBottleneck: return "bottleneck";
  }
  return "?";
}

struct ShockwavePayload {
  FlowRegime upstream;    // spatially behind the wave
  FlowRegime downstream;  // spatially ahead of the wave
};

/// Route proportions of the vehicles behind the front (the new information).
struct RoutePayload {
  std::vector<double> route_proportions;
};

struct BottleneckPayload {
  double free_speed = 0.0;  // km/h
  double capacity = 0.0;    // veh/h passing the bottleneck in its own frame
  std::vector<LinkId> route;
  std::size_t route_index = 0;  // position of the current link in `route`
  bool active = false;
  FlowRegime upstream_state;    // B when active, ambient otherwise
  FlowRegime downstream_state;  // A when active, ambient otherwise
};

struct InformationPackage {
  IpId id = 0;
  IpKind kind = IpKind::FlowShockwave;
  LinkId link = 0;
  double created_at = 0.0;       // h
  double anchor_time = 0.0;      // h, time of the last speed change
  double anchor_position = 0.0;  // km from the upstream end at anchor_time
  double speed = 0.0;            // km/h, signed
  std::variant<ShockwavePayload, RoutePayload, BottleneckPayload> payload;

  double position_at(double t) const { return anchor_position + speed * (t - anchor_time); }

  const ShockwavePayload& shock() const { return std::get<ShockwavePayload>(payload); }
  const RoutePayload& route() const { return std::get<RoutePayload>(payload); }
  const BottleneckPayload& bottleneck() const { return std::get<BottleneckPayload>(payload); }
  BottleneckPayload& bottleneck() { return std::get<BottleneckPayload>(payload); }
};

inline InformationPackage make_shock(IpId id, LinkId link, double t, double x, const Wave& w) {
  InformationPackage ip;
  ip.id = id;
  ip.kind = IpKind::FlowShockwave;
  ip.link = link;
  ip.created_at = t;
  ip.anchor_time = t;
  ip.anchor_position = x;
  ip.speed = w.speed;
  ip.payload = ShockwavePayload{w.upstream, w.downstream};
  return ip;
}

inline InformationPackage make_front(IpId id, LinkId link, double t, double x, double speed,
                                     std::vector<double> proportions) {
  InformationPackage ip;
  ip.id = id;
  ip.kind = IpKind::RouteProportionFront;
  ip.link = link;
  ip.created_at = t;
  ip.anchor_time = t;
  ip.anchor_position = x;
  ip.speed = speed;
  ip.payload = RoutePayload{std::move(proportions)};
  return ip;
}

/// Route fronts ride with the vehicles, so they move at the space-mean speed.
inline double routing_ip_speed(const FlowRegime& regime, const FundamentalDiagram& fd) {
  return fd.speed_at(regime.density);
}

struct BottleneckClassification {
  bool active = false;
  FlowRegime upstream_state;
  FlowRegime downstream_state;
};

/// Activation test for a moving bottleneck. The line q = C_b + v_b k (v_b the
/// lower of the bottleneck's own speed and the stream speed) cuts the diagram
/// at A (low density, ahead of the bottleneck) and B (high density, behind);
/// the bottleneck is active when the ambient state lies above the line.
inline BottleneckClassification classify_bottleneck(const BottleneckPayload& payload,
                                                     const FlowRegime& ambient,
                                                     const FundamentalDiagram& fd) {
  BottleneckClassification out{false, ambient, ambient};
  double vb = std::min(payload.free_speed, fd.speed_at(ambient.density));
  double cb = payload.capacity;
  auto g = [&](double k, double f) { return f - cb - vb * k; };
  if (g(ambient.density, ambient.flow) <= kFlowTol) {
    return out;
  }
  const auto& pts = fd.breakpoints();
  auto root_in = [&](const Breakpoint& a, const Breakpoint& b) {
    double ga = g(a.density, a.flow);
    double gb = g(b.density, b.flow);
    if (ga == gb) {
      return a.density;
    }
    return a.density + (b.density - a.density) * ga / (ga - gb);
  };
  // A: walk down from the ambient density to the first sign change.
  double ka = 0.0;
  {
    Breakpoint hi{ambient.density, ambient.flow};
    bool found = false;
    for (std::size_t i = pts.size(); i-- > 0;) {
      if (pts[i].density >= ambient.density) {
        continue;
      }
      if (g(pts[i].density, pts[i].flow) <= 0.0) {
        ka = root_in(pts[i], hi);
        found = true;
        break;
      }
      hi = pts[i];
    }
    if (!found) {
      ka = 0.0;
    }
  }
  double kb = fd.jam_density();
  {
    Breakpoint lo{ambient.density, ambient.flow};
    for (const auto& p : pts) {
      if (p.density <= ambient.density) {
        continue;
      }
      if (g(p.density, p.flow) <= 0.0) {
        kb = root_in(lo, p);
        break;
      }
      lo = p;
    }
  }
  out.active = true;
  out.downstream_state = {ka, cb + vb * ka};
  out.upstream_state = {kb, cb + vb * kb};
  return out;
}

/// Outcome of placing a bottleneck at a jump between `left` and `right`.
struct BottleneckResolution {
  std::vector<Wave> upstream_waves;
  std::vector<Wave> downstream_waves;
  double speed = 0.0;
  BottleneckPayload payload;
};

inline BottleneckResolution resolve_bottleneck(const FundamentalDiagram& fd, const FlowRegime& left,
                                               const FlowRegime& right, BottleneckPayload payload) {
  auto classical = solve_riemann(fd, left, right);
  std::vector<FlowRegime> states{left};
  for (const auto& w : classical) {
    states.push_back(w.downstream);
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::size_t slot = states.size() - 1;
  double speed = 0.0;
  bool placed = false;
  auto own_speed = [&](std::size_t i) { return std::min(payload.free_speed, fd.speed_at(states[i].density)); };
  for (std::size_t i = 0; i < states.size() && !placed; ++i) {
    double lo = i == 0 ? -inf : classical[i - 1].speed;
    double hi = i + 1 == states.size() ? inf : classical[i].speed;
    double c = own_speed(i);
    if (c >= lo && c <= hi) {
      slot = i;
      speed = c;
      placed = true;
    }
  }
  // No state fits: the bottleneck is trapped on a wave whose two sides both push it onto the wave.
  for (std::size_t i = 0; i + 1 < states.size() && !placed; ++i) {
    if (own_speed(i) > classical[i].speed && own_speed(i + 1) < classical[i].speed) {
      slot = i;
      speed = classical[i].speed;
      placed = true;
    }
  }
  if (!placed) {
    speed = own_speed(slot);
  }

  BottleneckResolution res;
  auto cls = classify_bottleneck(payload, states[slot], fd);
  if (cls.active) {
    auto up = solve_riemann(fd, left, cls.upstream_state);
    auto down = solve_riemann(fd, cls.downstream_state, right);
    const double eps = 1e-9;
    bool ok = std::all_of(up.begin(), up.end(), [&](const Wave& w) { return w.speed <= payload.free_speed + eps; }) &&
              std::all_of(down.begin(), down.end(), [&](const Wave& w) { return w.speed >= payload.free_speed - eps; });
    if (ok) {
      payload.active = true;
      payload.upstream_state = cls.upstream_state;
      payload.downstream_state = cls.downstream_state;
      res.upstream_waves = std::move(up);
      res.downstream_waves = std::move(down);
      res.speed = payload.free_speed;
      res.payload = std::move(payload);
      return res;
    }
  }
  payload.active = false;
  payload.upstream_state = states[slot];
  payload.downstream_state = states[slot];
  res.upstream_waves.assign(classical.begin(), classical.begin() + static_cast<std::ptrdiff_t>(slot));
  res.downstream_waves.assign(classical.begin() + static_cast<std::ptrdiff_t>(slot), classical.end());
  res.speed = speed;
  res.payload = std::move(payload);
  return res;
}

/// Replacement for two co-located packages: the packages in spatial order and
/// the regions between consecutive ones.
struct InteractionResult {
  std::vector<InformationPackage> ips;
  std::vector<Region> inner;
};

namespace detail {

inline void append_waves(InteractionResult& out, const std::vector<Wave>& waves, IpId seed_a, IpId seed_b,
                         std::uint64_t& serial, LinkId link, double t, double x,
                         const std::vector<double>& routes) {
  for (const auto& w : waves) {
    if (!out.ips.empty()) {
      out.inner.push_back({w.upstream, routes});
    }
    out.ips.push_back(make_shock(derive_id(derive_id(seed_a, seed_b), serial++), link, t, x, w));
  }
}

inline InformationPackage respeed(InformationPackage ip, double t, double x, double speed) {
  ip.anchor_time = t;
  ip.anchor_position = x;
  ip.speed = speed;
  return ip;
}

}  // namespace detail

/// Applies the interaction rules to `up` (spatially upstream) and `down`, which
/// meet at position x and time t. `before`, `between` and `after` are the
/// regions upstream of `up`, between the two, and downstream of `down`.
inline InteractionResult interact(const InformationPackage& up, const InformationPackage& down,
                                  const Region& before, const Region& between, const Region& after,
                                  const FundamentalDiagram& fd, double t, double x) {
  (void)between;
  InteractionResult out;
  std::uint64_t serial = 0;
  const bool up_front = up.kind == IpKind::RouteProportionFront;
  const bool down_front = down.kind == IpKind::RouteProportionFront;

  if (up_front && down_front) {
    throw std::logic_error("route-proportion fronts cannot intersect each other");
  }
  if (up_front) {
    // The front overtakes the regime change and continues in the new regime.
    out.ips.push_back(down);
    out.inner.push_back({after.regime, before.routes});
    out.ips.push_back(detail::respeed(up, t, x, routing_ip_speed(after.regime, fd)));
    return out;
  }
  if (down_front) {
    out.ips.push_back(detail::respeed(down, t, x, routing_ip_speed(before.regime, fd)));
    out.inner.push_back({before.regime, after.routes});
    out.ips.push_back(up);
    return out;
  }
  if (up.kind == IpKind::FlowShockwave && down.kind == IpKind::FlowShockwave) {
    // Both terminate; the outermost regimes seed the replacement (none if equal).
    detail::append_waves(out, solve_riemann(fd, before.regime, after.regime), up.id, down.id, serial,
                         up.link, t, x, before.routes);
    return out;
  }
  if (up.kind == IpKind::MovingBottleneck && down.kind == IpKind::MovingBottleneck) {
    // A faster bottleneck is held behind a slower one.
    out.ips.push_back(detail::respeed(up, t, x, down.speed));
    out.inner.push_back(between);
    out.ips.push_back(down);
    return out;
  }
  // Bottleneck meets a shock: the shock terminates and the bottleneck is
  // re-solved against the outer regimes.
  const InformationPackage& bn = up.kind == IpKind::MovingBottleneck ? up : down;
  const InformationPackage& sh = up.kind == IpKind::MovingBottleneck ? down : up;
  auto res = resolve_bottleneck(fd, before.regime, after.regime, bn.bottleneck());
  detail::append_waves(out, res.upstream_waves, sh.id, bn.id, serial, up.link, t, x, before.routes);
  InformationPackage moved = detail::respeed(bn, t, x, res.speed);
  moved.payload = res.payload;
  if (!out.ips.empty()) {
    out.inner.push_back({res.payload.upstream_state, before.routes});
  }
  out.ips.push_back(std::move(moved));
  for (const auto& w : res.downstream_waves) {
    out.inner.push_back({w.upstream, before.routes});
    out.ips.push_back(make_shock(derive_id(derive_id(sh.id, bn.id), serial++), up.link, t, x, w));
  }
  return out;
}

}  // namespace ipm
