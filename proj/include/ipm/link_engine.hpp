#pragma once

/// @file link_engine.hpp
/// @brief Piecewise-constant link state, IP event detection and resolution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ipm/cumulative_curve.hpp"
#include "ipm/events.hpp"
#include "ipm/fundamental_diagram.hpp"
#include "ipm/information_packages.hpp"
#include "ipm/riemann.hpp"

namespace ipm {

inline constexpr double kPositionTol = 1e-9;  // km
inline constexpr double kTimeTol = 1e-12;     // h
inline constexpr double kParallelTol = 1e-12; // km/h

enum class LinkEnd : std::uint8_t { Upstream, Downstream };

inline const char* to_string(LinkEnd e) { return e == LinkEnd::Upstream ? "up" : "down"; }

/// Meeting point of two packages on the same link, `ip1` upstream of `ip2`.
/// Only converging pairs meet; the result is clamped to the link.
inline std::optional<std::pair<double, double>> intersection_event(const InformationPackage& ip1,
                                                                   const InformationPackage& ip2,
                                                                   double length) {
  const double s1 = ip1.speed;
  const double s2 = ip2.speed;
  if (!(s1 - s2 > kParallelTol)) {
    return std::nullopt;
  }
  const double x1 = ip1.anchor_position;
  const double t1 = ip1.anchor_time;
  const double x2 = ip2.anchor_position;
  const double t2 = ip2.anchor_time;
  double tau = (x2 - x1 + t1 * s1 - t2 * s2) / (s1 - s2);
  tau = std::max(tau, std::max(t1, t2));
  double x = x1 + (tau - t1) * s1;
  if (x < -kPositionTol || x > length + kPositionTol) {
    return std::nullopt;
  }
  return std::make_pair(tau, std::clamp(x, 0.0, length));
}

struct LinkEvent {
  EventKey key;
  IpId first = 0;
  IpId second = 0;
  LinkEnd end = LinkEnd::Upstream;

  double time() const { return key.time; }
  double position() const { return key.position; }
  EventKind kind() const { return key.kind; }
};

struct BoundaryRecord {
  double time = 0.0;
  FlowRegime regime;
};

/// What a node needs to know after an IP leaves a link.
struct BoundaryNotification {
  LinkEnd end = LinkEnd::Upstream;
  InformationPackage ip;
  std::vector<InformationPackage> coincident;  // left together with ip
  FlowRegime previous;
  FlowRegime current;
};

inline std::string format_regime(const FlowRegime& r) {
  std::ostringstream os;
  os.precision(12);
  os << '(' << r.density << ' ' << r.flow << ')';
  return os.str();
}

inline std::string format_ip(const InformationPackage& ip) {
  std::ostringstream os;
  os.precision(12);
  os << to_string(ip.kind) << '#' << std::hex << ip.id << std::dec << " v=" << ip.speed;
  if (ip.kind == IpKind::FlowShockwave) {
    os << ' ' << format_regime(ip.shock().upstream) << "->" << format_regime(ip.shock().downstream);
  } else if (ip.kind == IpKind::MovingBottleneck) {
    const auto& b = ip.bottleneck();
    os << (b.active ? " active " : " inactive ") << format_regime(b.upstream_state) << "|"
       << format_regime(b.downstream_state);
  }
  return os.str();
}

class LinkState {
 public:
  LinkState(LinkId id, double length, const FundamentalDiagram* fd, std::size_t local_routes, double t0)
      : id_(id), length_(length), fd_(fd), cum_in_(t0), cum_out_(t0) {
    std::vector<double> routes(local_routes, local_routes ? 1.0 / static_cast<double>(local_routes) : 0.0);
    regions_.push_back({FlowRegime{}, std::move(routes)});
    up_history_.push_back({t0, {}});
    down_history_.push_back({t0, {}});
  }

  /// Replaces the state with consecutive regimes; `cuts[i]` separates
  /// `regimes[i]` and `regimes[i+1]`. Jumps become waves anchored at t0.
  void set_initial(double t0, const std::vector<FlowRegime>& regimes, const std::vector<double>& cuts) {
    if (regimes.empty() || cuts.size() + 1 != regimes.size()) {
      throw std::invalid_argument("initial regimes and cut positions do not match");
    }
    auto routes = regions_.front().routes;
    ips_.clear();
    regions_.assign(1, {regimes.front(), routes});
    for (std::size_t i = 0; i < cuts.size(); ++i) {
      auto waves = solve_riemann(*fd_, regimes[i], regimes[i + 1]);
      std::uint64_t k = 0;
      for (const auto& w : waves) {
        auto ip = make_shock(derive_id(derive_id(0xA11CEULL, static_cast<std::uint64_t>(id_)), i * 64 + k++), id_, t0,
                             cuts[i], w);
        ips_.push_back(std::move(ip));
        regions_.push_back({w.downstream, routes});
      }
      regions_.back().regime = regimes[i + 1];
    }
    cum_in_ = CumulativeCurve(t0, head().regime.flow);
    cum_out_ = CumulativeCurve(t0, tail().regime.flow);
    up_history_.assign(1, {t0, head().regime});
    down_history_.assign(1, {t0, tail().regime});
  }

  LinkId id() const { return id_; }
  double length() const { return length_; }
  const FundamentalDiagram& fd() const { return *fd_; }
  const std::vector<InformationPackage>& ips() const { return ips_; }
  const std::vector<Region>& regions() const { return regions_; }
  const Region& head() const { return regions_.front(); }
  const Region& tail() const { return regions_.back(); }
  const CumulativeCurve& cum_in() const { return cum_in_; }
  const CumulativeCurve& cum_out() const { return cum_out_; }
  const std::vector<BoundaryRecord>& boundary_history(LinkEnd end) const {
    return end == LinkEnd::Upstream ? up_history_ : down_history_;
  }

  double position_of(std::size_t i, double t) const {
    return std::clamp(ips_[i].position_at(t), 0.0, length_);
  }

  /// Earliest pending event accepted by `accept`, or nothing.
  /// Event times depend only on the link state, never on the caller's clock.
  template <class Accept>
  std::optional<LinkEvent> next_event(Accept&& accept) const {
    std::optional<LinkEvent> best;
    auto offer = [&](LinkEvent ev) {
      if (!accept(ev)) {
        return;
      }
      if (!best || ev.key < best->key) {
        best = ev;
      }
    };
    for (std::size_t i = 0; i + 1 < ips_.size(); ++i) {
      if (auto hit = intersection_event(ips_[i], ips_[i + 1], length_)) {
        LinkEvent ev;
        ev.key = {hit->first, OwnerKind::Link, id_, EventKind::Intersection, hit->second, ips_[i].id, ips_[i + 1].id};
        ev.first = ips_[i].id;
        ev.second = ips_[i + 1].id;
        offer(ev);
      }
    }
    if (!ips_.empty()) {
      const auto& first = ips_.front();
      if (first.speed < 0.0) {
        double t = first.anchor_time + (0.0 - first.anchor_position) / first.speed;
        LinkEvent ev;
        ev.key = {std::max(t, first.anchor_time), OwnerKind::Link, id_, EventKind::BoundaryArrival, 0.0,
                  first.id, 0};
        ev.first = first.id;
        ev.end = LinkEnd::Upstream;
        offer(ev);
      }
      const auto& last = ips_.back();
      if (last.speed > 0.0) {
        double t = last.anchor_time + (length_ - last.anchor_position) / last.speed;
        LinkEvent ev;
        ev.key = {std::max(t, last.anchor_time), OwnerKind::Link, id_, EventKind::BoundaryArrival, length_,
                  last.id, 0};
        ev.first = last.id;
        ev.end = LinkEnd::Downstream;
        offer(ev);
      }
    }
    return best;
  }

  std::optional<LinkEvent> next_event() const {
    return next_event([](const LinkEvent&) { return true; });
  }

  /// Resolves two meeting packages. Returns false for a stale event.
  bool resolve_intersection(const LinkEvent& ev, std::vector<std::string>* log = nullptr) {
    auto i = index_of(ev.first);
    if (!i || *i + 1 >= ips_.size() || ips_[*i + 1].id != ev.second) {
      return false;
    }
    const double t = ev.time();
    const double x = ev.position();
    auto res = interact(ips_[*i], ips_[*i + 1], regions_[*i], regions_[*i + 1], regions_[*i + 2], *fd_, t, x);
    if (log) {
      std::string line = "meet " + format_ip(ips_[*i]) + " & " + format_ip(ips_[*i + 1]) + " ->";
      for (const auto& ip : res.ips) {
        line += " [" + format_ip(ip) + "]";
      }
      log->push_back(std::move(line));
    }
    const auto first = static_cast<std::ptrdiff_t>(*i);
    ips_.erase(ips_.begin() + first, ips_.begin() + first + 2);
    if (res.ips.empty()) {
      // The two outer regions coincide; keep the tail value at the tail so
      // the downstream end never sees an interior event.
      bool after_is_tail = *i + 2 == regions_.size() - 1;
      if (after_is_tail) {
        regions_.erase(regions_.begin() + first, regions_.begin() + first + 2);
      } else {
        regions_.erase(regions_.begin() + first + 1, regions_.begin() + first + 3);
      }
      return true;
    }
    for (auto& ip : res.ips) {
      ip.link = id_;
    }
    ips_.insert(ips_.begin() + first, res.ips.begin(), res.ips.end());
    regions_.erase(regions_.begin() + first + 1);
    regions_.insert(regions_.begin() + first + 1, res.inner.begin(), res.inner.end());
    return true;
  }

  /// Removes the package that reached a link end and returns the boundary change.
  std::optional<BoundaryNotification> boundary_arrival(const LinkEvent& ev) {
    if (ips_.empty()) {
      return std::nullopt;
    }
    BoundaryNotification note;
    note.end = ev.end;
    const double t = ev.time();
    if (ev.end == LinkEnd::Upstream) {
      if (ips_.front().id != ev.first) {
        return std::nullopt;
      }
      note.ip = ips_.front();
      note.previous = head().regime;
      ips_.erase(ips_.begin());
      regions_.erase(regions_.begin());
      while (!ips_.empty() && ips_.front().kind != IpKind::MovingBottleneck && ips_.front().speed < 0.0 &&
             ips_.front().position_at(t) <= kPositionTol) {
        note.coincident.push_back(ips_.front());
        ips_.erase(ips_.begin());
        regions_.erase(regions_.begin());
      }
      note.current = head().regime;
    } else {
      if (ips_.back().id != ev.first) {
        return std::nullopt;
      }
      note.ip = ips_.back();
      note.previous = tail().regime;
      ips_.pop_back();
      regions_.pop_back();
      while (!ips_.empty() && ips_.back().kind != IpKind::MovingBottleneck && ips_.back().speed > 0.0 &&
             ips_.back().position_at(t) >= length_ - kPositionTol) {
        note.coincident.push_back(ips_.back());
        ips_.pop_back();
        regions_.pop_back();
      }
      note.current = tail().regime;
    }
    sync_end(ev.end, t);
    return note;
  }

  /// A new state enters at the upstream end. Regime jumps travel as shocks;
  /// a change in route proportions travels as a front ahead of them.
  /// Returns the number of packages created.
  std::size_t inject_upstream(double t, const Region& incoming, std::uint64_t seed,
                              std::vector<std::string>* log = nullptr) {
    const bool absorbed = absorb_at_end(LinkEnd::Upstream, t, log);
    const Region old = head();
    std::vector<InformationPackage> created;
    std::vector<Region> inner;
    std::uint64_t k = 0;
    bool routes_change = !same_routes(incoming.routes, old.routes) && incoming.regime.flow > 0.0;
    auto waves = solve_riemann(*fd_, incoming.regime, old.regime);
    // Waves that would leave through the upstream end at once carry no state onto the link.
    FlowRegime entering = incoming.regime;
    while (!waves.empty() && waves.front().speed < 0.0) {
      entering = waves.front().downstream;
      waves.erase(waves.begin());
    }
    std::vector<double> routes = routes_change ? incoming.routes : old.routes;
    for (const auto& w : waves) {
      if (!created.empty()) {
        inner.push_back({w.upstream, routes});
      }
      created.push_back(make_shock(derive_id(seed, k++), id_, t, 0.0, w));
    }
    if (routes_change) {
      if (!created.empty()) {
        inner.push_back({old.regime, routes});
      }
      created.push_back(make_front(derive_id(seed, k++), id_, t, 0.0, routing_ip_speed(old.regime, *fd_), routes));
    }
    if (created.empty()) {
      if (absorbed) {
        sync_end(LinkEnd::Upstream, t);
      }
      return 0;
    }
    if (log) {
      for (const auto& ip : created) {
        log->push_back("inject up " + format_ip(ip));
      }
    }
    Region new_head{waves.empty() ? old.regime : entering, routes};
    ips_.insert(ips_.begin(), created.begin(), created.end());
    regions_.insert(regions_.begin(), inner.begin(), inner.end());
    regions_.insert(regions_.begin(), new_head);
    sync_end(LinkEnd::Upstream, t);
    return created.size();
  }

  /// A new state is imposed at the downstream end by the node.
  std::size_t inject_downstream(double t, const FlowRegime& imposed, std::uint64_t seed,
                                std::vector<std::string>* log = nullptr) {
    const bool absorbed = absorb_at_end(LinkEnd::Downstream, t, log);
    const Region old = tail();
    auto waves = solve_riemann(*fd_, old.regime, imposed);
    FlowRegime leaving = imposed;
    while (!waves.empty() && waves.back().speed > 0.0) {
      leaving = waves.back().upstream;
      waves.pop_back();
    }
    if (waves.empty()) {
      if (absorbed) {
        sync_end(LinkEnd::Downstream, t);
      }
      return 0;
    }
    std::uint64_t k = 0;
    for (std::size_t w = 0; w < waves.size(); ++w) {
      auto ip = make_shock(derive_id(seed, k++), id_, t, length_, waves[w]);
      if (log) {
        log->push_back("inject down " + format_ip(ip));
      }
      ips_.push_back(std::move(ip));
      regions_.push_back({waves[w].downstream, old.routes});
    }
    regions_.back().regime = leaving;
    sync_end(LinkEnd::Downstream, t);
    return waves.size();
  }

  /// Places a moving bottleneck at x (which may be a link end) and emits the
  /// waves its activation causes.
  void insert_bottleneck(double t, double x, IpId id, BottleneckPayload payload,
                         std::vector<std::string>* log = nullptr) {
    x = std::clamp(x, 0.0, length_);
    std::size_t idx = 0;
    while (idx < ips_.size() && position_of(idx, t) < x) {
      ++idx;
    }
    const Region ambient = regions_[idx];
    auto res = resolve_bottleneck(*fd_, ambient.regime, ambient.regime, std::move(payload));
    std::vector<InformationPackage> created;
    std::vector<Region> inner;
    std::uint64_t k = 0;
    for (const auto& w : res.upstream_waves) {
      if (!created.empty()) {
        inner.push_back({w.upstream, ambient.routes});
      }
      created.push_back(make_shock(derive_id(id, k++), id_, t, x, w));
    }
    InformationPackage bn;
    bn.id = id;
    bn.kind = IpKind::MovingBottleneck;
    bn.link = id_;
    bn.created_at = t;
    bn.anchor_time = t;
    bn.anchor_position = x;
    bn.speed = res.speed;
    if (!created.empty()) {
      inner.push_back({res.payload.upstream_state, ambient.routes});
    }
    bn.payload = res.payload;
    created.push_back(bn);
    for (const auto& w : res.downstream_waves) {
      inner.push_back({w.upstream, ambient.routes});
      created.push_back(make_shock(derive_id(id, k++), id_, t, x, w));
    }
    if (log) {
      for (const auto& ip : created) {
        log->push_back("insert " + format_ip(ip));
      }
    }
    const auto at = static_cast<std::ptrdiff_t>(idx);
    ips_.insert(ips_.begin() + at, created.begin(), created.end());
    inner.push_back(ambient);
    regions_.insert(regions_.begin() + at + 1, inner.begin(), inner.end());
    if (x <= 0.0 || x >= length_) {
      sync_end(x <= 0.0 ? LinkEnd::Upstream : LinkEnd::Downstream, t);
    }
  }

  /// Changes a resident bottleneck's speed or capacity and re-solves its
  /// neighbourhood. Returns false when the bottleneck is not on this link.
  bool update_bottleneck(double t, IpId id, double free_speed, double capacity,
                         std::vector<std::string>* log = nullptr) {
    auto i = index_of(id);
    if (!i) {
      return false;
    }
    auto bn = ips_[*i];
    auto payload = bn.bottleneck();
    payload.free_speed = free_speed;
    payload.capacity = capacity;
    const double x = position_of(*i, t);
    const Region before = regions_[*i];
    const Region after = regions_[*i + 1];
    auto res = resolve_bottleneck(*fd_, before.regime, after.regime, std::move(payload));
    std::vector<InformationPackage> created;
    std::vector<Region> inner;
    std::uint64_t k = 0;
    const std::uint64_t seed = derive_id(id, static_cast<std::uint64_t>(std::llround(t * 1e9)));
    for (const auto& w : res.upstream_waves) {
      if (!created.empty()) {
        inner.push_back({w.upstream, before.routes});
      }
      created.push_back(make_shock(derive_id(seed, k++), id_, t, x, w));
    }
    if (!created.empty()) {
      inner.push_back({res.payload.upstream_state, before.routes});
    }
    bn.anchor_time = t;
    bn.anchor_position = x;
    bn.speed = res.speed;
    bn.payload = res.payload;
    created.push_back(bn);
    for (const auto& w : res.downstream_waves) {
      inner.push_back({w.upstream, before.routes});
      created.push_back(make_shock(derive_id(seed, k++), id_, t, x, w));
    }
    if (log) {
      log->push_back("update " + format_ip(bn));
    }
    const auto at = static_cast<std::ptrdiff_t>(*i);
    ips_.erase(ips_.begin() + at);
    ips_.insert(ips_.begin() + at, created.begin(), created.end());
    regions_.erase(regions_.begin() + at + 1);
    inner.push_back(after);
    regions_.insert(regions_.begin() + at + 1, inner.begin(), inner.end());
    return true;
  }

  /// Vehicles on the link at time t (integral of density over the regions).
  double vehicles(double t) const {
    double total = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      double next = i < ips_.size() ? std::max(prev, position_of(i, t)) : length_;
      total += regions_[i].regime.density * (next - prev);
      prev = next;
    }
    return total;
  }

  const Region& region_at(double x, double t) const {
    std::size_t i = 0;
    while (i < ips_.size() && position_of(i, t) < x) {
      ++i;
    }
    return regions_[i];
  }

  double density_at(double x, double t) const { return region_at(x, t).regime.density; }

  std::optional<std::size_t> index_of(IpId id) const {
    for (std::size_t i = 0; i < ips_.size(); ++i) {
      if (ips_[i].id == id) {
        return i;
      }
    }
    return std::nullopt;
  }

  /// Region count equals package count plus one.
  bool consistent() const { return regions_.size() == ips_.size() + 1; }

 private:
  /// Packages injected at this end earlier in the same instant are still on
  /// the boundary; a new injection replaces them so no zero-width region stays.
  bool absorb_at_end(LinkEnd end, double t, std::vector<std::string>* log) {
    bool any = false;
    auto absorbable = [](const InformationPackage& ip) { return ip.kind != IpKind::MovingBottleneck; };
    if (end == LinkEnd::Upstream) {
      while (!ips_.empty() && absorbable(ips_.front()) && ips_.front().speed >= 0.0 &&
             position_of(0, t) <= kPositionTol) {
        if (log) {
          log->push_back("absorb " + format_ip(ips_.front()));
        }
        ips_.erase(ips_.begin());
        regions_.erase(regions_.begin());
        any = true;
      }
    } else {
      while (!ips_.empty() && absorbable(ips_.back()) && ips_.back().speed <= 0.0 &&
             position_of(ips_.size() - 1, t) >= length_ - kPositionTol) {
        if (log) {
          log->push_back("absorb " + format_ip(ips_.back()));
        }
        ips_.pop_back();
        regions_.pop_back();
        any = true;
      }
    }
    return any;
  }

  void sync_end(LinkEnd end, double t) {
    if (end == LinkEnd::Upstream) {
      cum_in_.set_slope(t, head().regime.flow);
      if (!same_regime(up_history_.back().regime, head().regime, 0.0)) {
        up_history_.push_back({t, head().regime});
      }
    } else {
      cum_out_.set_slope(t, tail().regime.flow);
      if (!same_regime(down_history_.back().regime, tail().regime, 0.0)) {
        down_history_.push_back({t, tail().regime});
      }
    }
  }

  LinkId id_;
  double length_;
  const FundamentalDiagram* fd_;
  std::vector<InformationPackage> ips_;
  std::vector<Region> regions_;
  CumulativeCurve cum_in_;
  CumulativeCurve cum_out_;
  std::vector<BoundaryRecord> up_history_;
  std::vector<BoundaryRecord> down_history_;
};

}  // namespace ipm
