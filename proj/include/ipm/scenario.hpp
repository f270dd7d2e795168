#pragma once

/// @file scenario.hpp
/// @brief Scenario description, JSON (de)serialisation and validation.
///
/// Units: hours, kilometres, veh/h, veh/km.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ipm/fundamental_diagram.hpp"

namespace ipm {

using json = nlohmann::ordered_json;

/// Invalid scenario content; the message names the offending entry.
class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FdClassSpec {
  std::string name;
  std::string shape = "triangular";  // or "piecewise_linear"
  double max_flow = 0.0;
  double critical_density = 0.0;
  double jam_density = 0.0;
  std::vector<std::pair<double, double>> breakpoints;

  FundamentalDiagram build() const {
    if (shape == "triangular") {
      return FundamentalDiagram::triangular(max_flow, critical_density, jam_density);
    }
    if (shape == "piecewise_linear") {
      std::vector<Breakpoint> pts;
      for (auto [k, q] : breakpoints) {
        pts.push_back({k, q});
      }
      return FundamentalDiagram::piecewise_linear(std::move(pts));
    }
    throw ScenarioError("fd class '" + name + "': unknown shape '" + shape + "'");
  }
  friend bool operator==(const FdClassSpec&, const FdClassSpec&) = default;
};

enum class NodeKind { Origin, Sink, Junction };

inline std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Origin: return "origin";
    case NodeKind::Sink: return "sink";
    case NodeKind::Junction: return "junction";
  }
  return "?";
}

struct PrioritySpec {
  int upstream = 0;
  int downstream = 0;
  double weight = 0.0;
  friend bool operator==(const PrioritySpec&, const PrioritySpec&) = default;
};

struct NodeSpec {
  int id = 0;
  NodeKind kind = NodeKind::Junction;
  std::vector<PrioritySpec> priorities;
  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

/// Initial state piece: density from `start_km` to the next piece.
struct InitialRegion {
  double start_km = 0.0;
  double density = 0.0;
  friend bool operator==(const InitialRegion&, const InitialRegion&) = default;
};

struct LinkSpec {
  int id = 0;
  int from = 0;
  int to = 0;
  double length_km = 0.0;
  int lanes = 1;
  std::string fd_class;
  std::optional<double> exit_capacity;
  std::vector<InitialRegion> initial_regions;
  friend bool operator==(const LinkSpec&, const LinkSpec&) = default;
};

struct RouteSpec {
  std::string id;
  std::vector<int> links;
  friend bool operator==(const RouteSpec&, const RouteSpec&) = default;
};

struct RatePoint {
  double t = 0.0;
  double rate = 0.0;
  friend bool operator==(const RatePoint&, const RatePoint&) = default;
};

struct ProportionPoint {
  double t = 0.0;
  std::vector<double> p;
  friend bool operator==(const ProportionPoint&, const ProportionPoint&) = default;
};

struct OdSpec {
  std::string id;
  int origin = 0;
  int destination = 0;
  std::vector<std::string> routes;
  std::vector<RatePoint> demand;                   // piecewise constant from each t
  std::vector<ProportionPoint> route_proportions;  // piecewise constant; default uniform

  double rate_at(double t) const {
    double r = 0.0;
    for (const auto& p : demand) {
      if (p.t <= t) {
        r = p.rate;
      }
    }
    return r;
  }
  std::vector<double> proportions_at(double t) const {
    std::vector<double> p(routes.size(), routes.empty() ? 0.0 : 1.0 / static_cast<double>(routes.size()));
    for (const auto& pt : route_proportions) {
      if (pt.t <= t) {
        p = pt.p;
      }
    }
    return p;
  }
  friend bool operator==(const OdSpec&, const OdSpec&) = default;
};

struct IncidentSpec {
  int link = 0;
  double start_h = 0.0;
  double duration_h = 0.0;
  std::optional<int> blocked_lanes;
  std::optional<double> capacity_factor;
  friend bool operator==(const IncidentSpec&, const IncidentSpec&) = default;
};

struct PriorityChange {
  double t = 0.0;
  int node = 0;
  std::vector<PrioritySpec> priorities;
  friend bool operator==(const PriorityChange&, const PriorityChange&) = default;
};

struct BottleneckSpec {
  int id = 0;
  double t = 0.0;
  int link = 0;
  double position_km = 0.0;
  double free_speed = 0.0;
  double capacity = 0.0;
  std::vector<int> route;  // starts with `link`; empty means this link only
  friend bool operator==(const BottleneckSpec&, const BottleneckSpec&) = default;
};

struct BottleneckUpdate {
  int id = 0;
  double t = 0.0;
  double free_speed = 0.0;
  double capacity = 0.0;
  friend bool operator==(const BottleneckUpdate&, const BottleneckUpdate&) = default;
};

struct SensorSpec {
  std::string id;
  int link = 0;
  std::string end = "down";  // "up" or "down"
  friend bool operator==(const SensorSpec&, const SensorSpec&) = default;
};

struct ClockSpec {
  double dt_h = 0.0;  // 0 selects the largest admissible step
  std::string mode = "sequential";
  friend bool operator==(const ClockSpec&, const ClockSpec&) = default;
};

struct Scenario {
  std::string name;
  double horizon_h = 1.0;
  ClockSpec clock;
  double report_interval_h = 5.0 / 60.0;
  std::vector<FdClassSpec> fd_classes;
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<RouteSpec> routes;
  std::vector<OdSpec> ods;
  std::vector<IncidentSpec> incidents;
  std::vector<PriorityChange> priority_changes;
  std::vector<BottleneckSpec> bottlenecks;
  std::vector<BottleneckUpdate> bottleneck_updates;
  std::vector<SensorSpec> sensors;

  const LinkSpec& link(int id) const {
    for (const auto& l : links) {
      if (l.id == id) {
        return l;
      }
    }
    throw ScenarioError("unknown link " + std::to_string(id));
  }
  LinkSpec& link(int id) { return const_cast<LinkSpec&>(std::as_const(*this).link(id)); }
  const NodeSpec& node(int id) const {
    for (const auto& n : nodes) {
      if (n.id == id) {
        return n;
      }
    }
    throw ScenarioError("unknown node " + std::to_string(id));
  }
  const FdClassSpec& fd_class(const std::string& name) const {
    for (const auto& c : fd_classes) {
      if (c.name == name) {
        return c;
      }
    }
    throw ScenarioError("unknown fd class '" + name + "'");
  }
  FdClassSpec& fd_class(const std::string& name) {
    return const_cast<FdClassSpec&>(std::as_const(*this).fd_class(name));
  }
  const RouteSpec& route(const std::string& id) const {
    for (const auto& r : routes) {
      if (r.id == id) {
        return r;
      }
    }
    throw ScenarioError("unknown route '" + id + "'");
  }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

template <class T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ScenarioError(where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ScenarioError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T optional_field(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) {
    return fallback;
  }
  return required<T>(j, key, where);
}

inline NodeKind parse_node_kind(const std::string& s, const std::string& where) {
  if (s == "origin") return NodeKind::Origin;
  if (s == "sink") return NodeKind::Sink;
  if (s == "junction") return NodeKind::Junction;
  throw ScenarioError(where + ": unknown node kind '" + s + "'");
}

inline std::vector<PrioritySpec> parse_priorities(const json& arr, const std::string& where) {
  std::vector<PrioritySpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    std::string w = where + "[" + std::to_string(i) + "]";
    out.push_back({required<int>(arr[i], "upstream", w), required<int>(arr[i], "downstream", w),
                   required<double>(arr[i], "weight", w)});
  }
  return out;
}

inline json dump_priorities(const std::vector<PrioritySpec>& ps) {
  json arr = json::array();
  for (const auto& p : ps) {
    arr.push_back({{"upstream", p.upstream}, {"downstream", p.downstream}, {"weight", p.weight}});
  }
  return arr;
}

inline const json& array_field(const json& j, const char* key) {
  static const json empty = json::array();
  if (!j.contains(key)) {
    return empty;
  }
  if (!j.at(key).is_array()) {
    throw ScenarioError(std::string("field '") + key + "' must be an array");
  }
  return j.at(key);
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j) {
  using detail::array_field;
  using detail::optional_field;
  using detail::required;
  if (!j.is_object()) {
    throw ScenarioError("scenario root must be an object");
  }
  Scenario s;
  s.name = optional_field<std::string>(j, "name", "", "scenario");
  s.horizon_h = required<double>(j, "horizon_h", "scenario");
  if (j.contains("clock")) {
    s.clock.dt_h = optional_field<double>(j["clock"], "dt_h", 0.0, "clock");
    s.clock.mode = optional_field<std::string>(j["clock"], "mode", "sequential", "clock");
  }
  s.report_interval_h = optional_field<double>(j, "report_interval_h", 5.0 / 60.0, "scenario");

  const auto& fds = array_field(j, "fd_classes");
  for (std::size_t i = 0; i < fds.size(); ++i) {
    std::string w = "fd_classes[" + std::to_string(i) + "]";
    FdClassSpec c;
    c.name = required<std::string>(fds[i], "name", w);
    c.shape = optional_field<std::string>(fds[i], "shape", "triangular", w);
    if (c.shape == "piecewise_linear") {
      for (const auto& bp : required<json>(fds[i], "breakpoints", w)) {
        if (!bp.is_array() || bp.size() != 2) {
          throw ScenarioError(w + ".breakpoints: entries must be [density, flow] pairs");
        }
        c.breakpoints.emplace_back(bp[0].get<double>(), bp[1].get<double>());
      }
    } else {
      c.max_flow = required<double>(fds[i], "max_flow", w);
      c.critical_density = required<double>(fds[i], "critical_density", w);
      c.jam_density = required<double>(fds[i], "jam_density", w);
    }
    s.fd_classes.push_back(std::move(c));
  }

  const auto& nodes = array_field(j, "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::string w = "nodes[" + std::to_string(i) + "]";
    NodeSpec n;
    n.id = required<int>(nodes[i], "id", w);
    n.kind = detail::parse_node_kind(optional_field<std::string>(nodes[i], "kind", "junction", w), w);
    if (nodes[i].contains("priorities")) {
      n.priorities = detail::parse_priorities(nodes[i]["priorities"], w + ".priorities");
    }
    s.nodes.push_back(std::move(n));
  }

  const auto& links = array_field(j, "links");
  for (std::size_t i = 0; i < links.size(); ++i) {
    std::string w = "links[" + std::to_string(i) + "]";
    LinkSpec l;
    l.id = required<int>(links[i], "id", w);
    l.from = required<int>(links[i], "from", w);
    l.to = required<int>(links[i], "to", w);
    l.length_km = required<double>(links[i], "length_km", w);
    l.lanes = optional_field<int>(links[i], "lanes", 1, w);
    l.fd_class = required<std::string>(links[i], "fd_class", w);
    if (links[i].contains("exit_capacity")) {
      l.exit_capacity = required<double>(links[i], "exit_capacity", w);
    }
    if (links[i].contains("initial_regions")) {
      for (const auto& r : links[i]["initial_regions"]) {
        l.initial_regions.push_back({required<double>(r, "start_km", w), required<double>(r, "density", w)});
      }
    }
    s.links.push_back(std::move(l));
  }

  const auto& routes = array_field(j, "routes");
  for (std::size_t i = 0; i < routes.size(); ++i) {
    std::string w = "routes[" + std::to_string(i) + "]";
    s.routes.push_back({required<std::string>(routes[i], "id", w), required<std::vector<int>>(routes[i], "links", w)});
  }

  const auto& ods = array_field(j, "ods");
  for (std::size_t i = 0; i < ods.size(); ++i) {
    std::string w = "ods[" + std::to_string(i) + "]";
    OdSpec od;
    od.id = required<std::string>(ods[i], "id", w);
    od.origin = required<int>(ods[i], "origin", w);
    od.destination = required<int>(ods[i], "destination", w);
    od.routes = required<std::vector<std::string>>(ods[i], "routes", w);
    for (const auto& d : required<json>(ods[i], "demand", w)) {
      od.demand.push_back({required<double>(d, "t", w + ".demand"), required<double>(d, "rate", w + ".demand")});
    }
    if (ods[i].contains("route_proportions")) {
      for (const auto& p : ods[i]["route_proportions"]) {
        od.route_proportions.push_back(
            {required<double>(p, "t", w + ".route_proportions"),
             required<std::vector<double>>(p, "p", w + ".route_proportions")});
      }
    }
    s.ods.push_back(std::move(od));
  }

  const auto& incidents = array_field(j, "incidents");
  for (std::size_t i = 0; i < incidents.size(); ++i) {
    std::string w = "incidents[" + std::to_string(i) + "]";
    IncidentSpec in;
    in.link = required<int>(incidents[i], "link", w);
    in.start_h = required<double>(incidents[i], "start_h", w);
    in.duration_h = required<double>(incidents[i], "duration_h", w);
    if (incidents[i].contains("blocked_lanes")) {
      in.blocked_lanes = required<int>(incidents[i], "blocked_lanes", w);
    }
    if (incidents[i].contains("capacity_factor")) {
      in.capacity_factor = required<double>(incidents[i], "capacity_factor", w);
    }
    s.incidents.push_back(in);
  }

  const auto& pcs = array_field(j, "priority_changes");
  for (std::size_t i = 0; i < pcs.size(); ++i) {
    std::string w = "priority_changes[" + std::to_string(i) + "]";
    s.priority_changes.push_back({required<double>(pcs[i], "t", w), required<int>(pcs[i], "node", w),
                                  detail::parse_priorities(required<json>(pcs[i], "priorities", w), w)});
  }

  const auto& bns = array_field(j, "bottlenecks");
  for (std::size_t i = 0; i < bns.size(); ++i) {
    std::string w = "bottlenecks[" + std::to_string(i) + "]";
    BottleneckSpec b;
    b.id = required<int>(bns[i], "id", w);
    b.t = required<double>(bns[i], "t", w);
    b.link = required<int>(bns[i], "link", w);
    b.position_km = required<double>(bns[i], "position_km", w);
    b.free_speed = required<double>(bns[i], "free_speed", w);
    b.capacity = required<double>(bns[i], "capacity", w);
    b.route = optional_field<std::vector<int>>(bns[i], "route", {}, w);
    s.bottlenecks.push_back(std::move(b));
  }

  const auto& bus = array_field(j, "bottleneck_updates");
  for (std::size_t i = 0; i < bus.size(); ++i) {
    std::string w = "bottleneck_updates[" + std::to_string(i) + "]";
    s.bottleneck_updates.push_back({required<int>(bus[i], "id", w), required<double>(bus[i], "t", w),
                                    required<double>(bus[i], "free_speed", w),
                                    required<double>(bus[i], "capacity", w)});
  }

  const auto& sensors = array_field(j, "sensors");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    std::string w = "sensors[" + std::to_string(i) + "]";
    s.sensors.push_back({required<std::string>(sensors[i], "id", w), required<int>(sensors[i], "link", w),
                         optional_field<std::string>(sensors[i], "end", "down", w)});
  }
  return s;
}

inline json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["horizon_h"] = s.horizon_h;
  j["clock"] = {{"dt_h", s.clock.dt_h}, {"mode", s.clock.mode}};
  j["report_interval_h"] = s.report_interval_h;
  j["fd_classes"] = json::array();
  for (const auto& c : s.fd_classes) {
    json e{{"name", c.name}, {"shape", c.shape}};
    if (c.shape == "piecewise_linear") {
      e["breakpoints"] = json::array();
      for (auto [k, q] : c.breakpoints) {
        e["breakpoints"].push_back({k, q});
      }
    } else {
      e["max_flow"] = c.max_flow;
      e["critical_density"] = c.critical_density;
      e["jam_density"] = c.jam_density;
    }
    j["fd_classes"].push_back(e);
  }
  j["nodes"] = json::array();
  for (const auto& n : s.nodes) {
    json e{{"id", n.id}, {"kind", to_string(n.kind)}};
    if (!n.priorities.empty()) {
      e["priorities"] = detail::dump_priorities(n.priorities);
    }
    j["nodes"].push_back(e);
  }
  j["links"] = json::array();
  for (const auto& l : s.links) {
    json e{{"id", l.id},         {"from", l.from},   {"to", l.to},
           {"length_km", l.length_km}, {"lanes", l.lanes}, {"fd_class", l.fd_class}};
    if (l.exit_capacity) {
      e["exit_capacity"] = *l.exit_capacity;
    }
    if (!l.initial_regions.empty()) {
      e["initial_regions"] = json::array();
      for (const auto& r : l.initial_regions) {
        e["initial_regions"].push_back({{"start_km", r.start_km}, {"density", r.density}});
      }
    }
    j["links"].push_back(e);
  }
  j["routes"] = json::array();
  for (const auto& r : s.routes) {
    j["routes"].push_back({{"id", r.id}, {"links", r.links}});
  }
  j["ods"] = json::array();
  for (const auto& od : s.ods) {
    json e{{"id", od.id}, {"origin", od.origin}, {"destination", od.destination}, {"routes", od.routes}};
    e["demand"] = json::array();
    for (const auto& d : od.demand) {
      e["demand"].push_back({{"t", d.t}, {"rate", d.rate}});
    }
    if (!od.route_proportions.empty()) {
      e["route_proportions"] = json::array();
      for (const auto& p : od.route_proportions) {
        e["route_proportions"].push_back({{"t", p.t}, {"p", p.p}});
      }
    }
    j["ods"].push_back(e);
  }
  if (!s.incidents.empty()) {
    j["incidents"] = json::array();
    for (const auto& in : s.incidents) {
      json e{{"link", in.link}, {"start_h", in.start_h}, {"duration_h", in.duration_h}};
      if (in.blocked_lanes) {
        e["blocked_lanes"] = *in.blocked_lanes;
      }
      if (in.capacity_factor) {
        e["capacity_factor"] = *in.capacity_factor;
      }
      j["incidents"].push_back(e);
    }
  }
  if (!s.priority_changes.empty()) {
    j["priority_changes"] = json::array();
    for (const auto& pc : s.priority_changes) {
      j["priority_changes"].push_back(
          {{"t", pc.t}, {"node", pc.node}, {"priorities", detail::dump_priorities(pc.priorities)}});
    }
  }
  if (!s.bottlenecks.empty()) {
    j["bottlenecks"] = json::array();
    for (const auto& b : s.bottlenecks) {
      j["bottlenecks"].push_back({{"id", b.id},
                                  {"t", b.t},
                                  {"link", b.link},
                                  {"position_km", b.position_km},
                                  {"free_speed", b.free_speed},
                                  {"capacity", b.capacity},
                                  {"route", b.route}});
    }
  }
  if (!s.bottleneck_updates.empty()) {
    j["bottleneck_updates"] = json::array();
    for (const auto& u : s.bottleneck_updates) {
      j["bottleneck_updates"].push_back(
          {{"id", u.id}, {"t", u.t}, {"free_speed", u.free_speed}, {"capacity", u.capacity}});
    }
  }
  j["sensors"] = json::array();
  for (const auto& se : s.sensors) {
    j["sensors"].push_back({{"id", se.id}, {"link", se.link}, {"end", se.end}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Validation

/// Throws ScenarioError naming the first inconsistency found.
inline void validate_scenario(const Scenario& s) {
  auto fail = [](const std::string& m) { throw ScenarioError(m); };
  if (!(s.horizon_h > 0.0)) {
    fail("horizon_h must be positive");
  }
  if (!(s.report_interval_h > 0.0)) {
    fail("report_interval_h must be positive");
  }
  if (s.clock.dt_h < 0.0) {
    fail("clock.dt_h must be non-negative");
  }
  if (s.clock.mode != "sequential" && s.clock.mode != "distributed") {
    fail("clock.mode must be 'sequential' or 'distributed'");
  }
  if (s.links.empty()) {
    fail("scenario has no links");
  }
  std::set<std::string> fd_names;
  for (const auto& c : s.fd_classes) {
    if (!fd_names.insert(c.name).second) {
      fail("fd class '" + c.name + "' defined twice");
    }
    try {
      (void)c.build();
    } catch (const std::invalid_argument& e) {
      fail("fd class '" + c.name + "': " + e.what());
    }
  }
  std::map<int, const NodeSpec*> nodes;
  for (const auto& n : s.nodes) {
    if (!nodes.emplace(n.id, &n).second) {
      fail("node " + std::to_string(n.id) + " defined twice");
    }
  }
  std::map<int, const LinkSpec*> links;
  for (const auto& l : s.links) {
    std::string w = "link " + std::to_string(l.id);
    if (!links.emplace(l.id, &l).second) {
      fail(w + " defined twice");
    }
    if (!nodes.count(l.from) || !nodes.count(l.to)) {
      fail(w + ": references a missing node");
    }
    if (l.from == l.to) {
      fail(w + ": self loop");
    }
    if (!(l.length_km > 0.0)) {
      fail(w + ": length_km must be positive");
    }
    if (l.lanes < 1) {
      fail(w + ": lanes must be at least 1");
    }
    if (!fd_names.count(l.fd_class)) {
      fail(w + ": unknown fd class '" + l.fd_class + "'");
    }
    if (l.exit_capacity && *l.exit_capacity < 0.0) {
      fail(w + ": exit_capacity must be non-negative");
    }
    if (nodes.at(l.from)->kind == NodeKind::Sink) {
      fail(w + ": leaves sink node " + std::to_string(l.from));
    }
    if (nodes.at(l.to)->kind == NodeKind::Origin) {
      fail(w + ": enters origin node " + std::to_string(l.to));
    }
    double prev = -1.0;
    const auto fd = s.fd_class(l.fd_class).build();
    for (std::size_t i = 0; i < l.initial_regions.size(); ++i) {
      const auto& r = l.initial_regions[i];
      if (i == 0 && r.start_km != 0.0) {
        fail(w + ": first initial region must start at 0");
      }
      if (r.start_km <= prev || r.start_km >= l.length_km) {
        fail(w + ": initial region starts must increase within the link");
      }
      if (r.density < 0.0 || r.density > fd.jam_density()) {
        fail(w + ": initial density outside [0, jam_density]");
      }
      prev = r.start_km;
    }
  }
  for (const auto& n : s.nodes) {
    for (const auto& p : n.priorities) {
      std::string w = "node " + std::to_string(n.id) + " priority";
      if (!links.count(p.upstream) || links.at(p.upstream)->to != n.id) {
        fail(w + ": link " + std::to_string(p.upstream) + " does not enter the node");
      }
      if (!links.count(p.downstream) || links.at(p.downstream)->from != n.id) {
        fail(w + ": link " + std::to_string(p.downstream) + " does not leave the node");
      }
      if (p.weight < 0.0) {
        fail(w + ": negative weight");
      }
    }
    std::map<int, double> colsum;
    for (const auto& p : n.priorities) {
      colsum[p.downstream] += p.weight;
    }
    for (auto [j, sum] : colsum) {
      if (std::abs(sum - 1.0) > 1e-9) {
        fail("node " + std::to_string(n.id) + ": priorities into link " + std::to_string(j) + " sum to " +
             std::to_string(sum) + ", expected 1");
      }
    }
  }
  std::set<std::string> route_ids;
  for (const auto& r : s.routes) {
    std::string w = "route '" + r.id + "'";
    if (!route_ids.insert(r.id).second) {
      fail(w + " defined twice");
    }
    if (r.links.empty()) {
      fail(w + ": no links");
    }
    for (std::size_t k = 0; k < r.links.size(); ++k) {
      if (!links.count(r.links[k])) {
        fail(w + ": link " + std::to_string(r.links[k]) + " does not exist");
      }
      if (k > 0 && links.at(r.links[k - 1])->to != links.at(r.links[k])->from) {
        fail(w + ": links " + std::to_string(r.links[k - 1]) + " and " + std::to_string(r.links[k]) +
             " are not connected");
      }
    }
    if (nodes.at(links.at(r.links.front())->from)->kind != NodeKind::Origin) {
      fail(w + ": does not start at an origin node");
    }
    if (nodes.at(links.at(r.links.back())->to)->kind != NodeKind::Sink) {
      fail(w + ": does not end at a sink node");
    }
    for (std::size_t k = 0; k + 1 < r.links.size(); ++k) {
      if (nodes.at(links.at(r.links[k])->to)->kind != NodeKind::Junction) {
        fail(w + ": passes through a centroid");
      }
    }
  }
  std::set<std::string> od_ids;
  for (const auto& od : s.ods) {
    std::string w = "od '" + od.id + "'";
    if (!od_ids.insert(od.id).second) {
      fail(w + " defined twice");
    }
    if (!nodes.count(od.origin) || nodes.at(od.origin)->kind != NodeKind::Origin) {
      fail(w + ": origin " + std::to_string(od.origin) + " is not an origin node");
    }
    if (!nodes.count(od.destination) || nodes.at(od.destination)->kind != NodeKind::Sink) {
      fail(w + ": destination " + std::to_string(od.destination) + " is not a sink node");
    }
    if (od.routes.empty()) {
      fail(w + ": no routes");
    }
    for (const auto& rid : od.routes) {
      if (!route_ids.count(rid)) {
        fail(w + ": route '" + rid + "' does not exist");
      }
      const auto& r = s.route(rid);
      if (links.at(r.links.front())->from != od.origin || links.at(r.links.back())->to != od.destination) {
        fail(w + ": route '" + rid + "' does not join its origin and destination");
      }
    }
    double prev = -1e300;
    for (const auto& d : od.demand) {
      if (d.t <= prev) {
        fail(w + ": demand times must increase");
      }
      if (d.rate < 0.0 || !std::isfinite(d.rate)) {
        fail(w + ": demand rates must be finite and non-negative");
      }
      prev = d.t;
    }
    prev = -1e300;
    for (const auto& p : od.route_proportions) {
      if (p.t <= prev) {
        fail(w + ": route proportion times must increase");
      }
      if (p.p.size() != od.routes.size()) {
        fail(w + ": route proportion vector has wrong length");
      }
      double sum = 0.0;
      for (double v : p.p) {
        if (v < 0.0 || v > 1.0) {
          fail(w + ": route proportions must lie in [0, 1]");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        fail(w + ": route proportions must sum to 1");
      }
      prev = p.t;
    }
  }
  for (const auto& in : s.incidents) {
    std::string w = "incident on link " + std::to_string(in.link);
    if (!links.count(in.link)) {
      fail(w + ": link does not exist");
    }
    if (!(in.duration_h > 0.0)) {
      fail(w + ": duration must be positive");
    }
    if (in.blocked_lanes.has_value() == in.capacity_factor.has_value()) {
      fail(w + ": give exactly one of blocked_lanes and capacity_factor");
    }
    if (in.blocked_lanes && (*in.blocked_lanes < 0 || *in.blocked_lanes > links.at(in.link)->lanes)) {
      fail(w + ": blocked_lanes exceeds lane count");
    }
    if (in.capacity_factor && (*in.capacity_factor < 0.0 || *in.capacity_factor > 1.0)) {
      fail(w + ": capacity_factor must lie in [0, 1]");
    }
  }
  for (const auto& pc : s.priority_changes) {
    if (!nodes.count(pc.node)) {
      fail("priority change: node " + std::to_string(pc.node) + " does not exist");
    }
  }
  std::set<int> bn_ids;
  for (const auto& b : s.bottlenecks) {
    std::string w = "bottleneck " + std::to_string(b.id);
    if (!bn_ids.insert(b.id).second) {
      fail(w + " defined twice");
    }
    if (!links.count(b.link)) {
      fail(w + ": link " + std::to_string(b.link) + " does not exist");
    }
    const auto* l = links.at(b.link);
    if (b.position_km < 0.0 || b.position_km > l->length_km) {
      fail(w + ": position outside its link");
    }
    const auto fd = s.fd_class(l->fd_class).build();
    if (b.capacity < 0.0 || b.capacity >= fd.max_flow()) {
      fail(w + ": capacity must lie in [0, max_flow)");
    }
    if (b.free_speed < 0.0) {
      fail(w + ": negative free speed");
    }
    if (!b.route.empty()) {
      if (b.route.front() != b.link) {
        fail(w + ": route must start on its link");
      }
      for (std::size_t k = 0; k < b.route.size(); ++k) {
        if (!links.count(b.route[k])) {
          fail(w + ": route link " + std::to_string(b.route[k]) + " does not exist");
        }
        if (k > 0 && links.at(b.route[k - 1])->to != links.at(b.route[k])->from) {
          fail(w + ": route links are not connected");
        }
      }
    }
  }
  for (const auto& u : s.bottleneck_updates) {
    if (!bn_ids.count(u.id)) {
      fail("bottleneck update: unknown bottleneck " + std::to_string(u.id));
    }
  }
  std::set<std::string> sensor_ids;
  for (const auto& se : s.sensors) {
    std::string w = "sensor '" + se.id + "'";
    if (!sensor_ids.insert(se.id).second) {
      fail(w + " defined twice");
    }
    if (!links.count(se.link)) {
      fail(w + ": link " + std::to_string(se.link) + " does not exist");
    }
    if (se.end != "up" && se.end != "down") {
      fail(w + ": end must be 'up' or 'down'");
    }
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError(path + ": cannot open");
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  Scenario s;
  try {
    s = scenario_from_json(j);
    validate_scenario(s);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(path + ": cannot write");
  }
  out << scenario_to_json(s).dump(2) << '\n';
}

}  // namespace ipm
