#pragma once

#include <string>
#include <vector>

#include "ipm/experiment.hpp"
#include "ipm/scenario.hpp"
#include "support/godunov.hpp"

namespace fixtures {

inline std::string path(const std::string& name) { return std::string(IPM_SOURCE_DIR) + "/scenarios/" + name; }

inline ipm::Scenario load(const std::string& name) { return ipm::load_scenario(path(name)); }

inline oracle::Curve curve_of(const ipm::FdClassSpec& c) {
  if (c.shape == "triangular") {
    return oracle::triangular(c.max_flow, c.critical_density, c.jam_density);
  }
  oracle::Curve out;
  for (auto [k, q] : c.breakpoints) {
    out.pts.push_back({k, q});
  }
  return out;
}

/// Origin 1, link 1 of the given length, sink 2; one route and one OD.
inline ipm::Scenario single_link(const ipm::FdClassSpec& fd, double length_km, double horizon_h) {
  ipm::Scenario s;
  s.name = "single-link";
  s.horizon_h = horizon_h;
  s.fd_classes = {fd};
  s.nodes = {{1, ipm::NodeKind::Origin, {}}, {2, ipm::NodeKind::Sink, {}}};
  ipm::LinkSpec l;
  l.id = 1;
  l.from = 1;
  l.to = 2;
  l.length_km = length_km;
  l.fd_class = fd.name;
  s.links = {l};
  s.routes = {{"r", {1}}};
  ipm::OdSpec od;
  od.id = "od";
  od.origin = 1;
  od.destination = 2;
  od.routes = {"r"};
  od.demand = {{0.0, 0.0}};
  s.ods = {od};
  s.sensors = {{"out", 1, "down"}};
  return s;
}

inline ipm::FdClassSpec triangular_class(const std::string& name, double qmax, double kc, double kj) {
  ipm::FdClassSpec c;
  c.name = name;
  c.max_flow = qmax;
  c.critical_density = kc;
  c.jam_density = kj;
  return c;
}

/// Twenty corridor variants with time-varying demand: ten random demand
/// perturbations and ten lane-blocking incidents of varying size and timing.
inline std::vector<ipm::Scenario> corridor_variants() {
  const auto base = load("corridor.json");
  std::vector<ipm::Scenario> out;
  ipm::ExperimentSpec p{ipm::ExperimentKind::DemandPerturb};
  p.alpha = 0.2;
  p.repetitions = 10;
  p.seed = 4242;
  for (auto& g : ipm::generate_experiment(base, p)) {
    out.push_back(std::move(g.scenario));
  }
  for (int i = 0; i < 10; ++i) {
    ipm::ExperimentSpec e{ipm::ExperimentKind::Incident};
    e.link = i % 2 == 0 ? 3 : 5;
    e.blocked_lanes = 1 + i % 5;
    e.start_h = 0.5 + 0.1 * i;
    e.duration_h = 0.25 + 0.05 * i;
    out.push_back(ipm::generate_experiment(base, e).front().scenario);
  }
  return out;
}

}  // namespace fixtures
