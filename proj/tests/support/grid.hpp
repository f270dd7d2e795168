#pragma once

// Synthetic 200-link network: a 10 x 10 grid of junctions with eastbound and
// southbound links (180), ten origin connectors on the west edge and ten sink
// connectors on the east edge. Routes run east, turn south once, then east
// again to a sink.

#include <random>
#include <string>

#include "ipm/scenario.hpp"

namespace grid {

inline ipm::Scenario make_grid(std::uint64_t seed, double horizon_h = 1.5) {
  constexpr int N = 10;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> len(0.4, 0.9);
  ipm::Scenario s;
  s.name = "grid200";
  s.horizon_h = horizon_h;
  ipm::FdClassSpec fd;
  fd.name = "street";
  fd.max_flow = 1800;
  fd.critical_density = 30;
  fd.jam_density = 150;
  s.fd_classes = {fd};
  auto junction = [](int r, int c) { return 1000 + r * N + c; };
  auto east = [](int r, int c) { return 10000 + r * N + c; };
  auto south = [](int r, int c) { return 20000 + r * N + c; };
  auto add_link = [&](int id, int from, int to, double length) {
    ipm::LinkSpec l;
    l.id = id;
    l.from = from;
    l.to = to;
    l.length_km = length;
    l.fd_class = "street";
    s.links.push_back(l);
  };
  for (int r = 0; r < N; ++r) {
    s.nodes.push_back({r + 1, ipm::NodeKind::Origin, {}});
    s.nodes.push_back({100 + r, ipm::NodeKind::Sink, {}});
    for (int c = 0; c < N; ++c) {
      s.nodes.push_back({junction(r, c), ipm::NodeKind::Junction, {}});
    }
  }
  for (int r = 0; r < N; ++r) {
    add_link(r + 1, r + 1, junction(r, 0), 0.5);
    add_link(500 + r, junction(r, N - 1), 100 + r, 0.5);
    for (int c = 0; c < N; ++c) {
      if (c + 1 < N) {
        add_link(east(r, c), junction(r, c), junction(r, c + 1), len(rng));
      }
      if (r + 1 < N) {
        add_link(south(r, c), junction(r, c), junction(r + 1, c), len(rng));
      }
    }
  }
  std::uniform_int_distribution<int> col(0, N - 1);
  std::uniform_real_distribution<double> rate(300, 900);
  for (int r = 0; r < N; ++r) {
    ipm::OdSpec od;
    od.id = "o" + std::to_string(r);
    od.origin = r + 1;
    for (int k = 0; k < 3; ++k) {
      const int turn = col(rng);
      const int r2 = std::uniform_int_distribution<int>(r, N - 1)(rng);
      ipm::RouteSpec route;
      route.id = "o" + std::to_string(r) + "_" + std::to_string(k);
      route.links.push_back(r + 1);
      for (int c = 0; c < turn; ++c) {
        route.links.push_back(east(r, c));
      }
      for (int rr = r; rr < r2; ++rr) {
        route.links.push_back(south(rr, turn));
      }
      for (int c = turn; c + 1 < N; ++c) {
        route.links.push_back(east(r2, c));
      }
      route.links.push_back(500 + r2);
      // One destination per OD: keep the routes that end at the first one.
      if (k == 0) {
        od.destination = 100 + r2;
      } else if (100 + r2 != od.destination) {
        continue;
      }
      bool duplicate = false;
      for (const auto& existing : s.routes) {
        duplicate = duplicate || existing.links == route.links;
      }
      if (duplicate) {
        continue;
      }
      s.routes.push_back(route);
      od.routes.push_back(route.id);
    }
    od.demand = {{0.0, rate(rng)}, {0.4, rate(rng) + 600}, {0.9, rate(rng)}};
    s.ods.push_back(od);
  }
  return s;
}

}  // namespace grid
