#pragma once

/// @file network.hpp
/// @brief Scenario compiled into index-based links and nodes with their
/// routing matrices. Matrices are built once per scenario.

#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipm/fundamental_diagram.hpp"
#include "ipm/node_engine.hpp"
#include "ipm/scenario.hpp"

namespace ipm {

using RouteLinks = std::vector<int>;  // link ids, origin to destination

struct CompiledLink {
  int id = 0;
  int from = 0;  // node index
  int to = 0;    // node index
  double length = 0.0;
  int lanes = 1;
  FundamentalDiagram fd;
  double exit_capacity = 0.0;
  std::vector<RouteLinks> routes;  // suffixes starting on this link, sorted
  std::map<RouteLinks, int> route_index;

  /// Upper bound on any package speed on this link.
  double max_speed() const { return std::max(fd.free_speed(), fd.max_wave_speed()); }
};

struct CompiledNode {
  int id = 0;
  NodeKind kind = NodeKind::Junction;
  std::vector<int> up;    // link indices (empty for origins)
  std::vector<int> down;  // link indices
  NodeTopology topo;
  std::vector<int> r_offset;      // first R index of each upstream entry
  std::vector<int> s_offset;      // first S index of each downstream link
  std::vector<RouteLinks> origin_routes;  // origins only: full routes, sorted
  std::map<RouteLinks, int> origin_route_index;
};

struct CompiledNetwork {
  std::vector<CompiledLink> links;
  std::vector<CompiledNode> nodes;
  std::map<int, int> link_index;
  std::map<int, int> node_index;

  int link_of(int id) const {
    auto it = link_index.find(id);
    if (it == link_index.end()) {
      throw ScenarioError("unknown link " + std::to_string(id));
    }
    return it->second;
  }
  int node_of(int id) const {
    auto it = node_index.find(id);
    if (it == node_index.end()) {
      throw ScenarioError("unknown node " + std::to_string(id));
    }
    return it->second;
  }

  /// Largest admissible step for the two-stage scheme: no link may be
  /// crossed by two node zones in one step.
  double max_dt() const {
    double dt = std::numeric_limits<double>::infinity();
    for (const auto& l : links) {
      dt = std::min(dt, l.length / (2.0 * l.max_speed()));
    }
    return dt;
  }
};

/// Column-stochastic priorities. Explicit weights are used where given;
/// other columns share capacity in proportion to the feeders' capacities.
inline Matrix build_priorities(const CompiledNetwork& net, const CompiledNode& node,
                               const std::vector<PrioritySpec>& given) {
  const auto I = static_cast<Eigen::Index>(node.kind == NodeKind::Origin ? 1 : node.up.size());
  const auto J = static_cast<Eigen::Index>(node.down.size());
  Matrix W = Matrix::Zero(I, J);
  std::vector<bool> explicit_col(static_cast<std::size_t>(J), false);
  for (const auto& p : given) {
    auto ui = std::find(node.up.begin(), node.up.end(), net.link_of(p.upstream));
    auto dj = std::find(node.down.begin(), node.down.end(), net.link_of(p.downstream));
    if (ui == node.up.end() || dj == node.down.end()) {
      throw ScenarioError("node " + std::to_string(node.id) + ": priority references a non-incident link");
    }
    auto i = ui - node.up.begin();
    auto j = dj - node.down.begin();
    W(i, j) = p.weight;
    explicit_col[static_cast<std::size_t>(j)] = true;
  }
  for (Eigen::Index j = 0; j < J; ++j) {
    if (!explicit_col[static_cast<std::size_t>(j)]) {
      for (Eigen::Index i = 0; i < I; ++i) {
        W(i, j) = node.kind == NodeKind::Origin ? 1.0 : net.links[static_cast<std::size_t>(node.up[i])].fd.max_flow();
      }
    }
    double sum = W.col(j).sum();
    if (sum > 0.0) {
      W.col(j) /= sum;
    } else {
      W.col(j).setConstant(1.0 / static_cast<double>(I));
    }
  }
  return W;
}

inline CompiledNetwork compile_network(const Scenario& s) {
  CompiledNetwork net;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    net.node_index[s.nodes[i].id] = static_cast<int>(i);
    CompiledNode n;
    n.id = s.nodes[i].id;
    n.kind = s.nodes[i].kind;
    n.topo.node_id = n.id;
    net.nodes.push_back(std::move(n));
  }
  for (std::size_t i = 0; i < s.links.size(); ++i) {
    const auto& ls = s.links[i];
    net.link_index[ls.id] = static_cast<int>(i);
    CompiledLink l;
    l.id = ls.id;
    l.from = net.node_of(ls.from);
    l.to = net.node_of(ls.to);
    l.length = ls.length_km;
    l.lanes = ls.lanes;
    l.fd = s.fd_class(ls.fd_class).build();
    l.exit_capacity = ls.exit_capacity.value_or(l.fd.max_flow());
    net.links.push_back(std::move(l));
  }
  // Incident link lists, ordered by link id.
  std::vector<int> order(net.links.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = static_cast<int>(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) { return net.links[a].id < net.links[b].id; });
  for (int li : order) {
    net.nodes[static_cast<std::size_t>(net.links[static_cast<std::size_t>(li)].to)].up.push_back(li);
    net.nodes[static_cast<std::size_t>(net.links[static_cast<std::size_t>(li)].from)].down.push_back(li);
  }
  // Route suffixes per link, and full routes per origin.
  for (const auto& od : s.ods) {
    for (const auto& rid : od.routes) {
      const auto& r = s.route(rid);
      for (std::size_t k = 0; k < r.links.size(); ++k) {
        RouteLinks suffix(r.links.begin() + static_cast<std::ptrdiff_t>(k), r.links.end());
        auto& cl = net.links[static_cast<std::size_t>(net.link_of(r.links[k]))];
        if (std::find(cl.routes.begin(), cl.routes.end(), suffix) == cl.routes.end()) {
          cl.routes.push_back(suffix);
        }
      }
      auto& on = net.nodes[static_cast<std::size_t>(net.node_of(od.origin))];
      if (std::find(on.origin_routes.begin(), on.origin_routes.end(), r.links) == on.origin_routes.end()) {
        on.origin_routes.push_back(r.links);
      }
    }
  }
  for (auto& l : net.links) {
    std::sort(l.routes.begin(), l.routes.end());
    for (std::size_t k = 0; k < l.routes.size(); ++k) {
      l.route_index[l.routes[k]] = static_cast<int>(k);
    }
  }
  for (auto& n : net.nodes) {
    std::sort(n.origin_routes.begin(), n.origin_routes.end());
    for (std::size_t k = 0; k < n.origin_routes.size(); ++k) {
      n.origin_route_index[n.origin_routes[k]] = static_cast<int>(k);
    }
  }
  // Routing matrices.
  for (auto& n : net.nodes) {
    std::vector<const std::vector<RouteLinks>*> up_routes;
    if (n.kind == NodeKind::Origin) {
      up_routes.push_back(&n.origin_routes);
    } else {
      for (int li : n.up) {
        up_routes.push_back(&net.links[static_cast<std::size_t>(li)].routes);
      }
    }
    int R = 0;
    for (const auto* rs : up_routes) {
      n.r_offset.push_back(R);
      R += static_cast<int>(rs->size());
    }
    int S = 0;
    for (int lj : n.down) {
      n.s_offset.push_back(S);
      S += static_cast<int>(net.links[static_cast<std::size_t>(lj)].routes.size());
    }
    const auto I = static_cast<Eigen::Index>(up_routes.size());
    const auto J = static_cast<Eigen::Index>(n.down.size());
    n.topo.A_IR = Matrix::Zero(I, R);
    n.topo.A_JS = Matrix::Zero(J, S);
    n.topo.T = Matrix::Zero(R, S);
    for (Eigen::Index i = 0; i < I; ++i) {
      const auto& rs = *up_routes[static_cast<std::size_t>(i)];
      for (std::size_t k = 0; k < rs.size(); ++k) {
        const int r = n.r_offset[static_cast<std::size_t>(i)] + static_cast<int>(k);
        n.topo.A_IR(i, r) = 1.0;
        if (n.kind == NodeKind::Sink) {
          continue;
        }
        // Continuation of the route past this node.
        RouteLinks next = n.kind == NodeKind::Origin ? rs[k] : RouteLinks(rs[k].begin() + 1, rs[k].end());
        if (next.empty()) {
          throw ScenarioError("node " + std::to_string(n.id) + ": route ends at a non-sink node");
        }
        const int lj = net.link_of(next.front());
        auto pos = std::find(n.down.begin(), n.down.end(), lj);
        if (pos == n.down.end()) {
          throw ScenarioError("node " + std::to_string(n.id) + ": route continues on a non-incident link");
        }
        const auto j = pos - n.down.begin();
        const int s = n.s_offset[static_cast<std::size_t>(j)] +
                      net.links[static_cast<std::size_t>(lj)].route_index.at(next);
        n.topo.T(r, s) = 1.0;
      }
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      const auto& lk = net.links[static_cast<std::size_t>(n.down[static_cast<std::size_t>(j)])];
      for (std::size_t k = 0; k < lk.routes.size(); ++k) {
        n.topo.A_JS(j, n.s_offset[static_cast<std::size_t>(j)] + static_cast<int>(k)) = 1.0;
      }
    }
    n.topo.W = build_priorities(net, n, s.node(n.id).priorities);
  }
  return net;
}

}  // namespace ipm
