#pragma once

// Multi-route cell transmission model on the same network, node model and
// scenario inputs. It serves as the surrogate reference in experiments.
// Moving bottlenecks are not represented.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

#include "ipm/network.hpp"
#include "ipm/node_engine.hpp"
#include "ipm/output.hpp"
#include "ipm/scenario.hpp"

namespace ipm {

struct CellModelOptions {
  double cell_km = 0.05;
  double courant = 0.9;
};

class CellModel {
 public:
  CellModel(const Scenario& s, CellModelOptions opt = {}) : s_(s), net_(compile_network(s)) {
    double dt = std::numeric_limits<double>::infinity();
    for (const auto& cl : net_.links) {
      Link l;
      l.n = std::max(1, static_cast<int>(std::ceil(cl.length / opt.cell_km - 1e-9)));
      l.dx = cl.length / l.n;
      l.R = cl.routes.size();
      l.k.assign(static_cast<std::size_t>(l.n) * std::max<std::size_t>(l.R, 1), 0.0);
      const auto& spec = s.link(cl.id);
      for (int c = 0; c < l.n; ++c) {
        double x = (c + 0.5) * l.dx;
        double dens = 0.0;
        for (const auto& r : spec.initial_regions) {
          if (x >= r.start_km) {
            dens = r.density;
          }
        }
        for (std::size_t r = 0; r < l.R; ++r) {
          l.k[static_cast<std::size_t>(c) * l.R + r] = dens / static_cast<double>(l.R);
        }
      }
      dt = std::min(dt, opt.courant * l.dx / cl.max_speed());
      links_.push_back(std::move(l));
    }
    // Whole number of steps per report interval.
    const double interval = s.report_interval_h;
    dt_ = interval / std::ceil(interval / dt);
    queues_.resize(net_.nodes.size());
    for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
      queues_[n].assign(net_.nodes[n].origin_routes.size(), 0.0);
    }
    curves_.t0 = 0.0;
    curves_.horizon = s.horizon_h;
    for (std::size_t i = 0; i < net_.links.size(); ++i) {
      const int id = net_.links[i].id;
      curves_.link_in[id] = CumulativeCurve(0.0);
      curves_.link_out[id] = CumulativeCurve(0.0);
      curves_.link_initial[id] = total(i);
    }
    for (const auto& n : net_.nodes) {
      if (n.kind == NodeKind::Origin) {
        curves_.origin_arrivals[n.id] = CumulativeCurve(0.0);
        curves_.origin_departures[n.id] = CumulativeCurve(0.0);
      }
    }
  }

  double dt() const { return dt_; }

  const NetworkCurves& run() {
    const long steps = std::lround(std::ceil(s_.horizon_h / dt_ - 1e-9));
    for (long k = 0; k < steps; ++k) {
      const double t = k * dt_;
      step(t, std::min(dt_, s_.horizon_h - t));
    }
    return curves_;
  }

 private:
  struct Link {
    int n = 1;
    double dx = 0.0;
    std::size_t R = 0;
    std::vector<double> k;  // cell-major, per route, veh/km
  };

  double cell_total(const Link& l, int c) const {
    double sum = 0.0;
    for (std::size_t r = 0; r < l.R; ++r) {
      sum += l.k[static_cast<std::size_t>(c) * l.R + r];
    }
    return sum;
  }

  double total(std::size_t i) const {
    double sum = 0.0;
    for (int c = 0; c < links_[i].n; ++c) {
      sum += cell_total(links_[i], c) * links_[i].dx;
    }
    return sum;
  }

  std::vector<double> composition(const Link& l, int c) const {
    std::vector<double> p(l.R, l.R ? 1.0 / static_cast<double>(l.R) : 0.0);
    double tot = cell_total(l, c);
    if (tot > 0.0) {
      for (std::size_t r = 0; r < l.R; ++r) {
        p[r] = l.k[static_cast<std::size_t>(c) * l.R + r] / tot;
      }
    }
    return p;
  }

  double exit_factor(std::size_t li, double t) const {
    double f = 1.0;
    for (const auto& in : s_.incidents) {
      if (net_.link_of(in.link) == static_cast<int>(li) && t >= in.start_h && t < in.start_h + in.duration_h) {
        f = std::min(f, in.capacity_factor ? *in.capacity_factor
                                           : static_cast<double>(net_.links[li].lanes - *in.blocked_lanes) /
                                                 net_.links[li].lanes);
      }
    }
    return f;
  }

  void step(double t, double h) {
    // Route flows (veh/h) entering and leaving each link during this step.
    std::vector<std::vector<double>> in(links_.size()), out(links_.size());
    for (std::size_t i = 0; i < links_.size(); ++i) {
      in[i].assign(links_[i].R, 0.0);
      out[i].assign(links_[i].R, 0.0);
    }
    for (const auto& pc : s_.priority_changes) {
      if (pc.t <= t && !applied_priority_.count(&pc)) {
        auto& node = net_.nodes[static_cast<std::size_t>(net_.node_of(pc.node))];
        node.topo.W = build_priorities(net_, node, pc.priorities);
        applied_priority_.insert(&pc);
      }
    }
    for (std::size_t n = 0; n < net_.nodes.size(); ++n) {
      node_step(n, t, h, in, out);
    }
    for (std::size_t i = 0; i < links_.size(); ++i) {
      auto& l = links_[i];
      const auto& fd = net_.links[i].fd;
      // Interface fluxes per route; index c is the boundary upstream of cell c.
      std::vector<double> flux(static_cast<std::size_t>(l.n + 1) * l.R, 0.0);
      for (std::size_t r = 0; r < l.R; ++r) {
        flux[r] = in[i][r];
        flux[static_cast<std::size_t>(l.n) * l.R + r] = out[i][r];
      }
      for (int c = 0; c + 1 < l.n; ++c) {
        double f = std::min(fd.sending_flow(cell_total(l, c)), fd.inflow_capacity(cell_total(l, c + 1)));
        auto p = composition(l, c);
        for (std::size_t r = 0; r < l.R; ++r) {
          flux[static_cast<std::size_t>(c + 1) * l.R + r] = f * p[r];
        }
      }
      for (int c = 0; c < l.n; ++c) {
        for (std::size_t r = 0; r < l.R; ++r) {
          auto idx = static_cast<std::size_t>(c) * l.R + r;
          l.k[idx] += h / l.dx * (flux[idx] - flux[idx + l.R]);
          l.k[idx] = std::max(0.0, l.k[idx]);
        }
      }
      double fin = 0.0, fout = 0.0;
      for (std::size_t r = 0; r < l.R; ++r) {
        fin += in[i][r];
        fout += out[i][r];
      }
      const int id = net_.links[i].id;
      curves_.link_in[id].set_slope(t, fin);
      curves_.link_out[id].set_slope(t, fout);
    }
  }

  void node_step(std::size_t n, double t, double h, std::vector<std::vector<double>>& in,
                 std::vector<std::vector<double>>& out) {
    const auto& node = net_.nodes[n];
    const auto& topo = node.topo;
    const Eigen::Index I = topo.I(), J = topo.J();
    Vector D = Vector::Zero(I), P_R = Vector::Zero(topo.R()), C = Vector::Zero(J), prev = Vector::Zero(topo.S());
    for (Eigen::Index j = 0; j < J; ++j) {
      auto lj = static_cast<std::size_t>(node.down[static_cast<std::size_t>(j)]);
      C(j) = net_.links[lj].fd.inflow_capacity(cell_total(links_[lj], 0));
    }
    std::vector<double> arrivals;
    if (node.kind == NodeKind::Origin) {
      arrivals.assign(node.origin_routes.size(), 0.0);
      double a = 0.0;
      for (const auto& od : s_.ods) {
        if (od.origin != node.id) {
          continue;
        }
        double rate = od.rate_at(t);
        auto p = od.proportions_at(t);
        for (std::size_t k = 0; k < od.routes.size(); ++k) {
          arrivals[static_cast<std::size_t>(node.origin_route_index.at(s_.route(od.routes[k]).links))] += rate * p[k];
        }
        a += rate;
      }
      auto& q = queues_[n];
      double avail = 0.0;
      for (std::size_t r = 0; r < q.size(); ++r) {
        avail += q[r] + arrivals[r] * h;
      }
      D(0) = avail / h;
      for (std::size_t r = 0; r < q.size(); ++r) {
        P_R(static_cast<Eigen::Index>(r)) = avail > 0.0 ? (q[r] + arrivals[r] * h) / avail : 1.0 / q.size();
      }
      curves_.origin_arrivals[node.id].set_slope(t, a);
    } else {
      for (Eigen::Index i = 0; i < I; ++i) {
        auto li = static_cast<std::size_t>(node.up[static_cast<std::size_t>(i)]);
        const auto& l = links_[li];
        D(i) = std::min(net_.links[li].fd.sending_flow(cell_total(l, l.n - 1)),
                        net_.links[li].exit_capacity * exit_factor(li, t));
        auto p = composition(l, l.n - 1);
        for (std::size_t r = 0; r < p.size(); ++r) {
          P_R(node.r_offset[static_cast<std::size_t>(i)] + static_cast<Eigen::Index>(r)) = p[r];
        }
      }
    }
    Vector F_I;
    if (node.kind == NodeKind::Sink) {
      F_I = D;
    } else {
      F_I = aggregate_flows(allocate_flows(topo, D, P_R, C)).F_I;
      Vector F_S = downstream_route_state(topo, F_I, P_R, prev).F_S;
      for (Eigen::Index j = 0; j < J; ++j) {
        auto lj = static_cast<std::size_t>(node.down[static_cast<std::size_t>(j)]);
        for (std::size_t r = 0; r < links_[lj].R; ++r) {
          in[lj][r] = F_S(node.s_offset[static_cast<std::size_t>(j)] + static_cast<Eigen::Index>(r));
        }
      }
    }
    if (node.kind == NodeKind::Origin) {
      auto& q = queues_[n];
      for (std::size_t r = 0; r < q.size(); ++r) {
        q[r] = std::max(0.0, q[r] + arrivals[r] * h - F_I(0) * P_R(static_cast<Eigen::Index>(r)) * h);
      }
      curves_.origin_departures[node.id].set_slope(t, F_I(0));
      return;
    }
    for (Eigen::Index i = 0; i < I; ++i) {
      auto li = static_cast<std::size_t>(node.up[static_cast<std::size_t>(i)]);
      for (std::size_t r = 0; r < links_[li].R; ++r) {
        out[li][r] = F_I(i) * P_R(node.r_offset[static_cast<std::size_t>(i)] + static_cast<Eigen::Index>(r));
      }
    }
  }

  Scenario s_;
  CompiledNetwork net_;
  std::vector<Link> links_;
  std::vector<std::vector<double>> queues_;
  std::set<const PriorityChange*> applied_priority_;
  NetworkCurves curves_;
  double dt_ = 0.0;
};

}  // namespace ipm
