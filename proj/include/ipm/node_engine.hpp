#pragma once

/// @file node_engine.hpp
/// @brief Routing matrices and capacity-constrained flow allocation at a node.
///
/// Routes are indexed per link: every link carries the distinct route suffixes
/// that start on it. A node stacks the suffixes of its upstream links into R
/// and those of its downstream links into S; T maps each upstream suffix to its
/// continuation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Flows leaving the allocator are rounded down to this grid so that row and
/// column sums are exact and repeated allocations compare bitwise.
inline constexpr double kFlowGrid = 1.0 / 1073741824.0;  // 2^-30 veh/h

inline double snap_flow(double f) { return std::floor(f / kFlowGrid) * kFlowGrid; }

struct NodeTopology {
  int node_id = 0;
  std::vector<int> upstream_links;    // I
  std::vector<int> downstream_links;  // J
  Matrix A_IR;                        // I x R
  Matrix A_JS;                        // J x S
  Matrix T;                           // R x S
  Matrix W;                           // I x J, columns sum to 1

  Eigen::Index I() const { return A_IR.rows(); }
  Eigen::Index J() const { return A_JS.rows(); }
  Eigen::Index R() const { return A_IR.cols(); }
  Eigen::Index S() const { return A_JS.cols(); }

  /// Dimension and stochasticity checks; throws std::invalid_argument.
  void validate() const {
    auto fail = [&](const std::string& what) {
      throw std::invalid_argument("node " + std::to_string(node_id) + ": " + what);
    };
    if (T.rows() != R() || T.cols() != S()) {
      fail("transition matrix has wrong shape");
    }
    if (W.rows() != I() || W.cols() != J()) {
      fail("priority matrix has wrong shape");
    }
    for (Eigen::Index r = 0; r < R(); ++r) {
      if (A_IR.col(r).sum() != 1.0) {
        fail("each upstream route must lie on exactly one link");
      }
    }
    for (Eigen::Index s = 0; s < S(); ++s) {
      if (A_JS.col(s).sum() != 1.0) {
        fail("each downstream route must lie on exactly one link");
      }
    }
    for (Eigen::Index j = 0; j < J(); ++j) {
      if (std::abs(W.col(j).sum() - 1.0) > 1e-9 || (W.col(j).array() < 0.0).any()) {
        fail("priority column " + std::to_string(j) + " is not stochastic");
      }
    }
  }
};

/// Turn proportions p_ij: share of link i's flow bound for link j.
inline Matrix turn_proportions(const NodeTopology& topo, const Vector& P_R) {
  return topo.A_IR * P_R.asDiagonal() * topo.T * topo.A_JS.transpose();
}

/// Downstream flows when every upstream flow passes unhindered.
inline Vector unconstrained_downstream_flows(const NodeTopology& topo, const Vector& F_I, const Vector& P_R) {
  if (F_I.size() != topo.I() || P_R.size() != topo.R()) {
    throw std::invalid_argument("node " + std::to_string(topo.node_id) + ": flow vector dimension mismatch");
  }
  return topo.A_JS * topo.T.transpose() * P_R.asDiagonal() * topo.A_IR.transpose() * F_I;
}

struct AllocationStats {
  int iterations = 0;
  bool guard_hit = false;
};

/// Capacity- and priority-constrained turn flows. Each upstream link sends a
/// single fraction of its demand on all its turns; unused capacity is shared
/// again among links that can still send, weighted by their priorities.
inline Matrix allocate_turn_flows(const Matrix& D_IJ, const Vector& C_J, const Matrix& W,
                                  AllocationStats* stats = nullptr) {
  const Eigen::Index I = D_IJ.rows();
  const Eigen::Index J = D_IJ.cols();
  Matrix F = Matrix::Zero(I, J);
  Matrix Dr = D_IJ;
  Vector Cr = C_J.cwiseMax(0.0);
  std::vector<bool> up(static_cast<std::size_t>(I), false);
  for (Eigen::Index i = 0; i < I; ++i) {
    up[static_cast<std::size_t>(i)] = D_IJ.row(i).sum() > 0.0;
  }
  auto any_up = [&] { return std::any_of(up.begin(), up.end(), [](bool b) { return b; }); };
  const double tol = 1e-12;
  int iter = 0;
  bool guard = false;
  while (any_up()) {
    ++iter;
    // Capacity shares of the links still sending on each turn.
    Matrix Cs = Matrix::Zero(I, J);
    for (Eigen::Index j = 0; j < J; ++j) {
      double wsum = 0.0;
      int n = 0;
      for (Eigen::Index i = 0; i < I; ++i) {
        if (up[static_cast<std::size_t>(i)] && Dr(i, j) > 0.0) {
          wsum += W(i, j);
          ++n;
        }
      }
      for (Eigen::Index i = 0; i < I; ++i) {
        if (up[static_cast<std::size_t>(i)] && Dr(i, j) > 0.0) {
          double share = wsum > 0.0 ? W(i, j) / wsum : 1.0 / n;
          Cs(i, j) = share * Cr(j);
        }
      }
    }
    double increment = 0.0;
    Matrix Fs = Matrix::Zero(I, J);
    for (Eigen::Index i = 0; i < I; ++i) {
      if (!up[static_cast<std::size_t>(i)]) {
        continue;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < J; ++j) {
        if (Dr(i, j) > 0.0) {
          alpha = std::min(alpha, Cs(i, j) / Dr(i, j));
        }
      }
      Fs.row(i) = alpha * Dr.row(i);
      increment += Fs.row(i).sum();
    }
    F += Fs;
    Dr -= Fs;
    Cr -= Fs.colwise().sum().transpose();
    for (Eigen::Index j = 0; j < J; ++j) {
      double scale = std::max(1.0, C_J(j));
      if (Cr(j) <= tol * scale) {
        Cr(j) = 0.0;
      }
    }
    for (Eigen::Index i = 0; i < I; ++i) {
      double scale = std::max(1.0, D_IJ.row(i).sum());
      if (Dr.row(i).sum() <= tol * scale) {
        up[static_cast<std::size_t>(i)] = false;
      }
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      if (Cr(j) == 0.0) {
        for (Eigen::Index i = 0; i < I; ++i) {
          if (D_IJ(i, j) > 0.0) {
            up[static_cast<std::size_t>(i)] = false;
          }
        }
      }
    }
    if (increment < tol || iter >= 10000) {
      guard = any_up();
      break;
    }
  }
  if (stats) {
    stats->iterations = iter;
    stats->guard_hit = guard;
  }
  return F.unaryExpr([](double f) { return snap_flow(f); });
}

/// Turn flows F_IJ from upstream demands, route proportions and downstream
/// inflow capacities.
inline Matrix allocate_flows(const NodeTopology& topo, const Vector& D_I, const Vector& P_R, const Vector& C_J,
                             AllocationStats* stats = nullptr) {
  if (D_I.size() != topo.I() || P_R.size() != topo.R() || C_J.size() != topo.J()) {
    throw std::invalid_argument("node " + std::to_string(topo.node_id) + ": snapshot dimension mismatch");
  }
  Matrix D_IJ = D_I.asDiagonal() * turn_proportions(topo, P_R);
  return allocate_turn_flows(D_IJ, C_J, topo.W, stats);
}

struct AggregateFlows {
  Vector F_I;
  Vector F_J;
};

inline AggregateFlows aggregate_flows(const Matrix& F_IJ) {
  return {F_IJ.rowwise().sum(), F_IJ.colwise().sum().transpose()};
}

struct RouteState {
  Vector F_S;
  Vector P_S;
};

/// Downstream route flows and their within-link proportions. Links that
/// receive no flow keep `previous_P_S`.
inline RouteState downstream_route_state(const NodeTopology& topo, const Vector& F_I, const Vector& P_R,
                                         const Vector& previous_P_S) {
  RouteState out;
  out.F_S = topo.T.transpose() * P_R.asDiagonal() * topo.A_IR.transpose() * F_I;
  Vector link_total = topo.A_JS.transpose() * (topo.A_JS * out.F_S);
  out.P_S = previous_P_S.size() == topo.S() ? previous_P_S : Vector::Zero(topo.S());
  for (Eigen::Index s = 0; s < topo.S(); ++s) {
    if (link_total(s) > 0.0) {
      out.P_S(s) = out.F_S(s) / link_total(s);
    }
  }
  return out;
}

}  // namespace ipm
