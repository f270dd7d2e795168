#pragma once

/// @file calibration.hpp
/// @brief Weighted least-squares fit of scenario parameters to reference
/// sensor counts and OD travel times, with iterative re-weighting of the two
/// channels and a bounded Nelder-Mead inner search.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipm/output.hpp"
#include "ipm/scenario.hpp"
#include "ipm/sim_engine.hpp"

namespace ipm {

enum class ParamKind { MaxFlow, CriticalDensity, JamDensity, Priority, BottleneckCapacity, ExitCapacity };

inline ParamKind parse_param_kind(const std::string& s) {
  if (s == "max_flow") return ParamKind::MaxFlow;
  if (s == "critical_density") return ParamKind::CriticalDensity;
  if (s == "jam_density") return ParamKind::JamDensity;
  if (s == "priority") return ParamKind::Priority;
  if (s == "bottleneck_capacity") return ParamKind::BottleneckCapacity;
  if (s == "exit_capacity") return ParamKind::ExitCapacity;
  throw std::invalid_argument("unknown parameter kind '" + s + "'");
}

inline const char* to_string(ParamKind k) {
  switch (k) {
    case ParamKind::MaxFlow: return "max_flow";
    case ParamKind::CriticalDensity: return "critical_density";
    case ParamKind::JamDensity: return "jam_density";
    case ParamKind::Priority: return "priority";
    case ParamKind::BottleneckCapacity: return "bottleneck_capacity";
    case ParamKind::ExitCapacity: return "exit_capacity";
  }
  return "?";
}

/// One calibrated quantity. FD parameters name a class; a priority names the
/// node and the (upstream, downstream) turn whose weight it sets, the other
/// feeders of that downstream link share the remainder.
struct Parameter {
  std::string name;
  ParamKind kind = ParamKind::MaxFlow;
  std::string fd_class;
  int node = 0;
  int upstream = 0;
  int downstream = 0;
  int target = 0;  // bottleneck or link id
  double lower = 0.0;
  double upper = 0.0;
};

inline double read_parameter(const Scenario& s, const Parameter& p) {
  switch (p.kind) {
    case ParamKind::MaxFlow: return s.fd_class(p.fd_class).max_flow;
    case ParamKind::CriticalDensity: return s.fd_class(p.fd_class).critical_density;
    case ParamKind::JamDensity: return s.fd_class(p.fd_class).jam_density;
    case ParamKind::Priority:
      for (const auto& w : s.node(p.node).priorities) {
        if (w.upstream == p.upstream && w.downstream == p.downstream) {
          return w.weight;
        }
      }
      throw ScenarioError(p.name + ": node " + std::to_string(p.node) + " has no explicit weight for that turn");
    case ParamKind::BottleneckCapacity:
      for (const auto& b : s.bottlenecks) {
        if (b.id == p.target) {
          return b.capacity;
        }
      }
      throw ScenarioError(p.name + ": unknown bottleneck " + std::to_string(p.target));
    case ParamKind::ExitCapacity: {
      const auto& l = s.link(p.target);
      return l.exit_capacity.value_or(s.fd_class(l.fd_class).build().max_flow());
    }
  }
  return 0.0;
}

inline Scenario apply_parameters(const Scenario& base, const std::vector<Parameter>& params,
                                 const std::vector<double>& theta) {
  if (theta.size() != params.size()) {
    throw std::invalid_argument("parameter vector has the wrong length");
  }
  Scenario s = base;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const double v = theta[i];
    auto fd_class = [&]() -> FdClassSpec& {
      for (auto& c : s.fd_classes) {
        if (c.name == p.fd_class) {
          return c;
        }
      }
      throw ScenarioError(p.name + ": unknown fd class '" + p.fd_class + "'");
    };
    switch (p.kind) {
      case ParamKind::MaxFlow: fd_class().max_flow = v; break;
      case ParamKind::CriticalDensity: fd_class().critical_density = v; break;
      case ParamKind::JamDensity: fd_class().jam_density = v; break;
      case ParamKind::Priority: {
        NodeSpec* node = nullptr;
        for (auto& n : s.nodes) {
          if (n.id == p.node) {
            node = &n;
          }
        }
        if (!node) {
          throw ScenarioError(p.name + ": unknown node " + std::to_string(p.node));
        }
        std::vector<int> feeders;
        for (const auto& l : s.links) {
          if (l.to == p.node && l.id != p.upstream) {
            feeders.push_back(l.id);
          }
        }
        std::vector<PrioritySpec> kept;
        for (const auto& w : node->priorities) {
          if (w.downstream != p.downstream) {
            kept.push_back(w);
          }
        }
        kept.push_back({p.upstream, p.downstream, v});
        for (int f : feeders) {
          kept.push_back({f, p.downstream, feeders.empty() ? 0.0 : (1.0 - v) / static_cast<double>(feeders.size())});
        }
        node->priorities = kept;
        break;
      }
      case ParamKind::BottleneckCapacity:
        for (auto& b : s.bottlenecks) {
          if (b.id == p.target) {
            b.capacity = v;
          }
        }
        break;
      case ParamKind::ExitCapacity:
        for (auto& l : s.links) {
          if (l.id == p.target) {
            l.exit_capacity = v;
          }
        }
        break;
    }
  }
  return s;
}

/// Squared deviations per channel over bins where both sides have data.
struct FitParts {
  double counts_sse = 0.0;
  double times_sse = 0.0;
  std::size_t counts_n = 0;
  std::size_t times_n = 0;

  double mse_counts() const { return counts_n ? counts_sse / static_cast<double>(counts_n) : 0.0; }
  double mse_times() const { return times_n ? times_sse / static_cast<double>(times_n) : 0.0; }
  double objective(double w_tau) const { return counts_sse + w_tau * times_sse; }
};

inline void accumulate_channel(const std::vector<Series>& ref, const std::vector<Series>& sim, double& sse,
                               std::size_t& n) {
  for (const auto& r : ref) {
    auto it = std::find_if(sim.begin(), sim.end(), [&](const Series& s) { return s.id == r.id; });
    if (it == sim.end()) {
      throw std::invalid_argument("simulated output lacks series '" + r.id + "'");
    }
    if (it->values.size() != r.values.size()) {
      throw std::invalid_argument("series '" + r.id + "' has a different number of bins");
    }
    for (std::size_t b = 0; b < r.values.size(); ++b) {
      if (std::isnan(r.values[b]) || std::isnan(it->values[b])) {
        continue;
      }
      double d = r.values[b] - it->values[b];
      sse += d * d;
      ++n;
    }
  }
}

inline FitParts compare_outputs(const RunOutput& reference, const RunOutput& simulated) {
  FitParts f;
  accumulate_channel(reference.sensors, simulated.sensors, f.counts_sse, f.counts_n);
  accumulate_channel(reference.od_times, simulated.od_times, f.times_sse, f.times_n);
  return f;
}

/// New weight on the travel-time channel: ratio of the channel mean squared
/// errors. Empty when the time channel already fits exactly.
inline std::optional<double> update_weight(double mse_counts, double mse_times) {
  if (mse_counts < 0.0 || mse_times < 0.0) {
    throw std::invalid_argument("mean squared errors must be non-negative");
  }
  if (mse_times == 0.0) {
    return std::nullopt;
  }
  return mse_counts / mse_times;
}

inline RunOutput simulate_output(const Scenario& s, const SimOptions& opts) {
  Simulator sim(s, opts);
  sim.run();
  return binned_output(s, collect_curves(sim));
}

struct CalibrationProblem {
  Scenario base;
  std::vector<Parameter> params;
  RunOutput reference;
  SimOptions sim{Mode::Sequential, 0.0, 0, false, false};
};

/// Value returned for parameter sets the simulator rejects.
inline constexpr double kFailedObjective = 1e15;

struct Evaluation {
  std::optional<FitParts> parts;
  std::string error;
};

inline Evaluation evaluate(const CalibrationProblem& p, const std::vector<double>& theta) {
  try {
    Scenario s = apply_parameters(p.base, p.params, theta);
    validate_scenario(s);
    return {compare_outputs(p.reference, simulate_output(s, p.sim)), {}};
  } catch (const std::exception& e) {
    return {std::nullopt, e.what()};
  }
}

inline double objective(const CalibrationProblem& p, const std::vector<double>& theta, double w_tau) {
  auto e = evaluate(p, theta);
  return e.parts ? e.parts->objective(w_tau) : kFailedObjective;
}

// ---- bounded Nelder-Mead ------------------------------------------------------

struct NelderMeadOptions {
  int max_evals = 600;
  double initial_step = 0.15;  // fraction of each parameter's range
  double f_tol = 1e-12;        // relative spread of simplex values
  double x_tol = 1e-7;         // simplex diameter in unit coordinates
  int restarts = 3;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
  std::vector<double> best_trace;  // best value after every iteration
};

/// Minimises f over the unit box; points leaving the box are clamped back.
inline NelderMeadResult nelder_mead_unit(const std::function<double(const std::vector<double>&)>& f,
                                         std::vector<double> x0, const NelderMeadOptions& o) {
  const std::size_t n = x0.size();
  auto clamp01 = [](std::vector<double> x) {
    for (auto& v : x) {
      v = std::clamp(v, 0.0, 1.0);
    }
    return x;
  };
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evals;
    return f(x);
  };
  std::vector<std::vector<double>> pts;
  std::vector<double> vals;
  auto build = [&](const std::vector<double>& start) {
    pts.assign(1, clamp01(start));
    for (std::size_t i = 0; i < n; ++i) {
      auto p = pts[0];
      p[i] += p[i] + o.initial_step <= 1.0 ? o.initial_step : -o.initial_step;
      pts.push_back(clamp01(p));
    }
    vals.clear();
    for (const auto& p : pts) {
      vals.push_back(eval(p));
    }
  };
  auto order = [&] {
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = i;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<std::vector<double>> p2;
    std::vector<double> v2;
    for (auto i : idx) {
      p2.push_back(pts[i]);
      v2.push_back(vals[i]);
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };
  auto diameter = [&] {
    double d = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        d = std::max(d, std::abs(pts[i][k] - pts[0][k]));
      }
    }
    return d;
  };
  build(x0);
  for (int round = 0;; ++round) {
    const double round_start = *std::min_element(vals.begin(), vals.end());
    res.converged = false;
    while (res.evals < o.max_evals) {
      order();
      res.best_trace.push_back(vals[0]);
      const double spread = std::abs(vals[n] - vals[0]);
      if (spread <= o.f_tol * (std::abs(vals[0]) + 1e-30) || vals[n] == 0.0 || diameter() < o.x_tol) {
        res.converged = true;
        break;
      }
      std::vector<double> c(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          c[k] += pts[i][k] / static_cast<double>(n);
        }
      }
      auto along = [&](double coef) {
        std::vector<double> p(n);
        for (std::size_t k = 0; k < n; ++k) {
          p[k] = c[k] + coef * (pts[n][k] - c[k]);
        }
        return clamp01(p);
      };
      auto xr = along(-1.0);
      double fr = eval(xr);
      if (fr < vals[0]) {
        auto xe = along(-2.0);
        double fe = eval(xe);
        if (fe < fr) {
          pts[n] = xe;
          vals[n] = fe;
        } else {
          pts[n] = xr;
          vals[n] = fr;
        }
      } else if (fr < vals[n - 1]) {
        pts[n] = xr;
        vals[n] = fr;
      } else {
        auto xc = fr < vals[n] ? along(-0.5) : along(0.5);
        double fc = eval(xc);
        if (fc < std::min(fr, vals[n])) {
          pts[n] = xc;
          vals[n] = fc;
        } else {
          for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
              pts[i][k] = pts[0][k] + 0.5 * (pts[i][k] - pts[0][k]);
            }
            vals[i] = eval(pts[i]);
          }
        }
      }
    }
    order();
    // A fresh simplex around the best point guards against collapse; stop
    // once a round brings no improvement.
    if (round == o.restarts || res.evals >= o.max_evals || !(vals[0] < round_start)) {
      break;
    }
    build(pts[0]);
  }
  res.x = pts[0];
  res.f = vals[0];
  return res;
}

// ---- outer loop ---------------------------------------------------------------

struct CalibrationOptions {
  double initial_weight = 1.0;
  int max_outer = 10;
  double weight_tol = 1e-3;
  NelderMeadOptions inner;
};

struct OuterIteration {
  double weight = 0.0;  // weight used in this iteration's fit
  double objective = 0.0;
  double mse_counts = 0.0;
  double mse_times = 0.0;
  std::optional<double> next_weight;
  int evals = 0;
};

struct CalibrationResult {
  std::vector<double> theta;
  double initial_objective = 0.0;  // at the start point, initial weight
  double final_objective = 0.0;    // at theta, initial weight
  std::vector<OuterIteration> history;
  bool converged = false;
  std::vector<std::string> warnings;
};

inline std::vector<double> to_unit(const std::vector<Parameter>& ps, const std::vector<double>& theta) {
  std::vector<double> u;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    u.push_back((theta[i] - ps[i].lower) / (ps[i].upper - ps[i].lower));
  }
  return u;
}

inline std::vector<double> from_unit(const std::vector<Parameter>& ps, const std::vector<double>& u) {
  std::vector<double> theta;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    theta.push_back(ps[i].lower + std::clamp(u[i], 0.0, 1.0) * (ps[i].upper - ps[i].lower));
  }
  return theta;
}

inline CalibrationResult calibrate(const CalibrationProblem& p, const std::vector<double>& start,
                                   const CalibrationOptions& o = {}) {
  for (const auto& q : p.params) {
    if (!(q.upper > q.lower)) {
      throw std::invalid_argument(q.name + ": upper bound must exceed lower bound");
    }
  }
  for (std::size_t i = 0; i < start.size(); ++i) {
    if (start[i] < p.params[i].lower || start[i] > p.params[i].upper) {
      throw std::invalid_argument(p.params[i].name + ": start value outside bounds");
    }
  }
  CalibrationResult r;
  r.theta = start;
  r.initial_objective = objective(p, start, o.initial_weight);
  double w = o.initial_weight;
  for (int k = 0; k < o.max_outer; ++k) {
    auto f = [&](const std::vector<double>& u) { return objective(p, from_unit(p.params, u), w); };
    auto nm = nelder_mead_unit(f, to_unit(p.params, r.theta), o.inner);
    for (std::size_t i = 1; i < nm.best_trace.size(); ++i) {
      if (nm.best_trace[i] > nm.best_trace[i - 1]) {
        r.warnings.push_back("inner search best value increased at iteration " + std::to_string(i));
      }
    }
    if (!nm.converged) {
      r.warnings.push_back("inner search stopped at its evaluation budget in outer iteration " + std::to_string(k + 1));
    }
    r.theta = from_unit(p.params, nm.x);
    auto e = evaluate(p, r.theta);
    OuterIteration it;
    it.weight = w;
    it.evals = nm.evals;
    if (!e.parts) {
      r.warnings.push_back("simulation failed at the fitted parameters: " + e.error);
      it.objective = kFailedObjective;
      r.history.push_back(it);
      break;
    }
    it.objective = e.parts->objective(w);
    it.mse_counts = e.parts->mse_counts();
    it.mse_times = e.parts->mse_times();
    it.next_weight = update_weight(it.mse_counts, it.mse_times);
    r.history.push_back(it);
    if (!it.next_weight) {
      r.converged = true;
      break;
    }
    const double change = w > 0.0 ? std::abs(*it.next_weight - w) / w : std::abs(*it.next_weight - w);
    w = *it.next_weight;
    if (change < o.weight_tol) {
      r.converged = true;
      break;
    }
  }
  r.final_objective = objective(p, r.theta, o.initial_weight);
  return r;
}

}  // namespace ipm
