#pragma once

/// @file output.hpp
/// @brief Binned sensor counts and OD travel times, computed from the
/// cumulative curves of a finished run, and the output file formats.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipm/cumulative_curve.hpp"
#include "ipm/scenario.hpp"
#include "ipm/sim_engine.hpp"
#include "ipm/travel_time.hpp"

namespace ipm {

/// Cumulative curves of a finished run, independent of the model that made them.
struct NetworkCurves {
  double t0 = 0.0;
  double horizon = 0.0;
  std::map<int, CumulativeCurve> link_in, link_out;
  std::map<int, double> link_initial;
  std::map<int, CumulativeCurve> origin_arrivals, origin_departures;

  LinkCurves link(int id) const { return {&link_in.at(id), &link_out.at(id), link_initial.at(id)}; }
};

inline NetworkCurves collect_curves(const Simulator& sim) {
  NetworkCurves c;
  c.t0 = sim.start_time();
  c.horizon = sim.scenario().horizon_h;
  for (const auto& l : sim.links()) {
    c.link_in[l.id()] = l.cum_in();
    c.link_out[l.id()] = l.cum_out();
    c.link_initial[l.id()] = sim.initial_vehicles(l.id());
  }
  for (const auto& n : sim.scenario().nodes) {
    if (n.kind == NodeKind::Origin) {
      c.origin_arrivals[n.id] = sim.origin(n.id).arrivals;
      c.origin_departures[n.id] = sim.origin(n.id).departures;
    }
  }
  return c;
}

/// Bin edges from t0 to the horizon; the last bin is shorter when the
/// interval does not divide the horizon.
inline std::vector<double> bin_edges(double t0, double horizon, double interval) {
  if (!(interval > 0.0)) {
    throw std::invalid_argument("report interval must be positive");
  }
  std::vector<double> e{t0};
  for (long k = 1;; ++k) {
    double t = t0 + static_cast<double>(k) * interval;
    if (t >= horizon - 1e-9 * interval) {
      break;
    }
    e.push_back(t);
  }
  e.push_back(horizon);
  return e;
}

struct Series {
  std::string id;
  std::vector<double> values;  // NaN marks a bin without data
};

struct RunOutput {
  std::vector<double> edges;
  std::vector<Series> sensors;   // veh per bin
  std::vector<Series> od_times;  // minutes, by departure bin
};

inline std::vector<double> sensor_counts(const NetworkCurves& c, const SensorSpec& s, const std::vector<double>& edges) {
  const auto& curve = s.end == "up" ? c.link_in.at(s.link) : c.link_out.at(s.link);
  std::vector<double> out;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    out.push_back(curve.value(edges[b + 1]) - curve.value(edges[b]));
  }
  return out;
}

/// Mean travel time (minutes) of vehicles departing at each bin midpoint,
/// weighted by the OD's route shares. NaN when the OD has no demand at the
/// midpoint or a vehicle does not arrive before the horizon.
inline std::vector<double> od_travel_times(const Scenario& s, const NetworkCurves& c, const OdSpec& od,
                                           const std::vector<double>& edges) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<LinkCurves>> routes;
  for (const auto& rid : od.routes) {
    std::vector<LinkCurves> r;
    for (int l : s.route(rid).links) {
      r.push_back(c.link(l));
    }
    routes.push_back(std::move(r));
  }
  const auto* qa = &c.origin_arrivals.at(od.origin);
  const auto* qd = &c.origin_departures.at(od.origin);
  std::vector<double> out;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const double mid = 0.5 * (edges[b] + edges[b + 1]);
    if (!(od.rate_at(mid) > 0.0)) {
      out.push_back(nan);
      continue;
    }
    const auto p = od.proportions_at(mid);
    double sum = 0.0;
    for (std::size_t k = 0; k < routes.size(); ++k) {
      if (p[k] <= 0.0) {
        continue;
      }
      double t = route_exit_time(qa, qd, routes[k], mid, c.horizon);
      sum += p[k] * (t - mid);
    }
    out.push_back(std::isnan(sum) ? nan : sum * 60.0);
  }
  return out;
}

inline RunOutput binned_output(const Scenario& s, const NetworkCurves& c) {
  RunOutput out;
  out.edges = bin_edges(c.t0, c.horizon, s.report_interval_h);
  for (const auto& sen : s.sensors) {
    out.sensors.push_back({sen.id, sensor_counts(c, sen, out.edges)});
  }
  for (const auto& od : s.ods) {
    out.od_times.push_back({od.id, od_travel_times(s, c, od, out.edges)});
  }
  return out;
}

// ---- files ------------------------------------------------------------------

inline std::string fixed3(double v) {
  if (std::isnan(v)) {
    return "";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  return s == "-0.000" ? "0.000" : s;
}

inline std::string series_csv(const std::vector<double>& edges, const std::vector<Series>& series) {
  std::ostringstream os;
  os << "bin_start_h,bin_end_h";
  for (const auto& s : series) {
    os << "," << s.id;
  }
  os << "\n";
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", edges[b], edges[b + 1]);
    os << buf;
    for (const auto& s : series) {
      os << "," << fixed3(s.values[b]);
    }
    os << "\n";
  }
  return os.str();
}

inline nlohmann::ordered_json output_to_json(const RunOutput& o) {
  using json = nlohmann::ordered_json;
  auto to_json_values = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) {
      if (std::isnan(x)) {
        a.push_back(nullptr);
      } else {
        a.push_back(std::round(x * 1000.0) / 1000.0);
      }
    }
    return a;
  };
  json j;
  j["bin_edges_h"] = o.edges;
  j["sensors"] = json::object();
  for (const auto& s : o.sensors) {
    j["sensors"][s.id] = to_json_values(s.values);
  }
  j["od_travel_times_min"] = json::object();
  for (const auto& s : o.od_times) {
    j["od_travel_times_min"][s.id] = to_json_values(s.values);
  }
  return j;
}

inline RunOutput output_from_json(const nlohmann::ordered_json& j) {
  RunOutput o;
  auto values = [](const nlohmann::ordered_json& a) {
    std::vector<double> v;
    for (const auto& x : a) {
      v.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
    }
    return v;
  };
  try {
    o.edges = j.at("bin_edges_h").get<std::vector<double>>();
    for (const auto& [k, v] : j.at("sensors").items()) {
      o.sensors.push_back({k, values(v)});
    }
    for (const auto& [k, v] : j.at("od_travel_times_min").items()) {
      o.od_times.push_back({k, values(v)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed output file: ") + e.what());
  }
  return o;
}

/// Reads output.json from a file path or a run directory.
inline RunOutput load_output(const std::filesystem::path& p) {
  auto file = std::filesystem::is_directory(p) ? p / "output.json" : p;
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open " + file.string());
  }
  try {
    return output_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + p.string());
  }
  out << text;
}

/// Writes output.json, sensors.csv and od_times.csv into dir.
inline void write_output(const std::filesystem::path& dir, const RunOutput& o) {
  std::filesystem::create_directories(dir);
  write_text(dir / "output.json", output_to_json(o).dump(2) + "\n");
  write_text(dir / "sensors.csv", series_csv(o.edges, o.sensors));
  write_text(dir / "od_times.csv", series_csv(o.edges, o.od_times));
}

struct SampleRow {
  double t;
  int link;
  double x;
  double density;
  double flow;
};

/// Density and flow at evenly spaced points of every link, at the
/// simulator's current time.
inline void sample_links(const Simulator& sim, double t, double dx, std::vector<SampleRow>& rows) {
  for (const auto& l : sim.links()) {
    const int n = std::max(1, static_cast<int>(std::ceil(l.length() / dx - 1e-9)));
    for (int i = 0; i <= n; ++i) {
      double x = std::min(l.length(), i * l.length() / n);
      const auto& r = l.region_at(x, t);
      rows.push_back({t, l.id(), x, r.regime.density, r.regime.flow});
    }
  }
}

inline std::string samples_csv(const std::vector<SampleRow>& rows) {
  std::ostringstream os;
  os << "t_h,link,x_km,density_veh_km,flow_veh_h\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6f,%d,%.6f,%.6f,%.6f\n", r.t, r.link, r.x, r.density, r.flow);
    os << buf;
  }
  return os.str();
}

}  // namespace ipm
