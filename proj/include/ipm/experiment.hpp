#pragma once

// Scenario generators for demand scaling, random demand perturbation and lane
// blocking incidents, plus a batch runner that scores the simulator against a
// reference model level by level.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipm/calibration.hpp"
#include "ipm/cell_model.hpp"
#include "ipm/report.hpp"

namespace ipm {

enum class ExperimentKind { DemandScale, DemandPerturb, Incident };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::DemandScale:
      return "scale";
    case ExperimentKind::DemandPerturb:
      return "perturb";
    default:
      return "incident";
  }
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::DemandScale;
  double scale = 1.0;
  double alpha = 0.0;
  int repetitions = 20;
  std::uint64_t seed = 1;
  int link = 0;
  int blocked_lanes = 0;
  double start_h = 0.0;
  double duration_h = 0.0;

  void validate() const {
    if (kind == ExperimentKind::DemandScale && !(scale > 0.0 && scale <= 1.0)) {
      throw std::invalid_argument("demand scale must lie in (0, 1], got " + std::to_string(scale));
    }
    if (kind == ExperimentKind::DemandPerturb) {
      if (!(alpha >= 0.0)) {
        throw std::invalid_argument("perturbation factor must be non-negative");
      }
      if (repetitions < 1) {
        throw std::invalid_argument("at least one repetition is required");
      }
    }
    if (kind == ExperimentKind::Incident && !(duration_h > 0.0)) {
      throw std::invalid_argument("incident duration must be positive");
    }
  }
};

struct GeneratedScenario {
  std::string name;
  Scenario scenario;
};

/// Uniform draw in [0, 1) from the top 53 bits, so the sequence does not
/// depend on the standard library's distribution code.
inline double unit_draw(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

/// Relative demand change for a draw r in [0, 1]: from 1 - alpha to 1 + alpha.
inline double perturb_factor(double r, double alpha) { return 1.0 + 2.0 * (r - 0.5) * alpha; }

inline void scale_demand(Scenario& s, double factor) {
  for (auto& od : s.ods) {
    for (auto& p : od.demand) {
      p.rate *= factor;
    }
  }
}

inline std::vector<GeneratedScenario> generate_experiment(const Scenario& base, const ExperimentSpec& spec) {
  spec.validate();
  std::vector<GeneratedScenario> out;
  char tag[64];
  switch (spec.kind) {
    case ExperimentKind::DemandScale: {
      Scenario s = base;
      scale_demand(s, spec.scale);
      std::snprintf(tag, sizeof tag, "scale_%.2f", spec.scale);
      out.push_back({tag, std::move(s)});
      break;
    }
    case ExperimentKind::DemandPerturb: {
      // One draw per OD pair and repetition, applied to the whole demand profile.
      std::mt19937_64 gen(spec.seed);
      for (int r = 0; r < spec.repetitions; ++r) {
        Scenario s = base;
        for (auto& od : s.ods) {
          const double factor = perturb_factor(unit_draw(gen), spec.alpha);
          for (auto& p : od.demand) {
            p.rate *= factor;
          }
        }
        std::snprintf(tag, sizeof tag, "perturb_%.2f_r%02d", spec.alpha, r + 1);
        out.push_back({tag, std::move(s)});
      }
      break;
    }
    case ExperimentKind::Incident: {
      const auto& l = base.link(spec.link);
      if (spec.blocked_lanes < 0 || spec.blocked_lanes > l.lanes) {
        throw std::invalid_argument("cannot block " + std::to_string(spec.blocked_lanes) + " lanes on link " +
                                    std::to_string(spec.link) + " with " + std::to_string(l.lanes) + " lanes");
      }
      Scenario s = base;
      IncidentSpec in;
      in.link = spec.link;
      in.start_h = spec.start_h;
      in.duration_h = spec.duration_h;
      in.blocked_lanes = spec.blocked_lanes;
      s.incidents.push_back(in);
      std::snprintf(tag, sizeof tag, "incident_%d", spec.blocked_lanes);
      out.push_back({tag, std::move(s)});
      break;
    }
  }
  return out;
}

/// The three experiment families with their levels.
struct ExperimentDesign {
  std::vector<double> scales{1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.6};
  std::vector<double> alphas{0.05, 0.1, 0.15, 0.2};
  int repetitions = 20;
  std::uint64_t seed = 1;
  int incident_link = 0;
  double incident_start_h = 0.0;
  double incident_duration_h = 0.0;
  std::vector<int> blocked_lanes{1, 2, 3, 4, 5};

  std::vector<ExperimentSpec> specs(ExperimentKind k) const {
    std::vector<ExperimentSpec> v;
    if (k == ExperimentKind::DemandScale) {
      for (double x : scales) {
        v.push_back({k, x});
      }
    } else if (k == ExperimentKind::DemandPerturb) {
      // Each level gets its own stream so adding a level leaves the others unchanged.
      for (std::size_t i = 0; i < alphas.size(); ++i) {
        ExperimentSpec e{k};
        e.alpha = alphas[i];
        e.repetitions = repetitions;
        e.seed = seed + 1000003ULL * i;
        v.push_back(e);
      }
    } else {
      for (int n : blocked_lanes) {
        ExperimentSpec e{k};
        e.link = incident_link;
        e.blocked_lanes = n;
        e.start_h = incident_start_h;
        e.duration_h = incident_duration_h;
        v.push_back(e);
      }
    }
    return v;
  }
};

inline ExperimentDesign design_from_json(const nlohmann::ordered_json& j) {
  ExperimentDesign d;
  try {
    if (j.contains("scale")) {
      d.scales = j.at("scale").get<std::vector<double>>();
    }
    if (j.contains("perturb")) {
      const auto& p = j.at("perturb");
      d.alphas = p.value("alpha", d.alphas);
      d.repetitions = p.value("repetitions", d.repetitions);
      d.seed = p.value("seed", d.seed);
    }
    if (j.contains("incident")) {
      const auto& p = j.at("incident");
      d.incident_link = p.at("link").get<int>();
      d.incident_start_h = p.at("start_h").get<double>();
      d.incident_duration_h = p.at("duration_h").get<double>();
      d.blocked_lanes = p.value("blocked_lanes", d.blocked_lanes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed experiment design: ") + e.what());
  }
  return d;
}

struct ExperimentOptions {
  SimOptions sim{Mode::Sequential, 0.0, 0, false, false};
  CellModelOptions reference;
  // Called with each generated scenario before it runs; used to save inputs.
  std::function<void(const GeneratedScenario&)> on_scenario;
};

inline RunOutput reference_output(const Scenario& s, const CellModelOptions& opt) {
  CellModel m(s, opt);
  return binned_output(s, m.run());
}

/// Runs every scenario of one level and pools the bins of all repetitions.
inline LevelColumn run_level(const Scenario& base, const ExperimentSpec& spec, const ExperimentOptions& opt) {
  ChannelPairs pairs;
  for (const auto& g : generate_experiment(base, spec)) {
    if (opt.on_scenario) {
      opt.on_scenario(g);
    }
    pairs.add(reference_output(g.scenario, opt.reference), simulate_output(g.scenario, opt.sim));
  }
  char label[32];
  switch (spec.kind) {
    case ExperimentKind::DemandScale:
      std::snprintf(label, sizeof label, "%.2f", spec.scale);
      break;
    case ExperimentKind::DemandPerturb:
      std::snprintf(label, sizeof label, "%.2f", spec.alpha);
      break;
    default:
      std::snprintf(label, sizeof label, "%d", spec.blocked_lanes);
  }
  return {label, channel_fit(pairs, true)};
}

struct ExperimentTable {
  ExperimentKind kind;
  std::vector<LevelColumn> columns;

  std::string title() const {
    switch (kind) {
      case ExperimentKind::DemandScale:
        return "Demand scale (theta)";
      case ExperimentKind::DemandPerturb:
        return "Demand perturbation (alpha)";
      default:
        return "Blocked lanes (N)";
    }
  }
  std::string text() const { return level_table(title(), columns); }
  nlohmann::ordered_json json() const {
    nlohmann::ordered_json j;
    j["experiment"] = to_string(kind);
    for (const auto& c : columns) {
      auto col = fit_json(c.fit);
      col["level"] = c.label;
      j["levels"].push_back(col);
    }
    return j;
  }
};

inline ExperimentTable run_experiment(const Scenario& base, const ExperimentDesign& d, ExperimentKind kind,
                                      const ExperimentOptions& opt = {}) {
  ExperimentTable t{kind, {}};
  for (const auto& spec : d.specs(kind)) {
    t.columns.push_back(run_level(base, spec, opt));
  }
  return t;
}

}  // namespace ipm
