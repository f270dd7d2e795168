#pragma once

// Command-line front end. Exit status: 0 success, 1 domain error (bad input
// data, failed run), 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipm/calibration.hpp"
#include "ipm/experiment.hpp"
#include "ipm/output.hpp"
#include "ipm/report.hpp"
#include "ipm/scenario.hpp"
#include "ipm/sim_engine.hpp"

namespace ipm::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr const char* kOutputDirVar = "IPM_OUTPUT_DIR";

inline fs::path default_output_dir() {
  const char* v = std::getenv(kOutputDirVar);
  return v && *v ? fs::path(v) : fs::path("ipm_output");
}

inline ojson read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) {
    throw std::runtime_error("cannot open " + p.string());
  }
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

struct SimulateArgs {
  std::string scenario;
  std::string mode = "sequential";
  double dt = 0.0;
  int workers = 4;
  std::string out;
  double sample_dx = 0.0;
  double sample_every = 0.0;
  bool no_log = false;
};

inline int do_simulate(const SimulateArgs& a, std::ostream& out) {
  auto s = load_scenario(a.scenario);
  SimOptions o;
  o.mode = parse_mode(a.mode);
  o.dt_h = a.dt;
  o.workers = a.workers;
  o.trace = !a.no_log;
  Simulator sim(s, o);
  std::vector<SampleRow> samples;
  if (a.sample_dx > 0.0) {
    const double every = a.sample_every > 0.0 ? a.sample_every : s.report_interval_h;
    for (long k = 0;; ++k) {
      double t = sim.start_time() + static_cast<double>(k) * every;
      if (t > s.horizon_h + 1e-9) {
        break;
      }
      sim.run_until(t);
      sample_links(sim, t, a.sample_dx, samples);
    }
  }
  sim.run();
  const fs::path dir = a.out.empty() ? default_output_dir() : fs::path(a.out);
  write_output(dir, binned_output(s, collect_curves(sim)));
  if (o.trace) {
    std::string log;
    for (const auto& line : sim.event_log()) {
      log += line;
      log += '\n';
    }
    write_text(dir / "events.log", log);
  }
  if (!samples.empty()) {
    write_text(dir / "samples.csv", samples_csv(samples));
  }
  const auto b = sim.network_balance(s.horizon_h);
  ojson sum;
  sum["scenario"] = s.name;
  sum["mode"] = to_string(o.mode);
  sum["horizon_h"] = s.horizon_h;
  sum["dt_h"] = sim.dt();
  sum["events_processed"] = sim.events_processed();
  sum["vehicles_initial"] = b.initial;
  sum["vehicles_entered"] = b.entered;
  sum["vehicles_exited"] = b.exited;
  sum["vehicles_on_network"] = b.on_network;
  sum["vehicles_queued_at_origins"] = b.queued;
  sum["conservation_error"] = b.error();
  write_text(dir / "summary.json", sum.dump(2) + "\n");
  out << "wrote " << dir.string() << " (" << sim.events_processed() << " events)\n";
  return 0;
}

inline int do_metrics(const std::string& ref, const std::string& sim, bool as_json, std::ostream& out) {
  ChannelPairs p;
  p.add(load_output(ref), load_output(sim));
  const auto fit = channel_fit(p);
  if (as_json) {
    out << fit_json(fit).dump(2) << "\n";
  } else {
    out << fit_table(fit);
  }
  return 0;
}

inline Parameter parameter_from_json(const ojson& j) {
  Parameter p;
  try {
    p.kind = parse_param_kind(j.at("kind").get<std::string>());
    p.name = j.value("name", std::string(to_string(p.kind)));
    p.fd_class = j.value("fd_class", std::string());
    p.node = j.value("node", 0);
    p.upstream = j.value("upstream", 0);
    p.downstream = j.value("downstream", 0);
    p.target = j.value("target", 0);
    p.lower = j.at("lower").get<double>();
    p.upper = j.at("upper").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed parameter: ") + e.what());
  }
  return p;
}

struct CalibrateArgs {
  std::string problem;
  std::string reference;
  std::string out;
  int max_evals = 0;
  int max_outer = 0;
};

/// Problem file: scenario path (relative to the problem file), parameter list
/// with bounds, optional reference output and optimizer settings. The start
/// point is the scenario's current parameter values.
inline int do_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const fs::path problem_path(a.problem);
  const auto j = read_json_file(problem_path);
  const auto base_dir = problem_path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  CalibrationProblem prob;
  if (!j.contains("scenario") || !j.contains("parameters")) {
    throw std::invalid_argument(a.problem + ": needs 'scenario' and 'parameters'");
  }
  prob.base = load_scenario(resolve(j["scenario"].get<std::string>()).string());
  for (const auto& pj : j["parameters"]) {
    prob.params.push_back(parameter_from_json(pj));
  }
  std::string ref = a.reference;
  if (ref.empty()) {
    if (!j.contains("reference")) {
      throw std::invalid_argument("no reference output given");
    }
    ref = resolve(j["reference"].get<std::string>()).string();
  }
  prob.reference = load_output(ref);
  CalibrationOptions o;
  o.initial_weight = j.value("initial_weight", o.initial_weight);
  o.max_outer = a.max_outer > 0 ? a.max_outer : j.value("max_outer", o.max_outer);
  o.inner.max_evals = a.max_evals > 0 ? a.max_evals : j.value("max_evals", o.inner.max_evals);
  std::vector<double> start;
  for (const auto& p : prob.params) {
    start.push_back(read_parameter(prob.base, p));
  }
  const auto r = calibrate(prob, start, o);

  ojson rep;
  rep["converged"] = r.converged;
  rep["initial_objective"] = r.initial_objective;
  rep["final_objective"] = r.final_objective;
  for (std::size_t i = 0; i < prob.params.size(); ++i) {
    rep["parameters"][prob.params[i].name] = {{"start", start[i]}, {"value", r.theta[i]}};
  }
  rep["outer_iterations"] = ojson::array();
  for (const auto& h : r.history) {
    ojson hj{{"weight", h.weight},         {"objective", h.objective}, {"mse_counts", h.mse_counts},
             {"mse_times", h.mse_times},   {"evaluations", h.evals}};
    hj["next_weight"] = h.next_weight ? ojson(*h.next_weight) : ojson(nullptr);
    rep["outer_iterations"].push_back(hj);
  }
  rep["warnings"] = r.warnings;
  const fs::path dir = a.out.empty() ? default_output_dir() : fs::path(a.out);
  fs::create_directories(dir);
  write_text(dir / "calibration.json", rep.dump(2) + "\n");
  save_scenario(apply_parameters(prob.base, prob.params, r.theta), (dir / "calibrated_scenario.json").string());
  out << "objective " << r.initial_objective << " -> " << r.final_objective << " after " << r.history.size()
      << " outer iterations" << (r.converged ? "" : " (not converged)") << "\n";
  for (std::size_t i = 0; i < prob.params.size(); ++i) {
    out << "  " << prob.params[i].name << " = " << r.theta[i] << "\n";
  }
  for (const auto& w : r.warnings) {
    out << "warning: " << w << "\n";
  }
  return 0;
}

struct ExperimentArgs {
  std::string scenario;
  std::string design;
  std::string out;
  std::string kind = "all";
  std::optional<std::uint64_t> seed;
  int repetitions = 0;
  double cell_km = 0.05;
  bool save_scenarios = false;
};

inline int do_experiment(const ExperimentArgs& a, std::ostream& out) {
  const auto base = load_scenario(a.scenario);
  ExperimentDesign d;
  if (!a.design.empty()) {
    d = design_from_json(read_json_file(a.design));
  }
  if (a.seed) {
    d.seed = *a.seed;
  }
  if (a.repetitions > 0) {
    d.repetitions = a.repetitions;
  }
  std::vector<ExperimentKind> kinds;
  if (a.kind == "all" || a.kind == "scale") {
    kinds.push_back(ExperimentKind::DemandScale);
  }
  if (a.kind == "all" || a.kind == "perturb") {
    kinds.push_back(ExperimentKind::DemandPerturb);
  }
  if (a.kind == "all" || a.kind == "incident") {
    if (d.incident_duration_h > 0.0) {
      kinds.push_back(ExperimentKind::Incident);
    } else if (a.kind == "incident") {
      throw std::invalid_argument("the design has no incident section");
    }
  }
  const fs::path dir = a.out.empty() ? default_output_dir() : fs::path(a.out);
  fs::create_directories(dir);
  ExperimentOptions opt;
  opt.reference.cell_km = a.cell_km;
  if (a.save_scenarios) {
    fs::create_directories(dir / "scenarios");
    opt.on_scenario = [&](const GeneratedScenario& g) {
      save_scenario(g.scenario, (dir / "scenarios" / (g.name + ".json")).string());
    };
  }
  ojson all = ojson::array();
  std::string text;
  for (auto k : kinds) {
    auto t = run_experiment(base, d, k, opt);
    text += t.text() + "\n";
    all.push_back(t.json());
  }
  write_text(dir / "experiment_tables.txt", text);
  write_text(dir / "experiment_tables.json", all.dump(2) + "\n");
  out << text;
  return 0;
}

inline int do_validate(const std::string& scenario, const std::string& mode, double dt, std::ostream& out) {
  auto s = load_scenario(scenario);
  SimOptions o;
  o.mode = parse_mode(mode);
  o.dt_h = dt;
  o.trace = false;
  Simulator sim(s, o);
  out << "ok: " << s.links.size() << " links, " << s.nodes.size() << " nodes, " << s.routes.size() << " routes, "
      << s.ods.size() << " OD pairs, " << s.sensors.size() << " sensors; dt " << sim.dt() << " h\n";
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dynamic network loading with information packages"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a scenario and write outputs");
  sim->add_option("--scenario", sa.scenario, "Scenario file")->required();
  sim->add_option("--mode", sa.mode, "sequential or distributed")->check(CLI::IsMember({"sequential", "distributed"}));
  sim->add_option("--dt", sa.dt, "Step length in hours for distributed mode (0: largest allowed)");
  sim->add_option("--workers", sa.workers, "Worker threads in distributed mode")->check(CLI::NonNegativeNumber);
  sim->add_option("--out", sa.out, std::string("Output directory (default $") + kOutputDirVar + " or ./ipm_output)");
  sim->add_option("--sample-dx", sa.sample_dx, "Write samples.csv with this spacing in km");
  sim->add_option("--sample-every", sa.sample_every, "Sampling period in hours (default: report interval)");
  sim->add_flag("--no-log", sa.no_log, "Skip events.log");

  std::string ref, simulated;
  bool as_json = false;
  auto* met = app.add_subcommand("metrics", "Compare two run outputs");
  met->add_option("--ref", ref, "Reference output.json or run directory")->required();
  met->add_option("--sim", simulated, "Simulated output.json or run directory")->required();
  met->add_flag("--json", as_json, "Print JSON instead of a table");

  CalibrateArgs ca;
  auto* cal = app.add_subcommand("calibrate", "Fit scenario parameters to reference outputs");
  cal->add_option("--problem", ca.problem, "Calibration problem file")->required();
  cal->add_option("--reference", ca.reference, "Reference output (overrides the problem file)");
  cal->add_option("--out", ca.out, "Output directory");
  cal->add_option("--max-evals", ca.max_evals, "Simulations per inner search");
  cal->add_option("--max-outer", ca.max_outer, "Outer re-weighting iterations");

  ExperimentArgs ea;
  std::uint64_t seed = 0;
  auto* exp = app.add_subcommand("experiment", "Run demand and incident experiments against the cell model");
  exp->add_option("--scenario", ea.scenario, "Base scenario")->required();
  exp->add_option("--design", ea.design, "Experiment design file");
  exp->add_option("--kind", ea.kind, "scale, perturb, incident or all")
      ->check(CLI::IsMember({"all", "scale", "perturb", "incident"}));
  auto* seed_opt = exp->add_option("--seed", seed, "Seed for demand perturbation");
  exp->add_option("--repetitions", ea.repetitions, "Repetitions per perturbation level");
  exp->add_option("--cell-km", ea.cell_km, "Reference cell length in km")->check(CLI::PositiveNumber);
  exp->add_option("--out", ea.out, "Output directory");
  exp->add_flag("--save-scenarios", ea.save_scenarios, "Write every generated scenario");

  std::string vscenario, vmode = "sequential";
  double vdt = 0.0;
  auto* val = app.add_subcommand("validate", "Check a scenario file");
  val->add_option("--scenario", vscenario, "Scenario file")->required();
  val->add_option("--mode", vmode, "Mode whose step bound to check")->check(CLI::IsMember({"sequential", "distributed"}));
  val->add_option("--dt", vdt, "Step length in hours");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) {
      err << app.help();
    }
    return code == 0 ? 0 : 2;
  }
  try {
    if (*sim) {
      return do_simulate(sa, out);
    }
    if (*met) {
      return do_metrics(ref, simulated, as_json, out);
    }
    if (*cal) {
      return do_calibrate(ca, out);
    }
    if (*exp) {
      if (*seed_opt) {
        ea.seed = seed;
      }
      return do_experiment(ea, out);
    }
    return do_validate(vscenario, vmode, vdt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ipm::cli
