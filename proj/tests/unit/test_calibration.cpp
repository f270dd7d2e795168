#include <catch_amalgamated.hpp>

#include "ipm/calibration.hpp"
#include "ipm/experiment.hpp"
#include "support/fixtures.hpp"

using Catch::Approx;
using namespace ipm;

namespace {
Parameter max_flow_of(const std::string& cls, double lo, double hi) {
  Parameter p;
  p.name = cls + ".max_flow";
  p.kind = ParamKind::MaxFlow;
  p.fd_class = cls;
  p.lower = lo;
  p.upper = hi;
  return p;
}

// Oversaturated single link: the exit counts measure capacity directly.
CalibrationProblem capacity_problem() {
  auto truth = fixtures::single_link(fixtures::triangular_class("road", 1800, 30, 120), 1.0, 0.5);
  truth.ods[0].demand = {{0.0, 2400}};
  CalibrationProblem p;
  p.base = truth;
  p.params = {max_flow_of("road", 1200, 2400)};
  p.reference = simulate_output(truth, p.sim);
  return p;
}

double manual_sse(const std::vector<Series>& a, const std::vector<Series>& b) {
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].values.size(); ++k) {
      const double x = a[i].values[k], y = b[i].values[k];
      if (!std::isnan(x) && !std::isnan(y)) {
        sse += (x - y) * (x - y);
      }
    }
  }
  return sse;
}
}  // namespace

TEST_CASE("weight update is the ratio of channel errors") {
  CHECK(*update_weight(4, 1) == Approx(4));
  CHECK(*update_weight(2.5, 2.5) == Approx(1));
  CHECK(*update_weight(0, 3) == 0.0);
  CHECK_FALSE(update_weight(3, 0));
  CHECK_THROWS(update_weight(-1, 1));
}

TEST_CASE("objective at the generating parameters is zero") {
  const auto p = capacity_problem();
  CHECK(objective(p, {1800}, 1.0) == Approx(0).margin(1e-12));
}

TEST_CASE("objective matches a recomputed sum of squares") {
  const auto truth = fixtures::load("corridor.json");
  CalibrationProblem p;
  p.base = truth;
  p.params = {max_flow_of("main", 6000, 12000)};
  p.reference = simulate_output(truth, p.sim);
  const std::vector<double> theta{7600};
  const auto sim = simulate_output(apply_parameters(truth, p.params, theta), p.sim);
  const double counts = manual_sse(p.reference.sensors, sim.sensors);
  const double times = manual_sse(p.reference.od_times, sim.od_times);
  REQUIRE(counts > 0.0);
  CHECK(objective(p, theta, 0.0) == Approx(counts).epsilon(1e-12));
  CHECK(objective(p, theta, 2.0) == Approx(counts + 2.0 * times).epsilon(1e-12));
}

TEST_CASE("parameters read back what was applied") {
  const auto base = fixtures::load("corridor.json");
  const auto p = max_flow_of("weave", 5000, 9000);
  const auto s = apply_parameters(base, {p}, {6100});
  CHECK(read_parameter(s, p) == 6100);
  CHECK(read_parameter(base, p) == 7200);
}

TEST_CASE("capacity recovered from a biased start") {
  const auto p = capacity_problem();
  CalibrationOptions o;
  o.max_outer = 3;
  const auto r = calibrate(p, {1500}, o);
  CHECK(r.theta[0] == Approx(1800).epsilon(0.02));
  CHECK(r.final_objective <= 0.01 * r.initial_objective);
}

TEST_CASE("optimal start stops after one outer iteration") {
  const auto p = capacity_problem();
  const auto r = calibrate(p, {1800});
  CHECK(r.history.size() == 1);
  CHECK(r.converged);
  CHECK(r.final_objective == Approx(0).margin(1e-9));
}

TEST_CASE("start outside the bounds is rejected") {
  const auto p = capacity_problem();
  CHECK_THROWS_AS(calibrate(p, {3000}), std::invalid_argument);
}

TEST_CASE("perturbation factor") {
  CHECK(perturb_factor(0.5, 0.2) == 1.0);
  CHECK(1000 * perturb_factor(1.0, 0.1) == Approx(1100));
  CHECK(1000 * perturb_factor(0.0, 0.1) == Approx(900));
}

TEST_CASE("seeded perturbations repeat exactly") {
  const auto base = fixtures::load("corridor.json");
  ExperimentSpec e{ExperimentKind::DemandPerturb};
  e.alpha = 0.15;
  e.repetitions = 5;
  e.seed = 31;
  const auto a = generate_experiment(base, e);
  const auto b = generate_experiment(base, e);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(scenario_to_json(a[i].scenario).dump() == scenario_to_json(b[i].scenario).dump());
  }
  e.seed = 32;
  CHECK(scenario_to_json(generate_experiment(base, e)[0].scenario).dump() !=
        scenario_to_json(a[0].scenario).dump());
}

TEST_CASE("perturbation keeps the expected demand") {
  const auto base = fixtures::load("corridor.json");
  ExperimentSpec e{ExperimentKind::DemandPerturb};
  e.alpha = 0.2;
  e.repetitions = 2000;
  e.seed = 5;
  double base_total = 0.0;
  for (const auto& od : base.ods) {
    base_total += od.demand.front().rate;
  }
  double mean = 0.0;
  for (const auto& g : generate_experiment(base, e)) {
    for (const auto& od : g.scenario.ods) {
      mean += od.demand.front().rate;
    }
  }
  mean /= e.repetitions;
  // Four independent uniform factors: sd of the mean is about 0.2/sqrt(3)/sqrt(4*2000) of a typical OD.
  CHECK(mean == Approx(base_total).epsilon(0.005));
}

TEST_CASE("scale and incident generators") {
  const auto base = fixtures::load("corridor.json");
  ExperimentSpec sc{ExperimentKind::DemandScale};
  sc.scale = 0.75;
  const auto s = generate_experiment(base, sc);
  REQUIRE(s.size() == 1);
  CHECK(s[0].name == "scale_0.75");
  CHECK(s[0].scenario.ods[0].demand[0].rate == Approx(0.75 * base.ods[0].demand[0].rate));

  ExperimentSpec in{ExperimentKind::Incident};
  in.link = 3;
  in.blocked_lanes = 2;
  in.start_h = 1.0;
  in.duration_h = 0.5;
  const auto i = generate_experiment(base, in);
  REQUIRE(i[0].scenario.incidents.size() == 1);
  CHECK(i[0].scenario.incidents[0].blocked_lanes == 2);
  in.blocked_lanes = 6;
  CHECK_THROWS_AS(generate_experiment(base, in), std::invalid_argument);
  in.blocked_lanes = 1;
  in.duration_h = 0.0;
  CHECK_THROWS_AS(generate_experiment(base, in), std::invalid_argument);
}

TEST_CASE("cell model reference conserves vehicles") {
  const auto s = fixtures::load("corridor.json");
  CellModel m(s, {0.05, 0.9});
  const auto& c = m.run();
  double entered = 0.0, left = 0.0, on = 0.0;
  for (const auto& [o, curve] : c.origin_arrivals) {
    entered += curve.value(s.horizon_h);
    on += curve.value(s.horizon_h) - c.origin_departures.at(o).value(s.horizon_h);
  }
  for (const auto& l : s.links) {
    on += c.link_initial.at(l.id) + c.link_in.at(l.id).value(s.horizon_h) - c.link_out.at(l.id).value(s.horizon_h);
    if (s.node(l.to).kind == NodeKind::Sink) {
      left += c.link_out.at(l.id).value(s.horizon_h);
    }
  }
  CHECK(entered - left == Approx(on).epsilon(1e-9));
}

TEST_CASE("cell model tracks the wave model on the corridor") {
  const auto s = fixtures::load("corridor.json");
  const auto ipm_out = simulate_output(s, SimOptions{});
  const auto ctm_out = reference_output(s, {0.05, 0.9});
  for (std::size_t i = 0; i < ipm_out.sensors.size(); ++i) {
    PairedSeries p{ctm_out.sensors[i].values, ipm_out.sensors[i].values, ipm_out.sensors[i].id};
    CHECK(theil(p).U < 0.02);
  }
}
