#include <catch_amalgamated.hpp>

#include "ipm/output.hpp"
#include "ipm/sim_engine.hpp"
#include "support/fixtures.hpp"

using Catch::Approx;
using namespace ipm;

namespace {
Scenario one_link(double rate, double length = 1.0) {
  auto s = fixtures::single_link(fixtures::triangular_class("road", 1800, 30, 120), length, 0.5);
  s.ods[0].demand = {{0.0, rate}};
  return s;
}
}  // namespace

TEST_CASE("a network without demand stays empty") {
  SimOptions o;
  Simulator sim(one_link(0.0), o);
  sim.run();
  for (const auto& l : sim.links()) {
    CHECK(l.ips().empty());
    CHECK(l.cum_out().value(0.5) == 0.0);
  }
  const auto out = binned_output(sim.scenario(), collect_curves(sim));
  for (double v : out.sensors[0].values) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("first vehicles reach the end at free-flow time") {
  SimOptions o;
  Simulator sim(one_link(900.0, 1.0), o);
  sim.run();
  const auto& out = sim.link(1).cum_out();
  CHECK(out.value(1.0 / 60.0) == Approx(0.0).margin(1e-9));
  CHECK(out.value(0.5) == Approx(900.0 * (0.5 - 1.0 / 60.0)));
  CHECK(sim.network_balance(0.5).error() == Approx(0.0).margin(1e-9));
}

TEST_CASE("both execution modes write the same event log") {
  const auto s = fixtures::load("corridor.json");
  SimOptions seq;
  Simulator a(s, seq);
  a.run();
  SimOptions dist;
  dist.mode = Mode::Distributed;
  dist.workers = 2;
  Simulator b(s, dist);
  b.run();
  CHECK(a.event_log() == b.event_log());
  CHECK(a.events_processed() == b.events_processed());
}

TEST_CASE("largest step is half the shortest crossing time") {
  auto s = fixtures::single_link(fixtures::triangular_class("fast", 2000, 20, 120), 2.0, 0.1);
  SimOptions o;
  o.mode = Mode::Distributed;
  o.workers = 0;
  Simulator sim(s, o);
  CHECK(sim.dt() == Approx(0.01));
  o.dt_h = 0.011;
  CHECK_THROWS_AS(Simulator(s, o), ScenarioError);
  o.dt_h = 0.005;
  CHECK_NOTHROW(Simulator(s, o));
}

TEST_CASE("history is a sequential-mode feature") {
  SimOptions o;
  o.mode = Mode::Distributed;
  o.record_history = true;
  CHECK_THROWS_AS(Simulator(one_link(100), o), std::invalid_argument);
}

TEST_CASE("demand above capacity queues at the origin") {
  auto s = one_link(2400.0);
  SimOptions o;
  Simulator sim(s, o);
  sim.run();
  const auto& q = sim.origin(1);
  CHECK(q.arrivals.value(0.5) == Approx(1200));
  CHECK(q.departures.value(0.5) == Approx(900));
  CHECK(sim.network_balance(0.5).error() == Approx(0.0).margin(1e-9));
}

TEST_CASE("corridor stays balanced mid-run") {
  const auto s = fixtures::load("corridor.json");
  SimOptions o;
  Simulator sim(s, o);
  sim.run_until(1.0);
  CHECK(std::abs(sim.network_balance(1.0).error()) < 1e-6);
  CHECK(sim.link_conservation_error(1.0) < 1e-6);
  for (const auto& l : sim.links()) {
    REQUIRE(l.consistent());
  }
}
