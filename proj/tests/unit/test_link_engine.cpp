#include <catch_amalgamated.hpp>

#include "ipm/link_engine.hpp"

using Catch::Approx;
using namespace ipm;

namespace {
const auto fd = FundamentalDiagram::triangular(1800, 30, 120);

InformationPackage shock_at(IpId id, double x, double speed) {
  return make_shock(id, 1, 0.0, x, {fd.regime(10), fd.regime(20), speed});
}

void advance(LinkState& link, double until) {
  while (auto ev = link.next_event()) {
    if (ev->time() > until) {
      break;
    }
    if (ev->kind() == EventKind::Intersection) {
      link.resolve_intersection(*ev);
    } else {
      link.boundary_arrival(*ev);
    }
  }
}
}  // namespace

TEST_CASE("converging packages meet where their paths cross") {
  auto hit = intersection_event(shock_at(1, 0, 10), shock_at(2, 1, -10), 2.0);
  REQUIRE(hit);
  CHECK(hit->first == Approx(0.05));
  CHECK(hit->second == Approx(0.5));
}

TEST_CASE("parallel or diverging packages never meet") {
  CHECK_FALSE(intersection_event(shock_at(1, 0, 10), shock_at(2, 1, 10), 2.0));
  CHECK_FALSE(intersection_event(shock_at(1, 0, -5), shock_at(2, 1, 5), 2.0));
}

TEST_CASE("meeting point beyond the link end is dropped") {
  CHECK_FALSE(intersection_event(shock_at(1, 0, 60), shock_at(2, 0.5, 10), 0.55));
}

TEST_CASE("demand step on an empty link") {
  LinkState link(1, 2.0, &fd, 1, 0.0);
  const auto n = link.inject_upstream(0.0, {fd.free_regime(1800), {1.0}}, 11);
  REQUIRE(n == 1);
  REQUIRE(link.ips().size() == 1);
  CHECK(link.ips()[0].speed == Approx(60));
  const auto ev = link.next_event();
  REQUIRE(ev);
  CHECK(ev->kind() == EventKind::BoundaryArrival);
  CHECK(ev->time() == Approx(2.0 / 60));
  const auto note = link.boundary_arrival(*ev);
  REQUIRE(note);
  CHECK(note->end == LinkEnd::Downstream);
  CHECK(note->current.flow == Approx(1800));
  CHECK(link.cum_out().current_slope() == Approx(1800));
}

TEST_CASE("discharge on a jammed link sends a backward wave") {
  LinkState link(1, 1.0, &fd, 1, 0.0);
  link.set_initial(0.0, {fd.regime(120)}, {});
  link.inject_downstream(0.0, fd.regime(30), 5);
  REQUIRE(link.ips().size() == 1);
  CHECK(link.ips()[0].speed == Approx(-20));
}

TEST_CASE("injecting the current boundary state creates nothing") {
  LinkState link(1, 1.0, &fd, 1, 0.0);
  link.set_initial(0.0, {fd.regime(15)}, {});
  CHECK(link.inject_upstream(0.0, {fd.regime(15), {1.0}}, 3) == 0);
  CHECK(link.ips().empty());
}

TEST_CASE("cumulative curves follow the boundary flows") {
  LinkState link(1, 1.0, &fd, 1, 0.0);
  link.inject_upstream(0.5, {fd.free_regime(1800), {1.0}}, 1);
  CHECK(link.cum_in().value(0.5) == Approx(0).margin(1e-12));
  CHECK(link.cum_in().value(1.5) == Approx(1800));
  CHECK(link.cum_in().times().back() == Approx(0.5));
}

TEST_CASE("a jam pocket dissolves and drains downstream") {
  LinkState link(1, 3.0, &fd, 1, 0.0);
  link.set_initial(0.0, {fd.regime(10), fd.regime(120), fd.regime(10)}, {1.0, 1.2});
  REQUIRE(link.ips().size() == 3);
  const double before = link.vehicles(0.0);
  advance(link, 0.2);
  CHECK(link.ips().empty());
  REQUIRE(link.regions().size() == 1);
  CHECK(link.regions()[0].regime.density == Approx(10));
  const double moved = link.cum_in().value(0.2) - link.cum_out().value(0.2);
  CHECK(link.vehicles(0.2) == Approx(before + moved).epsilon(1e-12));
}

TEST_CASE("vehicle count is conserved through interactions") {
  LinkState link(1, 2.0, &fd, 1, 0.0);
  link.set_initial(0.0, {fd.regime(25), fd.regime(5), fd.regime(90), fd.regime(40)}, {0.3, 0.8, 1.4});
  const double n0 = link.vehicles(0.0);
  advance(link, 0.01);
  const double t = 0.01;
  const double moved = link.cum_in().value(t) - link.cum_out().value(t);
  CHECK(link.vehicles(t) == Approx(n0 + moved).epsilon(1e-9));
  CHECK(link.consistent());
}
