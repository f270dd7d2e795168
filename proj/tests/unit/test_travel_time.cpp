#include <catch_amalgamated.hpp>

#include "ipm/travel_time.hpp"

using Catch::Approx;
using namespace ipm;

namespace {
CumulativeCurve shifted(double start, double rate) {
  CumulativeCurve c(0.0);
  c.set_slope(start, rate);
  return c;
}
}  // namespace

TEST_CASE("uniform flow gives the free travel time") {
  // 1 km at 50 km/h
  const auto in = shifted(0.0, 1500);
  const auto out = shifted(0.02, 1500);
  for (double t : {0.03, 0.2, 0.7}) {
    CHECK(link_travel_time(in, out, t) == Approx(0.02));
  }
}

TEST_CASE("a standing queue adds its holding time") {
  const auto in = shifted(0.0, 600);
  const auto out = shifted(0.12, 600);
  CHECK(link_travel_time(in, out, 0.3) == Approx(0.02 + 0.1));
}

TEST_CASE("nothing has left yet") {
  const auto in = shifted(0.0, 600);
  const CumulativeCurve out(0.0);
  CHECK_THROWS_AS(link_travel_time(in, out, 0.4), InsufficientHistory);
}

TEST_CASE("more vehicles out than ever went in") {
  CumulativeCurve in(0.0);
  in.set_slope(0.0, 100);
  in.set_slope(0.1, 0);
  const auto out = shifted(0.0, 1000);
  CHECK_THROWS_AS(link_travel_time(in, out, 0.5), InsufficientHistory);
}

TEST_CASE("route times add up link by link") {
  const auto a_in = shifted(0.0, 1200), a_out = shifted(0.02, 1200);
  const auto b_in = shifted(0.02, 1200), b_out = shifted(0.05, 1200);
  const std::vector<LinkCurves> route{{&a_in, &a_out}, {&b_in, &b_out}};
  CHECK(route_travel_time(route, 0.4) == Approx(0.05));
  CHECK(route_travel_time({route[0]}, 0.4) == Approx(link_travel_time(a_in, a_out, 0.4)));
  CHECK_THROWS_AS(route_travel_time({}, 0.4), std::invalid_argument);
}

TEST_CASE("forward and backward walks agree") {
  const auto a_in = shifted(0.0, 1200), a_out = shifted(0.02, 1200);
  const auto b_in = shifted(0.02, 1200), b_out = shifted(0.05, 1200);
  const std::vector<LinkCurves> route{{&a_in, &a_out}, {&b_in, &b_out}};
  const double exit = route_exit_time(nullptr, nullptr, route, 0.1, 1.0);
  CHECK(exit == Approx(0.15));
  CHECK(std::isnan(route_exit_time(nullptr, nullptr, route, 0.99, 1.0)));
}

TEST_CASE("vehicles already on the link are skipped") {
  // Ten vehicles present at t=0 leave first.
  const auto in = shifted(0.0, 600);
  const auto out = shifted(0.0, 600);
  const LinkCurves c{&in, &out, 10.0};
  CHECK_THROWS_AS(link_travel_time(c, 10.0 / 600.0 - 1e-6), InsufficientHistory);
  CHECK(link_travel_time(c, 0.1) == Approx(10.0 / 600.0));
}
