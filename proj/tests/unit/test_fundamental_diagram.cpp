#include <catch_amalgamated.hpp>

#include <random>

#include "ipm/fundamental_diagram.hpp"

using Catch::Approx;
using ipm::FundamentalDiagram;

namespace {
const auto tri = FundamentalDiagram::triangular(1800, 30, 120);
}

TEST_CASE("triangular flow values") {
  CHECK(tri.flow_at(0) == 0.0);
  CHECK(tri.flow_at(30) == Approx(1800));
  CHECK(tri.flow_at(60) == Approx(1200));
  CHECK(tri.flow_at(120) == Approx(0).margin(1e-9));
}

TEST_CASE("triangular speeds") {
  CHECK(tri.speed_at(15) == Approx(60));
  CHECK(tri.speed_at(60) == Approx(20));
  CHECK(tri.speed_at(120) == Approx(0).margin(1e-12));
  CHECK(tri.speed_at(0) == Approx(60));
  CHECK(tri.free_speed() == Approx(60));
}

TEST_CASE("inflow capacity follows the supply branch") {
  CHECK(tri.inflow_capacity(15) == Approx(1800));
  CHECK(tri.inflow_capacity(30) == Approx(1800));
  CHECK(tri.inflow_capacity(60) == Approx(1200));
  CHECK(tri.sending_flow(15) == Approx(900));
  CHECK(tri.sending_flow(60) == Approx(1800));
}

TEST_CASE("densities outside the domain are rejected") {
  CHECK_THROWS_AS(tri.flow_at(-1), std::domain_error);
  CHECK_THROWS_AS(tri.flow_at(121), std::domain_error);
  CHECK_THROWS_AS(tri.speed_at(200), std::domain_error);
  CHECK_THROWS_AS(tri.inflow_capacity(-0.5), std::domain_error);
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS(FundamentalDiagram::triangular(1800, 30, 20));
  CHECK_THROWS(FundamentalDiagram::triangular(0, 30, 120));
  CHECK_THROWS(FundamentalDiagram::piecewise_linear({{0, 0}, {30, 1800}}));
  CHECK_THROWS(FundamentalDiagram::piecewise_linear({{0, 0}, {30, 1800}, {20, 0}}));
  CHECK_THROWS(FundamentalDiagram::piecewise_linear({{0, 0}, {30, 1800}, {120, 100}}));
}

TEST_CASE("non-concave piecewise diagram") {
  const auto fd = FundamentalDiagram::piecewise_linear({{0, 0}, {20, 1000}, {40, 1900}, {80, 1000}, {150, 0}});
  CHECK(fd.max_flow() == Approx(1900));
  CHECK(fd.critical_density() == Approx(40));
  CHECK(fd.flow_at(30) == Approx(1450));
  CHECK(fd.free_speed() == Approx(50));
}

TEST_CASE("speed never increases with density on random diagrams") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double kc = 10 + 40 * u(rng);
    const double kj = kc * (2 + 4 * u(rng));
    const double q = 1000 + 1500 * u(rng);
    const double mid_k = kc + (kj - kc) * u(rng);
    const double mid_q = q * (1 - (mid_k - kc) / (kj - kc)) * (0.5 + 0.5 * u(rng));
    const auto fd = FundamentalDiagram::piecewise_linear({{0, 0}, {kc, q}, {mid_k, mid_q}, {kj, 0}});
    double last = fd.speed_at(0);
    for (int i = 1; i <= 400; ++i) {
      const double k = kj * i / 400.0;
      const double v = fd.speed_at(k);
      REQUIRE(v <= last + 1e-9);
      REQUIRE(fd.flow_at(k) <= fd.max_flow() + 1e-9);
      last = v;
    }
  }
}

TEST_CASE("regimes on either branch for a given flow") {
  const auto f = tri.free_regime(900);
  const auto c = tri.congested_regime(900);
  CHECK(f.density == Approx(15));
  CHECK(c.density == Approx(75));
  CHECK_FALSE(tri.is_congested(f.density));
  CHECK(tri.is_congested(c.density));
  CHECK_THROWS(tri.free_regime(2000));
}
