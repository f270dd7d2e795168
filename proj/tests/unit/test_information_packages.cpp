#include <catch_amalgamated.hpp>

#include "ipm/information_packages.hpp"

using Catch::Approx;
using namespace ipm;

namespace {
const auto fd = FundamentalDiagram::triangular(1800, 30, 120);
Region region(double k, std::vector<double> routes = {1.0}) { return {fd.regime(k), std::move(routes)}; }
}  // namespace

TEST_CASE("shockwave speeds") {
  CHECK(shockwave_speed({30, 1800}, {120, 0}) == Approx(-20));
  // Queue discharge: the jam edge also recedes upstream.
  CHECK(shockwave_speed({120, 0}, {30, 1800}) == Approx(-20));
  CHECK(shockwave_speed({10, 600}, {90, 600}) == Approx(0).margin(1e-12));
  CHECK_THROWS_AS(shockwave_speed({30, 1800}, {30, 1800}), std::domain_error);
}

TEST_CASE("shockwave speed does not depend on which side is upstream") {
  for (double a = 0; a <= 120; a += 7.5) {
    for (double b = 0; b <= 120; b += 11.0) {
      if (std::abs(a - b) < 1e-6) {
        continue;
      }
      const auto ra = fd.regime(a), rb = fd.regime(b);
      REQUIRE(shockwave_speed(ra, rb) == Approx(shockwave_speed(rb, ra)));
    }
  }
}

TEST_CASE("route fronts move at the stream speed") {
  CHECK(routing_ip_speed(fd.regime(0), fd) == Approx(60));
  CHECK(routing_ip_speed(fd.regime(60), fd) == Approx(20));
  CHECK(routing_ip_speed(fd.regime(120), fd) == Approx(0).margin(1e-12));
}

TEST_CASE("queue discharge fans through capacity") {
  const auto waves = solve_riemann(fd, fd.regime(120), fd.regime(10));
  REQUIRE(waves.size() == 2);
  CHECK(waves[0].speed == Approx(-20));
  CHECK(waves[1].speed == Approx(60));
  CHECK(solve_riemann(fd, fd.regime(10), fd.regime(120)).size() == 1);
  CHECK(solve_riemann(fd, fd.regime(40), fd.regime(40)).empty());
}

TEST_CASE("bottleneck activation") {
  BottleneckPayload full{60, 1800};
  CHECK_FALSE(classify_bottleneck(full, fd.regime(20), fd).active);

  BottleneckPayload wall{0, 0};
  const auto c = classify_bottleneck(wall, fd.regime(20), fd);
  REQUIRE(c.active);
  CHECK(c.downstream_state.density == Approx(0).margin(1e-9));
  CHECK(c.downstream_state.flow == Approx(0).margin(1e-9));
  CHECK(c.upstream_state.density == Approx(120));

  CHECK_FALSE(classify_bottleneck(wall, fd.regime(0), fd).active);
}

TEST_CASE("slow vehicle bottleneck splits the stream") {
  BottleneckPayload truck{30, 600};
  const auto c = classify_bottleneck(truck, fd.regime(25), fd);
  REQUIRE(c.active);
  // Line q = 600 + 30 k meets the free branch at k = 20 and the congested one at k = 36.
  CHECK(c.downstream_state.density == Approx(20));
  CHECK(c.upstream_state.density == Approx(36));
  CHECK(c.upstream_state.flow == Approx(1680));
}

TEST_CASE("shocks with equal outer regimes annihilate") {
  const auto a = make_shock(1, 1, 0, 0, {fd.regime(10), fd.regime(80), shockwave_speed(fd.regime(10), fd.regime(80))});
  const auto b = make_shock(2, 1, 0, 0, {fd.regime(80), fd.regime(10), shockwave_speed(fd.regime(80), fd.regime(10))});
  const auto r = interact(a, b, region(10), region(80), region(10), fd, 0.5, 0.3);
  CHECK(r.ips.empty());
  CHECK(r.inner.empty());
}

TEST_CASE("two shocks merge into one") {
  const auto a = make_shock(1, 1, 0, 0.1, {fd.regime(10), fd.regime(20), 0});
  const auto b = make_shock(2, 1, 0, 0.1, {fd.regime(20), fd.regime(100), 0});
  const auto r = interact(a, b, region(10), region(20), region(100), fd, 0.5, 0.3);
  REQUIRE(r.ips.size() == 1);
  CHECK(r.ips[0].speed == Approx(shockwave_speed(fd.regime(10), fd.regime(100))));
  CHECK(r.ips[0].position_at(0.5) == Approx(0.3));
}

TEST_CASE("route front crossing a shock keeps its proportions") {
  const auto front = make_front(1, 1, 0, 0, 60, {0.25, 0.75});
  const auto shock = make_shock(2, 1, 0, 0.5, {fd.regime(10), fd.regime(90), -10});
  const auto r = interact(front, shock, region(10, {0.25, 0.75}), region(10, {0.5, 0.5}), region(90, {0.5, 0.5}), fd,
                          0.2, 0.4);
  REQUIRE(r.ips.size() == 2);
  CHECK(r.ips[0].kind == IpKind::FlowShockwave);
  CHECK(r.ips[0].speed == Approx(-10));
  CHECK(r.ips[1].kind == IpKind::RouteProportionFront);
  CHECK(r.ips[1].speed == Approx(fd.speed_at(90)));
  CHECK(r.ips[1].route().route_proportions == std::vector<double>{0.25, 0.75});
  REQUIRE(r.inner.size() == 1);
  CHECK(r.inner[0].routes == std::vector<double>{0.25, 0.75});
}

TEST_CASE("route fronts never meet each other") {
  const auto a = make_front(1, 1, 0, 0, 60, {1.0});
  const auto b = make_front(2, 1, 0, 0, 30, {1.0});
  CHECK_THROWS_AS(interact(a, b, region(5), region(5), region(50), fd, 0.1, 0.2), std::logic_error);
}

TEST_CASE("queue release reaching a stopped bottleneck") {
  // A stalled vehicle that restarts: it sits in the jam, the discharge wave
  // arrives from downstream and the bottleneck leaves at its own speed.
  BottleneckPayload slow{30, 600};
  InformationPackage bn;
  bn.id = 9;
  bn.kind = IpKind::MovingBottleneck;
  bn.link = 1;
  bn.payload = slow;
  const auto release = make_shock(3, 1, 0, 0.5, {fd.regime(120), fd.regime(30), 20});
  const auto r = interact(bn, release, region(120), region(120), region(30), fd, 0.3, 0.5);
  std::vector<double> speeds;
  int shocks = 0;
  for (const auto& ip : r.ips) {
    speeds.push_back(ip.speed);
    shocks += ip.kind == IpKind::FlowShockwave;
  }
  REQUIRE(shocks == 2);
  REQUIRE(r.ips.size() == 3);
  CHECK(r.ips[1].kind == IpKind::MovingBottleneck);
  CHECK(r.ips[1].bottleneck().active);
  CHECK(r.ips[1].speed == Approx(30));
  CHECK(r.ips[0].speed < 0.0);
  CHECK(r.ips[2].speed > 30.0);
}
