#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ipm/cli.hpp"
#include "support/fixtures.hpp"

using Catch::Approx;
using namespace ipm;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ipm_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "ipm");
  std::vector<const char*> argv;
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  std::ostringstream out, err;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) {
    *out_text = out.str() + err.str();
  }
  return rc;
}

std::vector<double> upstream_counts(std::vector<RatePoint> demand) {
  auto s = fixtures::single_link(fixtures::triangular_class("road", 2000, 20, 120), 1.0, 0.5);
  s.ods[0].demand = std::move(demand);
  s.sensors = {{"in", 1, "up"}};
  Simulator sim(s, SimOptions{});
  sim.run();
  return binned_output(s, collect_curves(sim)).sensors[0].values;
}
}  // namespace

TEST_CASE("minimal scenario loads") {
  const auto s = fixtures::load("minimal.json");
  CHECK(s.links.size() == 1);
  CHECK(s.nodes.size() == 2);
  CHECK(s.report_interval_h == Approx(5.0 / 60.0));
}

TEST_CASE("corridor has four OD pairs") {
  const auto s = fixtures::load("corridor.json");
  CHECK(s.ods.size() == 4);
  CHECK_NOTHROW(validate_scenario(s));
}

TEST_CASE("a route through a missing link names both") {
  auto j = cli::read_json_file(fixtures::path("minimal.json"));
  j["routes"][0]["links"] = {1, 77};
  try {
    validate_scenario(scenario_from_json(j));
    FAIL("expected a validation error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("r1"));
    CHECK_THAT(msg, Catch::Matchers::ContainsSubstring("77"));
  }
}

TEST_CASE("save and load round trip") {
  const auto dir = scratch("roundtrip");
  for (const char* name : {"minimal.json", "corridor.json", "bottleneck_release.json", "chain.json"}) {
    const auto s = fixtures::load(name);
    save_scenario(s, (dir / name).string());
    const auto back = load_scenario((dir / name).string());
    CHECK(scenario_to_json(back).dump() == scenario_to_json(s).dump());
  }
}

TEST_CASE("sensor counts per five-minute bin") {
  for (double v : upstream_counts({{0.0, 1800}})) {
    CHECK(v == Approx(150));
  }
  for (double v : upstream_counts({{0.0, 0}})) {
    CHECK(v == 0.0);
  }
  const auto step = upstream_counts({{0.0, 0}, {1.0 / 24.0, 1800}});
  CHECK(step[0] == Approx(75));
  CHECK(step[1] == Approx(150));
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  std::string text;
  CHECK(run_cli({"simulate", "--scenario", fixtures::path("minimal.json"), "--mode", "distributed", "--out",
             (dir / "run").string()},
            &text) == 0);
  CHECK(fs::exists(dir / "run" / "output.json"));
  CHECK(fs::exists(dir / "run" / "sensors.csv"));

  CHECK(run_cli({"metrics", "--ref", (dir / "run" / "output.json").string(), "--sim",
             (dir / "run" / "output.json").string()},
            &text) == 0);
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("RMSE"));

  std::ofstream(dir / "bad.json") << R"({"name": "bad", "horizon_h": 1})";
  CHECK(run_cli({"validate", "--scenario", (dir / "bad.json").string()}, &text) == 1);
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("error"));

  CHECK(run_cli({"simulate", "--no-such-flag"}, &text) == 2);
  CHECK(run_cli({"launch"}, &text) == 2);
  CHECK(run_cli({}, &text) == 2);
}

TEST_CASE("repeated runs write identical files") {
  const auto dir = scratch("repeat");
  for (const char* run : {"a", "b"}) {
    REQUIRE(run_cli({"simulate", "--scenario", fixtures::path("corridor.json"), "--out", (dir / run).string()}) == 0);
  }
  for (const char* f : {"output.json", "sensors.csv", "od_times.csv", "events.log"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
}
