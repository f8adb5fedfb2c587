#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dck/cli/config.hpp"
#include "dck/cli/run.hpp"
#include "dck/cli/verify.hpp"

using namespace dck;
using namespace dck::cli;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dck_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

// Drops the last (wall-clock) column of every line.
std::string without_seconds(const std::string& csv) {
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << '\n';
  return out.str();
}

std::vector<bool> verdicts(const std::vector<CheckResult>& results) {
  std::vector<bool> out;
  for (const CheckResult& r : results) out.push_back(r.passed);
  return out;
}

}  // namespace

TEST_CASE("level ranges") {
  CHECK(parse_levels("2..8") == std::pair{2, 8});
  CHECK(parse_levels("5") == std::pair{5, 5});
  CHECK_THROWS_AS(parse_levels("a..3"), ConfigError);
  CHECK_THROWS_AS(parse_levels("2..x"), ConfigError);
}

TEST_CASE("every preset is valid") {
  const std::vector<std::string> expected{"cc-2d", "cc-3d", "cs-2d", "ex31-2d", "ex32-nusweep",
                                          "ex3d", "multiplier-zoom", "nu0-bangbang", "sc-2d",
                                          "sc-direct-gamma"};
  CHECK(preset_names() == expected);
  for (const std::string& name : preset_names()) {
    const RunConfig c = make_preset(name);
    CHECK(c.preset == name);
    CHECK_NOTHROW(validate(c));
    CHECK_NOTHROW(to_problem_spec(c, c.nu));
  }
  CHECK_THROWS_AS(make_preset("ex99"), ConfigError);
}

TEST_CASE("preset data") {
  const RunConfig sweep = make_preset("ex32-nusweep");
  CHECK(nu_values(sweep) == std::vector<double>{1e4, 1e2, 1.0, 1e-2, 1e-4, 1e-6, 0.0});
  const ProblemSpec bang = to_problem_spec(make_preset("nu0-bangbang"), 0.0);
  REQUIRE(bang.control);
  CHECK(bang.control->lower({0, 0, 0}) == -1.2);
  CHECK(bang.control->upper({0, 0, 0}) == 0.16);
  CHECK(bang.target({0.2, 0, 0}) == -1.0);
  CHECK(bang.target({0.3, 0, 0}) == 1.0);
  const ProblemSpec state = to_problem_spec(make_preset("sc-2d"), 1.0);
  REQUIRE(state.state);
  CHECK(state.state->region.radius == 0.2);
  CHECK(state.state->upper({0, 0, 0}) == 0.15);
  CHECK(state.state->shift({0, 0, 0}) == 0.0);
  CHECK(state.continuation.gamma_max == 1e9);
  const ProblemSpec combined = to_problem_spec(make_preset("cs-2d"), 1.0);
  CHECK(combined.control);
  CHECK(combined.state);
  CHECK(make_preset("multiplier-zoom").gamma_ladder.back() == 1e15);
}

TEST_CASE("flat JSON config") {
  RunConfig c;
  apply_json(c, json::parse(R"({"preset": "cc-2d", "levels": "3..4", "nu": 0.5, "control_lower": -1})"));
  CHECK(c.preset == "cc-2d");
  CHECK(c.level_min == 3);
  CHECK(c.level_max == 4);
  CHECK(c.nu == 0.5);
  CHECK(c.control_lower == -1.0);
  CHECK(c.control_upper == 0.16);

  apply_json(c, json::parse(R"({"control_upper": null, "method": "kkt_direct"})"));
  CHECK(!c.control_upper);
  CHECK(to_problem_spec(c, c.nu).method == UnconstrainedMethod::KktDirect);

  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"gama0": 1})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"nu": "one"})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"level_min": 2.5})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse(R"({"preset": "nope"})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, json::parse("[1, 2]")), ConfigError);
}

TEST_CASE("inconsistent settings are rejected") {
  const auto rejects = [](const char* text) {
    RunConfig c;
    apply_json(c, json::parse(text));
    CHECK_THROWS_AS(validate(c), ConfigError);
  };
  rejects(R"({"control_lower": 1, "control_upper": 0})");
  rejects(R"({"preset": "sc-2d", "tau": 1})");
  rejects(R"({"preset": "sc-2d", "gamma0": 0})");
  rejects(R"({"preset": "sc-2d", "state_center": [0, 0, 0]})");
  rejects(R"({"fixed_gamma": 1e9})");
  rejects(R"({"levels": "4..2"})");
  rejects(R"({"nu": -1})");
  rejects(R"({"domain": "disk"})");
  rejects(R"({"target": "split", "target_split_axis": 2})");
}

TEST_CASE("report formatting") {
  ReportRow row;
  row.level = 3;
  row.h = 0.125;
  row.num_nodes = 71;
  row.num_interior = 43;
  row.num_boundary = 28;
  row.nu = 1.0;
  row.pcg = 6;
  row.J = 0.34305541981234;
  CHECK(csv_line(row) == "3,0.125,71,43,28,1,,0,6,0,0,0.3430554198,,,0.000");
  row.gamma = 1e9;
  row.r_d = 2.3716e-10;
  row.mcv = 2.2468e-6;
  CHECK(csv_line(row) == "3,0.125,71,43,28,1,1.000E+09,0,6,0,0,0.3430554198,2.372E-10,2.247E-06,0.000");
  CHECK(csv_header() == "level,h,N,N_I,N_B,nu,gamma,newton,pcg,N_A,N_Aw,J,r_d,mcv,seconds");
}

TEST_CASE("a config error writes nothing") {
  RunConfig c = make_preset("ex31-2d");
  c.out = scratch_dir("config_error").string();
  c.tau = 0.5;
  c.state_upper = 0.1;
  std::ostringstream log;
  const RunOutcome outcome = run(c, log);
  CHECK(outcome.exit_code == kExitConfigError);
  CHECK(!std::filesystem::exists(c.out));
}

TEST_CASE("repeated runs give identical reports") {
  for (const char* preset : {"ex31-2d", "cc-2d", "sc-2d"}) {
    RunConfig c = make_preset(preset);
    c.level_max = 5;
    std::ostringstream log;
    c.out = scratch_dir("repeat_a").string();
    REQUIRE(run(c, log).exit_code == kExitOk);
    const std::string first = read_file(std::filesystem::path(c.out) / "report.csv");
    c.out = scratch_dir("repeat_b").string();
    REQUIRE(run(c, log).exit_code == kExitOk);
    const std::string second = read_file(std::filesystem::path(c.out) / "report.csv");
    CHECK(first.size() > csv_header().size());
    CHECK(without_seconds(first) == without_seconds(second));
  }
}

TEST_CASE("nonconvergence exits nonzero and keeps the partial table") {
  RunConfig c = make_preset("sc-direct-gamma");
  c.level_min = 4;
  c.level_max = 6;
  c.newton_max = 10;
  c.out = scratch_dir("partial").string();
  std::ostringstream log;
  const RunOutcome outcome = run(c, log);
  CHECK(outcome.exit_code == kExitNotConverged);
  const std::string csv = read_file(std::filesystem::path(c.out) / "report.csv");
  CHECK(csv.rfind(csv_header(), 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 2);
}

TEST_CASE("solution fields are written as VTK") {
  RunConfig c = make_preset("sc-2d");
  c.level_max = 4;
  c.vtk = true;
  c.out = scratch_dir("vtk").string();
  std::ostringstream log;
  REQUIRE(run(c, log).exit_code == kExitOk);
  const std::string vtk = read_file(std::filesystem::path(c.out) / "solution.vtk");
  for (const char* field : {"control", "state", "adjoint", "multiplier"})
    CHECK(vtk.find(std::string("SCALARS ") + field) != std::string::npos);
}

TEST_CASE("verify suite verdicts") {
  VerifyOptions options;
  options.quick = true;
  const auto clean = run_verify(options);
  std::ostringstream out;
  CHECK(print_verify(out, clean));

  options.seed = 12345;
  CHECK(verdicts(run_verify(options)) == verdicts(clean));

  options.corrupt_boundary_mass = true;
  const auto faulty = run_verify(options);
  REQUIRE(faulty.front().name == "adjoint identity");
  CHECK(!faulty.front().passed);
}
