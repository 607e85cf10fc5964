#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "heatflow/error.hpp"
#include "heatflow/lab.hpp"

using namespace heatflow;
using namespace heatflow::lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("heatflow_test_lab_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json small_config() {
  return Json::parse(R"({
    "name": "small",
    "target": "sphere",
    "boundary": {"family": "cap", "delta": 0.1},
    "initial_perturbation": 0.03,
    "refinement": 2,
    "t_end": 2,
    "max_snapshots": 40,
    "checks": ["convexity", "ut_monotone", "decay_identity", "cross_term", "cauchy"],
    "pairs": 10,
    "seed": 3
  })");
}

std::string config_error(const fs::path& p) {
  try {
    load_config(p);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(HEATFLOW_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const auto c = parse_config(Json::parse(R"({"target": "sphere"})"));
  CHECK(c.refinement == 4);
  CHECK(c.epsilon0 == 0.1);
  CHECK(c.checks.size() == all_checks().size());
  CHECK(c.boundary.family == "cap");
  CHECK(!c.exploratory);

  CHECK_THROWS_AS(parse_config(Json::parse(R"({"epsilon0": -1})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"refinement": 2.5})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"checks": ["gauge", "nope"]})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"({"target": {"kind": "klein"}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(Json::parse(R"([1, 2])")), ConfigError);

  try {
    parse_config(Json::parse(R"({"epsilon0_typo": 0.1})"));
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("epsilon0_typo") != std::string::npos);
  }

  const auto round = parse_config(config_to_json(parse_config(small_config())));
  CHECK(config_to_json(round) == config_to_json(parse_config(small_config())));
}

TEST_CASE("config errors name the file position") {
  const auto d = scratch_dir("config");
  write_text(d / "bad_value.json", "{\n  \"target\": \"sphere\",\n  \"epsilon0\": -1\n}\n");
  auto msg = config_error(d / "bad_value.json");
  CHECK(msg.find(":3:") != std::string::npos);
  CHECK(msg.find("epsilon0") != std::string::npos);

  write_text(d / "typo.json", "{\n  \"target\": \"sphere\",\n\n  \"epsilon0_typo\": 0.1\n}\n");
  msg = config_error(d / "typo.json");
  CHECK(msg.find(":4:") != std::string::npos);
  CHECK(msg.find("epsilon0_typo") != std::string::npos);

  write_text(d / "syntax.json", "{\n  \"target\": \"sphere\",\n  \"tau\": ,\n}\n");
  msg = config_error(d / "syntax.json");
  CHECK(msg.find(":3:") != std::string::npos);

  CHECK(!config_error(d / "missing.json").empty());

  write_text(d / "unnamed.json", "{}");
  CHECK(load_config(d / "unnamed.json").name == "unnamed");
}

TEST_CASE("seed override") {
  auto c = parse_config(small_config());
  unsetenv("HEATFLOW_SEED");
  CHECK(effective_seed(c) == 3);
  setenv("HEATFLOW_SEED", "99", 1);
  CHECK(effective_seed(c) == 99);
  setenv("HEATFLOW_SEED", "x1", 1);
  CHECK_THROWS_AS(effective_seed(c), ConfigError);
  unsetenv("HEATFLOW_SEED");
}

TEST_CASE("infeasible boundary data") {
  auto j = small_config();
  j["boundary"]["delta"] = 1.5;
  const auto out = run_scenario(parse_config(j));
  CHECK(out.verdict == "infeasible");
  CHECK(out.report["initial"]["feasible"] == false);
  for (const auto& [name, c] : out.report["checks"].items()) CHECK(c["verdict"] == "skipped");
}

TEST_CASE("reports are deterministic") {
  unsetenv("HEATFLOW_SEED");
  const auto cfg = parse_config(small_config());
  const auto a = run_scenario(cfg), b = run_scenario(cfg);
  CHECK(a.verdict == "pass");
  CHECK(dump_report(a.report) == dump_report(b.report));
  CHECK(a.report["artifact_version"] == kArtifactVersion);
  CHECK(!a.report.contains("timing"));

  const auto d = scratch_dir("outputs");
  write_outputs(a, d);
  for (const char* f : {"report.json", "trajectory.csv", "u_final.field", "ut_final.field"})
    CHECK(fs::exists(d / f));
  CHECK(read_text(d / "report.json") == dump_report(a.report));

  Json bad = Json::object();
  bad["x"] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dump_report(bad), InputError);
}

TEST_CASE("suite gating") {
  CHECK_THROWS_AS(verify_suite(scratch_dir("empty")), UsageError);
  CHECK_THROWS_AS(verify_suite(fs::temp_directory_path() / "heatflow_no_such_dir"), UsageError);

  const auto d = scratch_dir("suite");
  auto good = small_config();
  good["name"] = "good";
  write_text(d / "a_good.json", good.dump(2));
  auto strict = small_config();
  strict["name"] = "strict";
  strict["thresholds"] = {{"cross_term_max", 1e-9}};
  write_text(d / "b_strict.json", strict.dump(2));
  auto explore = strict;
  explore["name"] = "explore";
  explore["exploratory"] = true;
  write_text(d / "c_explore.json", explore.dump(2));

  auto res = verify_suite(d, 2);
  CHECK(res.exit_code == 1);
  const auto& s = res.aggregate["scenarios"];
  REQUIRE(s.size() == 3);
  CHECK(s[0]["verdict"] == "pass");
  CHECK(s[1]["verdict"] == "fail");
  CHECK(s[1]["failed_checks"] == Json::array({"cross_term"}));
  CHECK(s[2]["verdict"] == "fail");

  fs::remove(d / "b_strict.json");
  res = verify_suite(d, 1);
  CHECK(res.exit_code == 0);
}

TEST_CASE("command line") {
  const auto d = scratch_dir("cli");
  CHECK(run_cli("mesh --refinement 2 --out " + (d / "m.mesh").string()) == 0);
  std::ifstream in(d / "m.mesh");
  const auto m = mesh::read_mesh(in);
  CHECK(m->num_vertices() == mesh::build_disk_mesh(2)->num_vertices());

  write_text(d / "bad.json", "{\"epsilon0\": -1}");
  CHECK(run_cli("run " + (d / "bad.json").string()) == 2);
  CHECK(run_cli("verify " + (d / "nothing").string()) == 2);
  CHECK(run_cli("frobnicate") != 0);

  auto strict = small_config();
  strict["thresholds"] = {{"cross_term_max", 1e-9}};
  write_text(d / "strict.json", strict.dump());
  CHECK(run_cli("run " + (d / "strict.json").string() + " --out " + (d / "out").string()) == 1);
  CHECK(fs::exists(d / "out" / "report.json"));
}
