#include <chrono>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "heatflow/error.hpp"
#include "heatflow/lab.hpp"

using namespace heatflow;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

mesh::Field read_snapshot(const std::string& path, const mesh::MeshPtr& mesh) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open snapshot");
  return mesh::read_field(in, mesh).second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmonic map heat flow lab on the unit disk"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite_dir, snapshot_path, ut_path, mesh_out;
  int jobs = 1, refinement = 3;

  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("config", config_path, "Scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "Directory for report.json, trajectory.csv and fields");

  auto* verify = app.add_subcommand("verify", "Run every scenario in a directory");
  verify->add_option("dir", suite_dir, "Directory of scenario configs")->required();
  verify->add_option("--jobs", jobs, "Scenarios run concurrently")->check(CLI::PositiveNumber);
  verify->add_option("--out", out_dir, "Write per-scenario outputs under this directory");

  auto* gauge = app.add_subcommand("gauge", "Gauge and conservation diagnostics of a snapshot");
  gauge->add_option("snapshot", snapshot_path, "Field file of u")->required();
  gauge->add_option("config", config_path, "Scenario config (target, refinement)")->required();
  gauge->add_option("--ut", ut_path, "Field file of u_t (zero when omitted)");

  auto* hardy = app.add_subcommand("hardy", "Hardy-space diagnostics of a snapshot");
  hardy->add_option("snapshot", snapshot_path, "Field file of u")->required();
  hardy->add_option("config", config_path, "Scenario config (target, refinement)")->required();

  auto* mesh_cmd = app.add_subcommand("mesh", "Write the disk mesh");
  mesh_cmd->add_option("--refinement", refinement, "Refinement level")->required();
  mesh_cmd->add_option("--out", mesh_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = lab::load_config(config_path);
      const auto start = std::chrono::steady_clock::now();
      const auto out = lab::run_scenario(cfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!out_dir.empty()) {
        lab::write_outputs(out, out_dir);
      } else {
        std::cout << lab::dump_report(out.report);
      }
      std::cerr << cfg.name << ": " << out.verdict << " (" << secs << " s)\n";
      for (const auto& [name, c] : out.report["checks"].items())
        std::cerr << "  " << name << ": " << c["verdict"].get<std::string>()
                  << (c.contains("reason") ? " (" + c["reason"].get<std::string>() + ")" : "")
                  << "\n";
      return out.verdict == "pass" || cfg.exploratory ? 0 : kExitFail;
    }
    if (*verify) {
      std::optional<std::filesystem::path> out;
      if (!out_dir.empty()) out = out_dir;
      const auto res = lab::verify_suite(suite_dir, jobs, out);
      std::cout << lab::dump_report(res.aggregate);
      for (const auto& s : res.aggregate["scenarios"]) {
        std::cerr << s["config"].get<std::string>() << ": " << s["verdict"].get<std::string>();
        if (s.contains("failed_checks") && !s["failed_checks"].empty())
          std::cerr << " [" << s["failed_checks"].dump() << "]";
        if (s.contains("error")) std::cerr << " (" << s["error"].get<std::string>() << ")";
        std::cerr << "\n";
      }
      return res.exit_code;
    }
    if (*gauge || *hardy) {
      const auto cfg = lab::load_config(config_path);
      const auto N = lab::make_target(cfg.target);
      const auto m = mesh::build_disk_mesh(cfg.refinement);
      const auto u = read_snapshot(snapshot_path, m);
      const auto seed = lab::effective_seed(cfg);
      lab::Json j;
      if (*gauge) {
        const mesh::Field ut = ut_path.empty() ? mesh::Field() : read_snapshot(ut_path, m);
        j = lab::gauge_diagnostics(N, u, ut, cfg.epsilon0, seed);
      } else {
        j = lab::hardy_diagnostics(N, u, cfg.epsilon0, seed);
      }
      std::cout << lab::dump_report(j);
      return 0;
    }
    if (*mesh_cmd) {
      const auto m = mesh::build_disk_mesh(refinement);
      std::ofstream os(mesh_out);
      if (!os) throw InputError(mesh_out + ": cannot write");
      mesh::write_mesh(os, *m);
      std::cerr << "mesh: " << m->num_vertices() << " vertices, " << m->num_triangles()
                << " triangles, h = " << m->h() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
  return 0;
}
