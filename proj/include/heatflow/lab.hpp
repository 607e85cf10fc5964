#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "heatflow/flow.hpp"
#include "heatflow/manifold.hpp"
#include "heatflow/mesh.hpp"

namespace heatflow::lab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kArtifactVersion = "1.0.0";

enum class Check { Convexity, UtMonotone, DecayIdentity, CrossTerm, Gauge, Hardy, Cauchy };

const std::vector<Check>& all_checks();
std::string check_name(Check c);
/// Throws ConfigError on an unknown name.
Check parse_check(const std::string& name);

struct TargetSpec {
  std::string kind = "sphere";  // sphere | torus | clifford
  double major = 2.0;
  double minor = 0.5;
};

struct BoundarySpec {
  std::string family = "cap";  // cap | fourier
  double delta = 0.1;
  /// (k, a_k, b_k): χ(θ) = Π(p₀ + Σ a_k cos(kθ) e₁ + b_k sin(kθ) e₂).
  std::vector<std::array<double, 3>> coeffs;
};

struct Thresholds {
  double convexity = 0.25;
  double slack = 0.05;
  double lower_bound_floor = 0.2;
  double cross_term_max = 10.0;
  double hardy_ratio_max = 20.0;
  double b_sup_ratio_max = 1.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  TargetSpec target;
  BoundarySpec boundary;
  /// Amplitude a of the interior bend a(1 − r²)e₁ added to u₀.
  double initial_perturbation = 0.0;
  int refinement = 4;
  /// 0 selects 4h².
  double tau = 0.0;
  int max_snapshots = 400;
  double t_end = 20.0;
  double epsilon0 = 0.1;
  double t0_floor = 0.0;
  std::vector<Check> checks = all_checks();
  std::uint64_t seed = 1;
  int pairs = 50;
  /// Verdicts are reported but never gate the suite exit code.
  bool exploratory = false;
  Thresholds thresholds;
};

/// Validates and fills defaults; unknown keys are rejected by name.
ScenarioConfig parse_config(const Json& j);
/// Parse errors carry the line and column of the offending byte.
ScenarioConfig load_config(const std::filesystem::path& path);
Json config_to_json(const ScenarioConfig& cfg);

/// HEATFLOW_SEED when set and valid, otherwise the config seed.
std::uint64_t effective_seed(const ScenarioConfig& cfg);

manifold::TargetManifold make_target(const TargetSpec& spec);

struct InitialData {
  mesh::Field u0;
  double energy = 0.0;
  double scale = 1.0;  // boundary amplitude multiplier actually used
  int shrink_steps = 0;
  bool feasible = false;
};

/// Harmonic extension of the boundary family plus the interior bend,
/// shrinking the boundary amplitude by 0.9 up to ten times until
/// E_raw(u₀) < ε₀.
InitialData build_initial_data(const ScenarioConfig& cfg, const manifold::TargetManifold& N,
                               const mesh::MeshPtr& mesh);

struct RunOutput {
  Json report;
  /// pass | fail | infeasible
  std::string verdict;
  flow::FlowTrajectory trajectory;
};

RunOutput run_scenario(const ScenarioConfig& cfg);

/// Writes report.json, trajectory.csv and the final u, u_t fields.
void write_outputs(const RunOutput& out, const std::filesystem::path& dir);

/// Compact JSON text with fixed number formatting; non-finite values are
/// rejected with InputError.
std::string dump_report(const Json& report);

struct SuiteResult {
  Json aggregate;
  int exit_code = 0;
};

/// Runs every *.json config in `dir` (sorted by name) on `jobs` workers.
/// Throws UsageError for a missing or empty directory.
SuiteResult verify_suite(const std::filesystem::path& dir, int jobs = 1,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Gauge chain diagnostics for one map (u_t may be empty for zero).
Json gauge_diagnostics(const manifold::TargetManifold& N, const mesh::Field& u,
                       const mesh::Field& ut, double epsilon0, std::uint64_t seed);
/// Hardy diagnostics of |∇u|² for one map.
Json hardy_diagnostics(const manifold::TargetManifold& N, const mesh::Field& u,
                       double epsilon0, std::uint64_t seed);

}  // namespace heatflow::lab
