#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "heatflow/elliptic.hpp"
#include "heatflow/manifold.hpp"
#include "heatflow/mesh.hpp"

namespace heatflow::flow {

using manifold::TargetManifold;
using mesh::Field;

struct Energy {
  double half = 0.0;  // ½∫|∇u|²
  double raw = 0.0;   // ∫|∇u|²
};

Energy dirichlet_energy(const Field& u);
/// ∫|∇(a − b)|² computed from the difference field.
double gradient_distance_sq(const Field& a, const Field& b);

/// A(u)(∇u, ∇u) at vertices: the per-triangle Gram matrices of ∇u are
/// lumped to vertices and contracted with A(u_v).
Eigen::MatrixXd curvature_term(const Field& u, const TargetManifold& m);

/// Tangential part of the lumped discrete Laplacian, zero on the boundary.
Field tension(const Field& u, const TargetManifold& m);

/// Discrete harmonic extension of the boundary values of `trace`, projected to N.
Field harmonic_initial_map(const Field& trace, const TargetManifold& m);

struct FlowState {
  double t = 0.0;
  Field u;
  Field ut;
};

/// Linearly-implicit integrator with the boundary trace frozen to that of
/// the initial map.
class Integrator {
 public:
  Integrator(const TargetManifold& m, const Field& u0);

  const TargetManifold& target() const { return target_; }
  const Eigen::MatrixXd& trace() const { return chi_; }

  /// One step of size tau. Throws StepSizeError when a vertex leaves the
  /// projection reach; energy is not checked here.
  FlowState step(const FlowState& state, double tau);

 private:
  const elliptic::SpdSolver& solver(double tau);

  TargetManifold target_;
  mesh::MeshPtr mesh_;
  Eigen::MatrixXd chi_;
  std::map<double, std::unique_ptr<elliptic::SpdSolver>> solvers_;
};

struct FlowOptions {
  double t_end = 20.0;
  /// Initial step; 0 selects 4h².
  double tau = 0.0;
  /// The first half of the budget stores every step; the rest is spread
  /// uniformly over the remaining horizon.
  int max_snapshots = 400;
  /// Allowed energy increase per step, relative to E_raw(u₀).
  double energy_tol = 1e-10;
  int max_halvings = 30;
  double epsilon0 = 0.1;
  /// T₀ is searched among times ≥ this floor.
  double t0_floor = 0.0;
};

struct Monitor {
  double t = 0.0;
  double e_raw = 0.0;
  double ut_sq = 0.0;  // ‖u_t‖²_{L²}, lumped mass
  double tension_l2 = 0.0;
};

struct Snapshot {
  double t = 0.0;
  int step = 0;  // index into the monitor series
  Field u;
  Field ut;
};

struct FlowTrajectory {
  std::vector<Monitor> monitors;
  std::vector<Snapshot> snapshots;
  std::optional<double> t0;
  int t0_step = -1;
  double tau_initial = 0.0;
  double tau_final = 0.0;
  int halvings = 0;
  int energy_violations = 0;
  double max_energy_increase = 0.0;
  double epsilon0 = 0.1;
};

FlowTrajectory run_flow(const TargetManifold& m, const Field& u0, const FlowOptions& opts);

/// Lumped ‖f‖²_{L²}.
double lumped_norm_sq(const Field& f);

/// First monitor time ≥ floor with ‖u_t‖ < √ε₀, as (time, step index).
std::optional<std::pair<double, int>> detect_t0(const std::vector<Monitor>& monitors,
                                                double epsilon0, double floor);

/// Index of the monitor at time t (to 1e-9); UsageError when absent.
int monitor_index(const FlowTrajectory& traj, double t);

/// 2∫_{t₁}^{t₂}‖u_t‖² by the trapezoid rule over monitor steps.
double dissipation(const FlowTrajectory& traj, int k1, int k2);

/// |2∫∫|u_t|² − (E_raw(t₁) − E_raw(t₂))|.
double decay_identity_residual(const FlowTrajectory& traj, double t1, double t2);

struct ConvexityPair {
  double t1 = 0.0;
  double t2 = 0.0;
  double difference = 0.0;   // E_raw(t₁) − E_raw(t₂)
  double denominator = 0.0;  // ∫|∇u(t₁) − ∇u(t₂)|²
  double ratio = 0.0;
  bool degenerate = false;
  bool pass = true;
};

struct ConvexityReport {
  /// Non-degenerate pairs only.
  std::vector<ConvexityPair> pairs;
  int non_degenerate = 0;
  int degenerate = 0;
  int failures = 0;
  double min_ratio = 0.0;
  double threshold = 0.25;
  double slack = 0.05;
};

/// Convexity data for two snapshots.
ConvexityPair convexity_pair(const Snapshot& a, const Snapshot& b, double threshold,
                             double slack);

/// Samples snapshot pairs with t₂ > t₁ ≥ T₀ until `count` non-degenerate
/// pairs are found or the pool is exhausted.
ConvexityReport convexity_report(const FlowTrajectory& traj, int count, std::uint64_t seed,
                                 double threshold = 0.25, double slack = 0.05);

/// Ratio (E(t) − E(∞)) / ∫|∇(u(t) − u∞)|² for every snapshot after T₀
/// against the final snapshot.
ConvexityReport stationary_convexity(const FlowTrajectory& traj, double threshold = 0.5,
                                     double slack = 0.05);

struct MonotonicityReport {
  std::optional<double> t0;
  int violations = 0;
  double tolerance = 0.0;
  int mean_value_pairs = 0;
  int mean_value_violations = 0;
};

/// Counts steps after T₀ where ‖u_t‖² grows beyond rel_tol·‖u_t(T₀)‖², and
/// checks ‖u_t(t₂)‖² ≤ (t₂−t₁)⁻¹∫‖u_t‖² on `mean_value_pairs` sampled pairs.
MonotonicityReport ut_monotonicity_check(const FlowTrajectory& traj, double rel_tol = 1e-10,
                                         int mean_value_pairs = 50, std::uint64_t seed = 1);

struct CrossTerm {
  double lhs = 0.0;
  double rhs = 0.0;
  double constant = 0.0;
  bool degenerate = false;
};

/// lhs = ∫|u(t₁)−u(t₂)|²|∇u(t₂)|², rhs = ∫|∇u(t₁)−∇u(t₂)|², C = lhs/(ε₀·rhs).
CrossTerm cross_term_check(const Snapshot& s1, const Snapshot& s2, double epsilon0);

struct CauchyCertificate {
  double value = 0.0;  // sup of ∫|∇(u₁−u₂)|² − 4(E₁ − E₂)
  double max_denominator = 0.0;
  int pairs = 0;
  bool pass = false;
};

CauchyCertificate cauchy_certificate(const FlowTrajectory& traj, double slack = 0.05);

/// Columns t,E_raw,ut_L2_sq,tension_L2; one row per step.
void write_trajectory_csv(std::ostream& os, const FlowTrajectory& traj);

}  // namespace heatflow::flow
