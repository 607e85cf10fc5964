#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatflow/elliptic.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/gauge.hpp"
#include "heatflow/mesh.hpp"

namespace heatflow::hardy {

using mesh::Field;
using mesh::MeshPtr;

/// Radial profile equal to `plateau` on r ≤ inner, falling to zero at
/// r = outer through the cubic 1 − 3s² + 2s³.
struct Bump {
  double plateau = 2.0;
  double inner = 0.375;
  double outer = 0.5;

  double value(double r) const;
  double slope(double r) const;
  /// ∫φ over R², closed form.
  double mass() const;
  double gradient_bound() const;
};

/// Unit-mass bump with plateau 2 on B_{3/8}; the transition width is solved
/// for. Falls back to a lower plateau when the support would pass
/// 1/2 − pad.
Bump build_bump(double pad = 1e-3);

struct HardyOptions {
  /// Scales per factor of two; 1 gives the plain dyadic family.
  int scales_per_octave = 8;
  int max_octaves = 20;
  /// Kernel weights are cached per (vertex, scale) while the estimated
  /// entry count stays below this; otherwise they are recomputed per call.
  double cache_limit = 2e7;
};

/// Local maximal function of per-triangle densities on one mesh.
class HardyEstimator {
 public:
  explicit HardyEstimator(MeshPtr mesh, HardyOptions opts = {});

  const MeshPtr& mesh() const { return mesh_; }
  const Bump& bump() const { return bump_; }
  const HardyOptions& options() const { return opts_; }

  /// Scales t_i = 2^{−i/k}(1 − |x|) for vertex v, i = 0..kJ with
  /// J = ⌈log₂((1 − |x|)/h)⌉ capped; empty on the boundary.
  std::vector<double> scales(int vertex) const;

  /// φ_t ∗ f at a vertex. Kernel weights over a triangle use the exact
  /// area of T ∩ B_ρ(x) under a Gauss rule in ρ, so the weights of one
  /// (vertex, scale) sum to 1 up to rounding.
  double convolve(int vertex, double t, const Eigen::VectorXd& f) const;

  /// f* at vertices: max of |φ_t ∗ f| over scales and of the local
  /// area-weighted |f| (the t → 0 limit). Boundary vertices keep the local
  /// value only.
  Field radial_maximal(const Eigen::VectorXd& f) const;

  /// ‖f*‖_{L¹} with the lumped mass.
  double h1_norm(const Eigen::VectorXd& f) const;

 private:
  double local_value(int vertex, const Eigen::VectorXd& f) const;
  /// Weights of φ_t(x_v − ·) over triangles, appended to out.
  void kernel_weights(int vertex, double t, std::vector<std::pair<int, double>>& out) const;

  MeshPtr mesh_;
  HardyOptions opts_;
  Bump bump_;
  bool cached_ = false;
  std::vector<std::size_t> vertex_start_;  // into scale_start_
  std::vector<std::size_t> scale_start_;   // into entries_
  std::vector<std::pair<int, double>> entries_;
};

/// |∇u|² per triangle.
Eigen::VectorXd energy_density(const Field& u);

struct LowerBoundReport {
  double min_ratio = 0.0;  // 0 when nothing was evaluated
  int evaluated = 0;
  int skipped = 0;         // centroids with |∇u|² ≤ 1e-12
  int violations = 0;      // ratio < 1/4
  int below_floor = 0;     // ratio < floor
};

/// For every probe and every triangle whose centroid y lies in B_r(x):
/// (∇⊥η + ∇ζ)·(Pᵀ(x)∇u)(y) / |∇u|²(y).
LowerBoundReport pointwise_lower_bound_check(const Field& u, const gauge::GaugeFrame& gauge,
                                             const elliptic::HodgePair& hodge,
                                             const std::vector<gauge::Probe>& probes,
                                             double floor = 0.2);

struct H1Sample {
  double t = 0.0;
  double h1_density = 0.0;
  double energy = 0.0;
  double h1_over_energy = 0.0;
  /// (‖ψ‖_{L∞} + ‖∇ψ‖_{L²}) / ‖|∇u|²‖_{h¹} with Δψ = |∇u|², ψ|∂ = 0.
  double poisson_constant = 0.0;
};

struct H1EnergyReport {
  bool skipped = false;
  std::string reason;
  std::vector<H1Sample> samples;
  double max_ratio = 0.0;
  double min_poisson_constant = 0.0;
  double max_poisson_constant = 0.0;
};

/// ‖|∇u(t)|²‖_{h¹} on up to max_samples snapshots with t ≥ T₀.
H1EnergyReport h1_energy_check(const flow::FlowTrajectory& traj, int max_samples = 6,
                               HardyOptions opts = {});

}  // namespace heatflow::hardy
