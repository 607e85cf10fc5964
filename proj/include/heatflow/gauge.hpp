#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "heatflow/elliptic.hpp"
#include "heatflow/manifold.hpp"
#include "heatflow/mesh.hpp"

namespace heatflow::gauge {

using manifold::ConnectionForm;
using manifold::TargetManifold;
using mesh::Field;
using mesh::Vec2;

/// Ω = −assemble_omega(u), so that −Δu + u_t = Ω·∇u along the flow.
ConnectionForm connection(const TargetManifold& m, const Field& u);

struct GaugeOptions {
  int max_iterations = 5000;
  /// Stop once (E_prev − E) < rel_tol·E_prev.
  double rel_tol = 1e-10;
  double armijo = 1e-4;
};

struct GaugeFrame {
  Field P;   // n×n rotations at vertices
  Field xi;  // n×n skew matrices, zero on ∂B₁; empty until recover_xi
  double energy = 0.0;
  double initial_energy = 0.0;
  double r_gauge = 0.0;
  int iterations = 0;
  bool converged = false;
  /// True when the energy never increased across accepted iterations.
  bool monotone = true;
  /// max_v ‖P_vᵀP_v − Id‖_∞ after the last retraction.
  double orthogonality_error = 0.0;
};

/// skew(R̄ᵀ∇R + R̄ᵀΩR̄) per triangle, R̄ the vertex average.
ConnectionForm gauge_connection(const Field& R, const ConnectionForm& omega);
/// ∫|R̄ᵀ∇R + R̄ᵀΩR̄|² (skew part) over B₁.
double gauge_energy(const Field& R, const ConnectionForm& omega);

/// H¹-preconditioned Riemannian descent over vertexwise rotations with
/// polar retraction and Armijo backtracking, started from R ≡ Id and
/// normalized to P = Id at the centre vertex.
GaugeFrame minimize_gauge(const ConnectionForm& omega, const GaugeOptions& opts = {});

/// Solves Δξ = curl(Pᵀ∇P + PᵀΩP), ξ = 0 on ∂B₁, on the upper triangle and
/// fills r_gauge.
GaugeFrame recover_xi(GaugeFrame frame, const ConnectionForm& omega);

enum class ABoundary { Natural, Dirichlet };

struct ABOptions {
  ABoundary boundary = ABoundary::Natural;
  double tol = 1e-10;
  int max_iterations = 200;
};

struct ConservationFrame {
  Field Ahat;
  Field A;
  Field B;
  double r_cons = 0.0;
  int iterations = 0;
  bool converged = false;
  double min_singular = 0.0;
  std::vector<double> changes;
};

/// Fixed-point iteration ΔB = −curl(AΩ), B|∂ = 0, and ΔA = div(AΩ) from
/// A⁰ = Pᵀ. Natural boundary: (∇A − AΩ)·ν = 0 with ∫A = ∫Pᵀ. Dirichlet:
/// A = Pᵀ on ∂B₁. Throws DivergenceError when the change grows three steps
/// in a row.
ConservationFrame construct_AB(const GaugeFrame& gauge, const ConnectionForm& omega,
                               const ABOptions& opts = {});

/// ‖∇A − AΩ − ∇⊥B‖_{L²}.
double conservation_law_residual(const ConservationFrame& frame, const ConnectionForm& omega);

/// Dual-norm size of weak_div(A∇u + B∇⊥u) − A u_t over interior test
/// functions: (rᵀK⁻¹r)^{1/2}.
double conservation_residual(const ConservationFrame& frame, const Field& u, const Field& ut);

/// A∇u + B∇⊥u per triangle with vertex-averaged A and B.
mesh::CellVectorField conserved_flux(const ConservationFrame& frame, const Field& u);

struct BSupEstimate {
  double b_sup = 0.0;
  double energy = 0.0;  // E_raw(u)
  double ratio = 0.0;   // ‖B‖_{L∞} / E_raw, 0 when E_raw = 0
  Field b_wente;
  double wente_sup = 0.0;
  /// ‖B_wente − B‖_{L²}.
  double difference_l2 = 0.0;
};

/// Re-solves B from ΔB_kj = Σ_l ∇(A_ki M^i_jl(u))·∇⊥u^l with zero trace and
/// compares it with the fixed-point B.
BSupEstimate b_sup_estimate(const ConservationFrame& frame, const TargetManifold& m,
                            const Field& u);

struct PStructure {
  std::vector<Field> Q;  // k = 1..n, n×n each
  std::vector<Field> R;
  Field eta;
  Field zeta;
  /// Load of the four right-hand terms of ΔP, n² columns (row-major).
  Eigen::MatrixXd rhs_load;
  /// Dual-norm residual of the weak ΔP identity.
  double residual = 0.0;
  double q_norm = 0.0;  // Σ_k ‖∇Q_k‖_{L²}
  double r_norm = 0.0;  // Σ_k ‖∇R_k‖_{L²}
};

/// Q_k, R_k from M(u), P and A⁻¹, A⁻¹B; checks
/// ΔP = ∇P·∇⊥ξ − ∇Q_k·∇⊥η^k − div(Q_k∇ζ^k) + ∇R_k·∇⊥u^k weakly.
/// Throws UsageError when A is singular at a vertex.
PStructure p_structure(const ConservationFrame& frame, const GaugeFrame& gauge,
                       const TargetManifold& m, const Field& u,
                       const elliptic::HodgePair& hodge);

/// Ball B_r(x) with a point y inside it.
struct Probe {
  Vec2 x;
  double r = 0.0;
  Vec2 y;
};

/// Probes with B_{2r}(x) ⊂ B₁: centres uniform in |x| ≤ 0.6, r = (1 − |x|)/2
/// scaled by U[0.2, 1], y uniform in B_r(x).
std::vector<Probe> random_probes(int count, std::uint64_t seed);

struct OscillationReport {
  double max_oscillation = 0.0;
  /// Largest per-probe value of 2‖P̃‖_∞ + ‖∇V‖_{L²(B_2r(x))}/√π.
  double max_bound = 0.0;
  /// max_oscillation / (√ε₀ + ‖u_t‖_{L²}).
  double ratio = 0.0;
  int probes_used = 0;
  int skipped = 0;
  double p_tilde_sup = 0.0;
};

/// P = P̃ + V with ΔP̃ given by the structure terms, P̃ = 0 on ∂B₁.
OscillationReport p_oscillation(const GaugeFrame& gauge, const PStructure& structure,
                                double ut_norm, double epsilon0,
                                const std::vector<Probe>& probes);

/// Value of a P1 field at an arbitrary point of the meshed disk.
Eigen::VectorXd evaluate(const Field& f, const Vec2& p);

}  // namespace heatflow::gauge
