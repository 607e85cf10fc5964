#pragma once

#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "heatflow/mesh.hpp"

namespace heatflow::elliptic {

enum class Method { Auto, Direct, Iterative };

/// Below this many unknowns Method::Auto factorizes directly.
inline constexpr int kDirectThreshold = 5000;

/// Solver for a fixed symmetric positive definite sparse matrix.
class SpdSolver {
 public:
  explicit SpdSolver(const mesh::SparseMatrix& A, Method method = Method::Auto,
                     double tol = 1e-12);
  ~SpdSolver();
  SpdSolver(SpdSolver&&) noexcept;
  SpdSolver& operator=(SpdSolver&&) noexcept;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  bool direct() const;
  int size() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Factorized Laplacians of one mesh. All right-hand sides are load vectors
/// over every vertex; results are vertex vectors over every vertex.
class EllipticSolver {
 public:
  explicit EllipticSolver(mesh::MeshPtr mesh, Method method = Method::Auto);

  const mesh::MeshPtr& mesh() const { return mesh_; }
  Method method() const { return method_; }

  /// Solves K x = load with x = g on the boundary (g over every vertex, or
  /// empty for zero trace).
  Eigen::VectorXd dirichlet(const Eigen::VectorXd& load,
                            const Eigen::VectorXd& boundary_values = {}) const;
  Eigen::MatrixXd dirichlet(const Eigen::MatrixXd& load) const;
  /// Solves K x = load − mean(load) with ∫x = 0.
  Eigen::VectorXd neumann(const Eigen::VectorXd& load) const;
  Eigen::MatrixXd neumann(const Eigen::MatrixXd& load) const;

 private:
  mesh::MeshPtr mesh_;
  Method method_;
  SpdSolver interior_;
  SpdSolver pinned_;
  int pin_ = 0;
};

/// Shared solver for a mesh, built on first use. Callers that reuse one
/// mesh for many solves pass Method::Direct to keep the factorization.
std::shared_ptr<const EllipticSolver> solver_for(const mesh::MeshPtr& mesh,
                                                 Method method = Method::Auto);

/// Centroid-rule load vector ∫ f φ_i of a per-triangle density (columns
/// are components).
Eigen::MatrixXd cell_load(const mesh::DiskMesh& mesh, const Eigen::MatrixXd& f);
/// ∫ F·∇φ_i of a per-triangle vector field.
Eigen::MatrixXd div_load(const mesh::CellVectorField& F);
/// ∫ F·∇⊥φ_i of a per-triangle vector field.
Eigen::MatrixXd curl_load(const mesh::CellVectorField& F);

struct PoissonSolution {
  mesh::Field psi;
  double linf = 0.0;
  double grad_l2 = 0.0;
  double rhs_l1 = 0.0;
  double rhs_l2 = 0.0;
  /// Relative residual of the interior linear system.
  double residual = 0.0;
};

/// Δψ = f with ψ = 0 on ∂B₁, for a scalar vertex field f.
PoissonSolution poisson_dirichlet(const mesh::Field& f);
/// Δψ = f with ψ = 0 on ∂B₁, for a per-triangle density f.
PoissonSolution poisson_dirichlet(const mesh::MeshPtr& mesh, const Eigen::VectorXd& f);
/// Δψ = |∇u|² with zero trace.
PoissonSolution psi_energy_density(const mesh::Field& u);

enum class Boundary { DirichletZero, NeumannZero };

struct WenteResult {
  mesh::Field w;
  /// ‖w‖_{L∞} / (‖∇a‖_{L²}‖∇b‖_{L²}); 0 when `degenerate`.
  double ratio = 0.0;
  bool degenerate = false;
  double grad_a = 0.0;
  double grad_b = 0.0;
};

/// Δw = ∇a·∇⊥b with the given boundary condition.
WenteResult wente_solve(const mesh::Field& a, const mesh::Field& b,
                        Boundary bc = Boundary::DirichletZero);

struct HodgePair {
  mesh::Field eta;
  mesh::Field zeta;
  mesh::CellVectorField residual;
  double residual_l2 = 0.0;
};

/// F = ∇⊥η + ∇ζ + residual with ζ = 0 on ∂B₁ and ∫η = 0, componentwise.
HodgePair hodge_decompose(const mesh::CellVectorField& F);

}  // namespace heatflow::elliptic
