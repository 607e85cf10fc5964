#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heatflow/mesh.hpp"

namespace heatflow::manifold {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Kind { Sphere, Torus3, Clifford, Generic };

/// Smooth level function Φ: R^n → R^k whose zero set is the target.
struct LevelFunction {
  int codim = 1;
  std::function<Vec(const Vec&)> value;
  /// k × n Jacobian; central differences of `value` when empty.
  std::function<Mat(const Vec&)> jacobian;
};

/// Second fundamental form in ambient coordinates: entry i holds the n×n
/// matrix (j, l) ↦ A^i_{j,l}, so A(p)(X, Y)^i = X^T entry[i] Y.
using SffTensor = std::vector<Mat>;

/// Closed submanifold N ⊂ R^n given through its nearest-point projection.
class TargetManifold {
 public:
  /// Unit sphere S^{n-1} ⊂ R^n.
  static TargetManifold sphere(int n);
  /// Torus of revolution around the z-axis in R³, radii R > r > 0.
  static TargetManifold torus(double major, double minor);
  /// Clifford torus S¹(1/√2) × S¹(1/√2) ⊂ R⁴.
  static TargetManifold clifford();
  /// Zero set of a level function. `reach` bounds the tubular neighbourhood;
  /// `sampler` returns points on N (optional, used by sampling diagnostics).
  static TargetManifold generic(int n, LevelFunction phi, double reach,
                                std::function<Vec(std::mt19937_64&)> sampler = {});

  Kind kind() const { return kind_; }
  int ambient_dim() const { return n_; }
  int codim() const { return codim_; }
  double reach() const { return reach_; }
  double major_radius() const { return major_; }
  double minor_radius() const { return minor_; }
  std::string name() const;

  /// Nearest point of N. Throws MedialAxisError where the projection is undefined.
  Vec project(const Vec& p) const;
  /// Distance from p to N.
  double distance(const Vec& p) const;
  /// Orthonormal basis of the normal space at p ∈ N (n × codim).
  Mat normal_basis(const Vec& p) const;
  /// v minus its normal component at p. Throws UsageError if p is off N.
  Vec tangent_project(const Vec& p, const Vec& v) const;
  /// A(p)(X, Y). Requires p on N and X, Y tangent (UsageError otherwise).
  Vec second_fundamental_form(const Vec& p, const Vec& X, const Vec& Y) const;

  /// Ambient extension of the second fundamental form, evaluated without
  /// tangency checks. Closed forms are used for the built-in kinds and are
  /// valid in a neighbourhood of N; generic targets are evaluated at project(p).
  SffTensor sff_tensor(const Vec& p) const;

  /// True when p satisfies the defining constraint to `tol`.
  bool on_manifold(const Vec& p, double tol = 1e-8) const;
  /// Random point of N.
  Vec sample(std::mt19937_64& rng) const;
  /// Base point used by the named boundary families, with two orthonormal
  /// tangent vectors there.
  Vec base_point() const;
  std::pair<Vec, Vec> base_tangents() const;

 private:
  TargetManifold() = default;
  Mat tangent_projector(const Vec& p) const;
  Mat level_jacobian(const Vec& p) const;
  Vec project_generic(const Vec& p) const;
  SffTensor sff_generic(const Vec& p) const;

  Kind kind_ = Kind::Sphere;
  int n_ = 3;
  int codim_ = 1;
  double reach_ = 1.0;
  double major_ = 0.0;
  double minor_ = 0.0;
  LevelFunction phi_;
  std::function<Vec(std::mt19937_64&)> sampler_;
};

/// Contraction A(p)(X, Y) of a tensor from sff_tensor.
Vec contract(const SffTensor& A, const Vec& X, const Vec& Y);

/// Largest operator norm v ↦ (A^i_{j,l} v^l)_{i,j} over sampled points of N.
double sup_sff_norm(const TargetManifold& m, int samples, std::uint64_t seed = 1);

/// max over sampled pairs of |(p − q)^⊥_p| / |p − q|²; coincident pairs skipped.
double normal_deviation_check(const TargetManifold& m, int samples, std::uint64_t seed = 1);

/// Per-triangle antisymmetric pair (Ω_x, Ω_y) of the connection 1-form.
struct ConnectionForm {
  mesh::MeshPtr mesh;
  int n = 0;
  std::vector<Mat> x;
  std::vector<Mat> y;

  static ConnectionForm zeros(mesh::MeshPtr mesh, int n);
  /// (∫ |Ω_x|² + |Ω_y|²)^{1/2}
  double l2_norm() const;
};

/// Ω^i_j = [A^i(u)_{j,l} − A^j(u)_{i,l}] ∇u^l per triangle, using the
/// centroid value of u and the triangle gradient. Throws UsageError when a
/// vertex value is off N by more than 1e-8.
ConnectionForm assemble_omega(const TargetManifold& m, const mesh::Field& u);

}  // namespace heatflow::manifold
