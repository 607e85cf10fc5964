#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace heatflow::mesh {

using Vec2 = Eigen::Vector2d;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triangle = std::array<int, 3>;

inline constexpr int kMaxRefinement = 10;

/// Conforming P1 triangulation of a polygonal approximation of the unit disk.
///
/// Vertices sit on concentric rings: ring k carries 6k points at radius k/N,
/// with N = 2^(refinement+1) and the outermost ring snapped onto the unit
/// circle. Geometry (areas, hat-function gradients, stiffness and mass
/// matrices, a bucket grid for spatial queries) is computed once at
/// construction; the object is immutable afterwards.
class DiskMesh {
 public:
  DiskMesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
           std::vector<bool> boundary, int refinement);

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  const Vec2& vertex(int i) const { return vertices_[i]; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const Triangle& triangle(int t) const { return triangles_[t]; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  bool is_boundary(int i) const { return boundary_[i]; }
  const std::vector<int>& interior_vertices() const { return interior_; }
  const std::vector<int>& boundary_vertices() const { return boundary_list_; }
  /// Position of vertex i in interior_vertices(), or -1 on the boundary.
  int interior_index(int i) const { return interior_index_[i]; }
  /// Vertex closest to the origin.
  int center_vertex() const { return center_; }
  /// Refinement level, or -1 for an imported mesh.
  int refinement() const { return refinement_; }
  /// Maximum edge length.
  double h() const { return h_; }

  double area(int t) const { return areas_[t]; }
  double total_area() const { return total_area_; }
  Vec2 centroid(int t) const;
  /// Rows are the (constant) gradients of the three hat functions on t.
  const Eigen::Matrix<double, 3, 2>& hat_gradients(int t) const { return grads_[t]; }
  /// Triangles sharing vertex i.
  const std::vector<int>& vertex_triangles(int i) const { return vertex_tris_[i]; }

  /// Stiffness matrix K_ij = ∫ ∇φ_i·∇φ_j over all vertices.
  const SparseMatrix& stiffness() const { return stiffness_; }
  /// Consistent mass matrix M_ij = ∫ φ_i φ_j.
  const SparseMatrix& mass() const { return mass_; }
  /// Row sums of the mass matrix (|T|/3 per incident triangle).
  const Eigen::VectorXd& lumped_mass() const { return lumped_; }

  double min_angle_degrees() const;

  /// Invokes fn(t) for every triangle whose bounding box meets the disk of
  /// the given radius around center.
  void for_each_triangle_near(const Vec2& center, double radius,
                              const std::function<void(int)>& fn) const;

  /// Triangle containing p with its barycentric coordinates, if p is inside
  /// the meshed polygon.
  std::optional<std::pair<int, Eigen::Vector3d>> locate(const Vec2& p) const;

 private:
  void build_geometry();
  void build_grid();

  std::vector<Vec2> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<bool> boundary_;
  int refinement_;

  std::vector<int> interior_;
  std::vector<int> boundary_list_;
  std::vector<int> interior_index_;
  std::vector<std::vector<int>> vertex_tris_;
  int center_ = 0;
  double h_ = 0.0;
  std::vector<double> areas_;
  std::vector<Eigen::Matrix<double, 3, 2>> grads_;
  double total_area_ = 0.0;
  SparseMatrix stiffness_;
  SparseMatrix mass_;
  Eigen::VectorXd lumped_;

  double grid_cell_ = 1.0;
  int grid_dim_ = 1;
  std::vector<std::vector<int>> grid_;
};

using MeshPtr = std::shared_ptr<const DiskMesh>;

/// Deterministic ring mesh of B₁. Throws ConfigError outside [0, kMaxRefinement].
MeshPtr build_disk_mesh(int refinement);

/// Plain-text mesh format: `nv nt`, nv lines `x y boundary_flag`, nt lines `i j k`.
void write_mesh(std::ostream& os, const DiskMesh& mesh);
MeshPtr read_mesh(std::istream& is);

enum class Shape { Scalar, Vector, Matrix };

/// Vertex-based P1 field valued in R, R^n or n×n matrices (row-major).
class Field {
 public:
  Field() = default;
  Field(MeshPtr mesh, Shape shape, int n, Eigen::MatrixXd values);

  static Field scalar(MeshPtr mesh, const Eigen::VectorXd& values);
  static Field vector(MeshPtr mesh, Eigen::MatrixXd values);
  static Field matrix(MeshPtr mesh, int n, Eigen::MatrixXd values);
  static Field zeros(MeshPtr mesh, Shape shape, int n);

  const MeshPtr& mesh() const { return mesh_; }
  Shape shape() const { return shape_; }
  /// Vector length or matrix order (1 for scalars).
  int n() const { return n_; }
  /// Number of stored components per vertex.
  int dim() const { return static_cast<int>(values_.cols()); }
  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::MatrixXd& values() { return values_; }

  Eigen::VectorXd at(int vertex) const { return values_.row(vertex).transpose(); }
  Eigen::MatrixXd matrix_at(int vertex) const;
  void set_matrix(int vertex, const Eigen::MatrixXd& m);
  /// Component c as a scalar field.
  Field component(int c) const;

 private:
  MeshPtr mesh_;
  Shape shape_ = Shape::Scalar;
  int n_ = 1;
  Eigen::MatrixXd values_;
};

/// Per-triangle 2-vector with a payload of `dim` components per direction.
struct CellVectorField {
  MeshPtr mesh;
  Eigen::MatrixXd x;  // nt × dim, first component (∂_x part)
  Eigen::MatrixXd y;  // nt × dim, second component (∂_y part)

  int dim() const { return static_cast<int>(x.cols()); }
  static CellVectorField zeros(MeshPtr mesh, int dim);
};

/// Exact per-triangle gradient of the P1 interpolant (componentwise).
CellVectorField gradient(const Field& f);
/// (−∂_y f, ∂_x f) per triangle.
CellVectorField perp_gradient(const Field& f);
/// ∇a·∇⊥b = a_y b_x − a_x b_y per triangle; both fields scalar on one mesh.
Eigen::VectorXd jacobian_product(const Field& a, const Field& b);
/// Per-triangle values of the field averaged over the triangle's vertices.
Eigen::MatrixXd centroid_values(const Field& f);

struct Norms {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

/// Pointwise magnitude is the Euclidean (Frobenius) norm of the value.
Norms norms(const Field& f);
Norms norms(const CellVectorField& f);
/// Norms of a per-triangle scalar.
Norms cell_norms(const DiskMesh& mesh, const Eigen::VectorXd& f);

/// Mass-lumped weak divergence and curl at vertices (componentwise).
std::pair<Field, Field> weak_div_curl(const CellVectorField& F);

using PlanarMap = std::function<Eigen::VectorXd(const Vec2&)>;

/// Samples g at every vertex. Throws InputError on a non-finite sample.
Field interpolate(const MeshPtr& mesh, const PlanarMap& g);
Field interpolate_scalar(const MeshPtr& mesh, const std::function<double(const Vec2&)>& g);

/// Mesh-field text format: header `t value_dim`, then one line per vertex.
void write_field(std::ostream& os, const Field& f, double t);
/// Reads a field written by write_field; returns (t, field).
std::pair<double, Field> read_field(std::istream& is, const MeshPtr& mesh);

/// ∫ f over B₁ for a P1 field (exact), componentwise.
Eigen::VectorXd integrate(const Field& f);

}  // namespace heatflow::mesh
