#include "heatflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "heatflow/error.hpp"

namespace heatflow::mesh {

namespace {

using Triplet = Eigen::Triplet<double>;

void require_same_mesh(const MeshPtr& a, const MeshPtr& b, const char* what) {
  if (!a || a != b) throw UsageError(std::string(what) + ": fields live on different meshes");
}

}  // namespace

DiskMesh::DiskMesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                   std::vector<bool> boundary, int refinement)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      boundary_(std::move(boundary)),
      refinement_(refinement) {
  if (boundary_.size() != vertices_.size())
    throw InputError("mesh: boundary flag count does not match vertex count");
  for (const auto& t : triangles_)
    for (int v : t)
      if (v < 0 || v >= num_vertices()) throw InputError("mesh: triangle index out of range");
  build_geometry();
  build_grid();
}

void DiskMesh::build_geometry() {
  const int nv = num_vertices();
  const int nt = num_triangles();

  interior_index_.assign(nv, -1);
  for (int i = 0; i < nv; ++i) {
    if (boundary_[i]) {
      boundary_list_.push_back(i);
    } else {
      interior_index_[i] = static_cast<int>(interior_.size());
      interior_.push_back(i);
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < nv; ++i) {
    if (vertices_[i].norm() < best) {
      best = vertices_[i].norm();
      center_ = i;
    }
  }

  vertex_tris_.assign(nv, {});
  areas_.resize(nt);
  grads_.resize(nt);
  lumped_ = Eigen::VectorXd::Zero(nv);
  std::vector<Triplet> k_entries;
  std::vector<Triplet> m_entries;
  k_entries.reserve(9 * nt);
  m_entries.reserve(9 * nt);

  for (int t = 0; t < nt; ++t) {
    auto& tri = triangles_[t];
    Vec2 e1 = vertices_[tri[1]] - vertices_[tri[0]];
    Vec2 e2 = vertices_[tri[2]] - vertices_[tri[0]];
    double det = e1.x() * e2.y() - e1.y() * e2.x();
    if (det < 0) {
      std::swap(tri[1], tri[2]);
      std::swap(e1, e2);
      det = -det;
    }
    if (det <= 0) throw InputError("mesh: degenerate triangle " + std::to_string(t));
    const double area = 0.5 * det;
    areas_[t] = area;
    total_area_ += area;

    Eigen::Matrix2d jac;
    jac.col(0) = e1;
    jac.col(1) = e2;
    const Eigen::Matrix2d inv = jac.inverse();
    Eigen::Matrix<double, 3, 2> g;
    g.row(1) = inv.row(0);
    g.row(2) = inv.row(1);
    g.row(0) = -(g.row(1) + g.row(2));
    grads_[t] = g;

    for (int a = 0; a < 3; ++a) {
      vertex_tris_[tri[a]].push_back(t);
      lumped_[tri[a]] += area / 3.0;
      for (int b = 0; b < 3; ++b) {
        k_entries.emplace_back(tri[a], tri[b], area * g.row(a).dot(g.row(b)));
        m_entries.emplace_back(tri[a], tri[b], area * (a == b ? 2.0 : 1.0) / 12.0);
      }
      const double len = (vertices_[tri[(a + 1) % 3]] - vertices_[tri[a]]).norm();
      h_ = std::max(h_, len);
    }
  }
  stiffness_.resize(nv, nv);
  stiffness_.setFromTriplets(k_entries.begin(), k_entries.end());
  mass_.resize(nv, nv);
  mass_.setFromTriplets(m_entries.begin(), m_entries.end());
}

void DiskMesh::build_grid() {
  // Cells of roughly one mesh size over [-1, 1]^2.
  grid_dim_ = std::clamp(static_cast<int>(std::ceil(2.0 / std::max(h_, 1e-3))), 1, 4096);
  grid_cell_ = 2.0 / grid_dim_;
  grid_.assign(static_cast<size_t>(grid_dim_) * grid_dim_, {});
  auto cell_of = [&](double v) {
    return std::clamp(static_cast<int>(std::floor((v + 1.0) / grid_cell_)), 0, grid_dim_ - 1);
  };
  for (int t = 0; t < num_triangles(); ++t) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (int v : triangles_[t]) {
      x0 = std::min(x0, vertices_[v].x());
      x1 = std::max(x1, vertices_[v].x());
      y0 = std::min(y0, vertices_[v].y());
      y1 = std::max(y1, vertices_[v].y());
    }
    for (int i = cell_of(x0); i <= cell_of(x1); ++i)
      for (int j = cell_of(y0); j <= cell_of(y1); ++j) grid_[i * grid_dim_ + j].push_back(t);
  }
}

Vec2 DiskMesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
}

double DiskMesh::min_angle_degrees() const {
  double worst = 180.0;
  for (const auto& tri : triangles_) {
    for (int a = 0; a < 3; ++a) {
      const Vec2 u = vertices_[tri[(a + 1) % 3]] - vertices_[tri[a]];
      const Vec2 w = vertices_[tri[(a + 2) % 3]] - vertices_[tri[a]];
      const double c = u.dot(w) / (u.norm() * w.norm());
      worst = std::min(worst, std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi);
    }
  }
  return worst;
}

void DiskMesh::for_each_triangle_near(const Vec2& center, double radius,
                                      const std::function<void(int)>& fn) const {
  auto cell_of = [&](double v) {
    return std::clamp(static_cast<int>(std::floor((v + 1.0) / grid_cell_)), 0, grid_dim_ - 1);
  };
  const int i0 = cell_of(center.x() - radius), i1 = cell_of(center.x() + radius);
  const int j0 = cell_of(center.y() - radius), j1 = cell_of(center.y() + radius);
  // A triangle can be registered in several cells; report it from the
  // lowest-index cell of the query window that holds it.
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      for (int t : grid_[i * grid_dim_ + j]) {
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (int v : triangles_[t]) {
          x0 = std::min(x0, vertices_[v].x());
          x1 = std::max(x1, vertices_[v].x());
          y0 = std::min(y0, vertices_[v].y());
          y1 = std::max(y1, vertices_[v].y());
        }
        if (std::max(cell_of(x0), i0) != i || std::max(cell_of(y0), j0) != j) continue;
        const double dx = std::max({x0 - center.x(), 0.0, center.x() - x1});
        const double dy = std::max({y0 - center.y(), 0.0, center.y() - y1});
        if (dx * dx + dy * dy <= radius * radius) fn(t);
      }
    }
  }
}

std::optional<std::pair<int, Eigen::Vector3d>> DiskMesh::locate(const Vec2& p) const {
  std::optional<std::pair<int, Eigen::Vector3d>> found;
  double best = -1e300;
  for_each_triangle_near(p, 0.0, [&](int t) {
    const auto& g = grads_[t];
    const Vec2& p0 = vertices_[triangles_[t][0]];
    Eigen::Vector3d bary;
    bary[1] = g.row(1).dot(p - p0);
    bary[2] = g.row(2).dot(p - p0);
    bary[0] = 1.0 - bary[1] - bary[2];
    const double score = bary.minCoeff();
    if (score > best) {
      best = score;
      found = std::make_pair(t, bary);
    }
  });
  if (!found || best < -1e-12) return std::nullopt;
  return found;
}

MeshPtr build_disk_mesh(int refinement) {
  if (refinement < 0 || refinement > kMaxRefinement)
    throw ConfigError("build_disk_mesh: refinement " + std::to_string(refinement) +
                      " outside [0, " + std::to_string(kMaxRefinement) + "]");
  const int rings = 2 << refinement;
  std::vector<Vec2> verts;
  std::vector<bool> boundary;
  std::vector<int> ring_start(rings + 1);
  verts.emplace_back(0.0, 0.0);
  boundary.push_back(rings == 0);
  for (int k = 1; k <= rings; ++k) {
    ring_start[k] = static_cast<int>(verts.size());
    const int count = 6 * k;
    const double radius = static_cast<double>(k) / rings;
    for (int j = 0; j < count; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / count;
      verts.emplace_back(radius * std::cos(theta), radius * std::sin(theta));
      boundary.push_back(k == rings);
    }
  }

  std::vector<Triangle> tris;
  for (int j = 0; j < 6; ++j) tris.push_back({0, ring_start[1] + j, ring_start[1] + (j + 1) % 6});
  for (int k = 2; k <= rings; ++k) {
    const int n_in = 6 * (k - 1);
    const int n_out = 6 * k;
    const int s_in = ring_start[k - 1];
    const int s_out = ring_start[k];
    int a = 0, b = 0;
    while (a < n_in || b < n_out) {
      // Advance along whichever ring has the next point at the smaller angle;
      // exact integer comparison of (a+1)/n_in against (b+1)/n_out.
      const bool advance_outer =
          a == n_in || (b < n_out && static_cast<long>(b + 1) * n_in <= static_cast<long>(a + 1) * n_out);
      if (advance_outer) {
        tris.push_back({s_in + a % n_in, s_out + b, s_out + (b + 1) % n_out});
        ++b;
      } else {
        tris.push_back({s_in + a, s_out + b % n_out, s_in + (a + 1) % n_in});
        ++a;
      }
    }
  }
  return std::make_shared<const DiskMesh>(std::move(verts), std::move(tris), std::move(boundary),
                                          refinement);
}

void write_mesh(std::ostream& os, const DiskMesh& mesh) {
  os << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
  os << std::setprecision(17);
  for (int i = 0; i < mesh.num_vertices(); ++i)
    os << mesh.vertex(i).x() << ' ' << mesh.vertex(i).y() << ' ' << (mesh.is_boundary(i) ? 1 : 0)
       << '\n';
  for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

MeshPtr read_mesh(std::istream& is) {
  int nv = 0, nt = 0;
  if (!(is >> nv >> nt) || nv <= 0 || nt <= 0) throw InputError("read_mesh: bad header");
  std::vector<Vec2> verts(nv);
  std::vector<bool> boundary(nv);
  for (int i = 0; i < nv; ++i) {
    int flag = 0;
    if (!(is >> verts[i].x() >> verts[i].y() >> flag))
      throw InputError("read_mesh: truncated vertex block at vertex " + std::to_string(i));
    boundary[i] = flag != 0;
  }
  std::vector<Triangle> tris(nt);
  for (int t = 0; t < nt; ++t)
    if (!(is >> tris[t][0] >> tris[t][1] >> tris[t][2]))
      throw InputError("read_mesh: truncated triangle block at triangle " + std::to_string(t));
  return std::make_shared<const DiskMesh>(std::move(verts), std::move(tris), std::move(boundary), -1);
}

// ---------------------------------------------------------------------------
// Field

Field::Field(MeshPtr mesh, Shape shape, int n, Eigen::MatrixXd values)
    : mesh_(std::move(mesh)), shape_(shape), n_(n), values_(std::move(values)) {
  if (!mesh_) throw UsageError("Field: null mesh");
  const int expected = shape == Shape::Scalar ? 1 : (shape == Shape::Vector ? n : n * n);
  if (values_.rows() != mesh_->num_vertices() || values_.cols() != expected)
    throw UsageError("Field: value count does not match the mesh and codomain shape");
  if (!values_.allFinite()) throw InputError("Field: non-finite entries");
}

Field Field::scalar(MeshPtr mesh, const Eigen::VectorXd& values) {
  return Field(std::move(mesh), Shape::Scalar, 1, values);
}

Field Field::vector(MeshPtr mesh, Eigen::MatrixXd values) {
  const int n = static_cast<int>(values.cols());
  return Field(std::move(mesh), Shape::Vector, n, std::move(values));
}

Field Field::matrix(MeshPtr mesh, int n, Eigen::MatrixXd values) {
  return Field(std::move(mesh), Shape::Matrix, n, std::move(values));
}

Field Field::zeros(MeshPtr mesh, Shape shape, int n) {
  const int dim = shape == Shape::Scalar ? 1 : (shape == Shape::Vector ? n : n * n);
  const int nv = mesh->num_vertices();
  return Field(std::move(mesh), shape, shape == Shape::Scalar ? 1 : n,
               Eigen::MatrixXd::Zero(nv, dim));
}

Eigen::MatrixXd Field::matrix_at(int vertex) const {
  if (shape_ != Shape::Matrix) throw UsageError("Field::matrix_at on a non-matrix field");
  Eigen::MatrixXd m(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) m(i, j) = values_(vertex, i * n_ + j);
  return m;
}

void Field::set_matrix(int vertex, const Eigen::MatrixXd& m) {
  if (shape_ != Shape::Matrix || m.rows() != n_ || m.cols() != n_)
    throw UsageError("Field::set_matrix: shape mismatch");
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) values_(vertex, i * n_ + j) = m(i, j);
}

Field Field::component(int c) const {
  if (c < 0 || c >= dim()) throw UsageError("Field::component out of range");
  return Field::scalar(mesh_, values_.col(c));
}

CellVectorField CellVectorField::zeros(MeshPtr mesh, int dim) {
  const int nt = mesh->num_triangles();
  return {std::move(mesh), Eigen::MatrixXd::Zero(nt, dim), Eigen::MatrixXd::Zero(nt, dim)};
}

// ---------------------------------------------------------------------------
// Operators

CellVectorField gradient(const Field& f) {
  if (!f.mesh()) throw UsageError("gradient: field has no mesh");
  const auto& m = *f.mesh();
  CellVectorField g = CellVectorField::zeros(f.mesh(), f.dim());
  const auto& vals = f.values();
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangle(t);
    const auto& hg = m.hat_gradients(t);
    // Differences against vertex 0 keep constants exactly gradient-free.
    for (int a = 1; a < 3; ++a) {
      g.x.row(t) += hg(a, 0) * (vals.row(tri[a]) - vals.row(tri[0]));
      g.y.row(t) += hg(a, 1) * (vals.row(tri[a]) - vals.row(tri[0]));
    }
  }
  return g;
}

CellVectorField perp_gradient(const Field& f) {
  CellVectorField g = gradient(f);
  Eigen::MatrixXd gx = std::move(g.x);
  g.x = -g.y;
  g.y = std::move(gx);
  return g;
}

Eigen::VectorXd jacobian_product(const Field& a, const Field& b) {
  require_same_mesh(a.mesh(), b.mesh(), "jacobian_product");
  if (a.dim() != 1 || b.dim() != 1) throw UsageError("jacobian_product: scalar fields required");
  const CellVectorField ga = gradient(a);
  const CellVectorField gb = gradient(b);
  return (ga.y.col(0).array() * gb.x.col(0).array() - ga.x.col(0).array() * gb.y.col(0).array())
      .matrix();
}

Eigen::MatrixXd centroid_values(const Field& f) {
  const auto& m = *f.mesh();
  Eigen::MatrixXd c(m.num_triangles(), f.dim());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangle(t);
    c.row(t) = (f.values().row(tri[0]) + f.values().row(tri[1]) + f.values().row(tri[2])) / 3.0;
  }
  return c;
}

Norms norms(const Field& f) {
  const auto& m = *f.mesh();
  const auto& v = f.values();
  Norms out;
  double l2sq = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangle(t);
    const double area = m.area(t);
    // ∫_T |Σ φ_a u_a|² = |T|/12 (Σ|u_a|² + |Σu_a|²), exact for P1.
    Eigen::RowVectorXd sum = v.row(tri[0]) + v.row(tri[1]) + v.row(tri[2]);
    const double sq = v.row(tri[0]).squaredNorm() + v.row(tri[1]).squaredNorm() +
                      v.row(tri[2]).squaredNorm();
    l2sq += area / 12.0 * (sq + sum.squaredNorm());
    // Edge-midpoint rule: exact for quadratics, hence for |u| of one sign.
    for (int a = 0; a < 3; ++a)
      out.l1 += area / 3.0 * (0.5 * (v.row(tri[a]) + v.row(tri[(a + 1) % 3]))).norm();
  }
  out.l2 = std::sqrt(std::max(l2sq, 0.0));
  for (int i = 0; i < m.num_vertices(); ++i) out.linf = std::max(out.linf, v.row(i).norm());
  return out;
}

Norms norms(const CellVectorField& f) {
  const auto& m = *f.mesh;
  Norms out;
  double l2sq = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const double mag2 = f.x.row(t).squaredNorm() + f.y.row(t).squaredNorm();
    l2sq += m.area(t) * mag2;
    out.l1 += m.area(t) * std::sqrt(mag2);
    out.linf = std::max(out.linf, std::sqrt(mag2));
  }
  out.l2 = std::sqrt(l2sq);
  return out;
}

Norms cell_norms(const DiskMesh& m, const Eigen::VectorXd& f) {
  if (f.size() != m.num_triangles()) throw UsageError("cell_norms: size mismatch");
  Norms out;
  double l2sq = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    out.l1 += m.area(t) * std::abs(f[t]);
    l2sq += m.area(t) * f[t] * f[t];
    out.linf = std::max(out.linf, std::abs(f[t]));
  }
  out.l2 = std::sqrt(l2sq);
  return out;
}

std::pair<Field, Field> weak_div_curl(const CellVectorField& F) {
  const auto& m = *F.mesh;
  const int dim = F.dim();
  Eigen::MatrixXd div = Eigen::MatrixXd::Zero(m.num_vertices(), dim);
  Eigen::MatrixXd curl = Eigen::MatrixXd::Zero(m.num_vertices(), dim);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangle(t);
    const auto& hg = m.hat_gradients(t);
    const double area = m.area(t);
    for (int a = 0; a < 3; ++a) {
      // ∫ div F φ = −∫ F·∇φ,  ∫ curl F φ = −∫ F·∇⊥φ with ∇⊥φ = (−φ_y, φ_x).
      div.row(tri[a]) -= area * (hg(a, 0) * F.x.row(t) + hg(a, 1) * F.y.row(t));
      curl.row(tri[a]) -= area * (-hg(a, 1) * F.x.row(t) + hg(a, 0) * F.y.row(t));
    }
  }
  const auto& lumped = m.lumped_mass();
  for (int i = 0; i < m.num_vertices(); ++i) {
    div.row(i) /= lumped[i];
    curl.row(i) /= lumped[i];
  }
  const Shape shape = dim == 1 ? Shape::Scalar : Shape::Vector;
  return {Field(F.mesh, shape, dim, std::move(div)), Field(F.mesh, shape, dim, std::move(curl))};
}

Field interpolate(const MeshPtr& mesh, const PlanarMap& g) {
  const int nv = mesh->num_vertices();
  Eigen::MatrixXd vals;
  for (int i = 0; i < nv; ++i) {
    const Eigen::VectorXd s = g(mesh->vertex(i));
    if (i == 0) vals.resize(nv, s.size());
    if (s.size() != vals.cols()) throw InputError("interpolate: inconsistent sample dimension");
    if (!s.allFinite())
      throw InputError("interpolate: non-finite sample at vertex " + std::to_string(i));
    vals.row(i) = s.transpose();
  }
  if (vals.cols() == 1) return Field::scalar(mesh, vals.col(0));
  return Field::vector(mesh, std::move(vals));
}

Field interpolate_scalar(const MeshPtr& mesh, const std::function<double(const Vec2&)>& g) {
  return interpolate(mesh, [&](const Vec2& x) { return Eigen::VectorXd::Constant(1, g(x)); });
}

void write_field(std::ostream& os, const Field& f, double t) {
  os << std::setprecision(17) << t << ' ' << f.dim() << '\n';
  for (int i = 0; i < f.values().rows(); ++i) {
    for (int c = 0; c < f.dim(); ++c) os << (c ? " " : "") << f.values()(i, c);
    os << '\n';
  }
}

std::pair<double, Field> read_field(std::istream& is, const MeshPtr& mesh) {
  double t = 0.0;
  int dim = 0;
  if (!(is >> t >> dim) || dim <= 0) throw InputError("read_field: bad header");
  Eigen::MatrixXd vals(mesh->num_vertices(), dim);
  for (int i = 0; i < mesh->num_vertices(); ++i)
    for (int c = 0; c < dim; ++c)
      if (!(is >> vals(i, c)))
        throw InputError("read_field: truncated at vertex " + std::to_string(i) +
                         " (field does not match the mesh?)");
  std::string extra;
  if (is >> extra) throw InputError("read_field: more values than mesh vertices");
  if (dim == 1) return {t, Field::scalar(mesh, vals.col(0))};
  return {t, Field::vector(mesh, std::move(vals))};
}

Eigen::VectorXd integrate(const Field& f) {
  return (f.mesh()->lumped_mass().transpose() * f.values()).transpose();
}

}  // namespace heatflow::mesh
