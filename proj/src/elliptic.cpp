#include "heatflow/elliptic.hpp"

#include <cmath>
#include <mutex>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "heatflow/error.hpp"

namespace heatflow::elliptic {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using mesh::SparseMatrix;

struct SpdSolver::Impl {
  bool direct = true;
  int n = 0;
  double tol = 1e-12;
  SparseMatrix A;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;
};

SpdSolver::SpdSolver(const SparseMatrix& A, Method method, double tol)
    : impl_(std::make_unique<Impl>()) {
  if (A.rows() != A.cols()) throw UsageError("SpdSolver needs a square matrix");
  impl_->n = static_cast<int>(A.rows());
  impl_->tol = tol;
  impl_->direct = method == Method::Direct ||
                  (method == Method::Auto && impl_->n < kDirectThreshold);
  if (impl_->n == 0) return;
  if (!impl_->direct) {
    impl_->A = A;
    impl_->cg.setTolerance(tol);
    impl_->cg.setMaxIterations(std::max(1000, 10 * impl_->n));
    impl_->cg.compute(impl_->A);
    if (impl_->cg.info() != Eigen::Success) impl_->direct = true;
  }
  if (impl_->direct) {
    impl_->ldlt.compute(A);
    if (impl_->ldlt.info() != Eigen::Success)
      throw SolverError("factorization failed (matrix not positive definite?)");
  }
}

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

bool SpdSolver::direct() const { return impl_->direct; }
int SpdSolver::size() const { return impl_->n; }

VectorXd SpdSolver::solve(const VectorXd& b) const {
  if (b.size() != impl_->n) throw UsageError("right-hand side has wrong size");
  if (impl_->n == 0) return VectorXd();
  if (!b.allFinite()) throw InputError("non-finite right-hand side");
  if (b.squaredNorm() == 0.0) return VectorXd::Zero(impl_->n);
  if (impl_->direct) {
    VectorXd x = impl_->ldlt.solve(b);
    if (!x.allFinite()) throw SolverError("direct solve produced non-finite values");
    return x;
  }
  VectorXd x = impl_->cg.solve(b);
  if (impl_->cg.info() != Eigen::Success || !x.allFinite())
    throw SolverError("conjugate gradient did not converge");
  return x;
}

MatrixXd SpdSolver::solve(const MatrixXd& B) const {
  MatrixXd X(B.rows(), B.cols());
  for (int c = 0; c < B.cols(); ++c) X.col(c) = solve(VectorXd(B.col(c)));
  return X;
}

namespace {

SparseMatrix restrict_matrix(const SparseMatrix& K, const std::vector<int>& index, int size) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(K.nonZeros());
  for (int k = 0; k < K.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(K, k); it; ++it) {
      const int r = index[it.row()], c = index[it.col()];
      if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
    }
  SparseMatrix out(size, size);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

std::vector<int> interior_map(const mesh::DiskMesh& m) {
  std::vector<int> idx(m.num_vertices());
  for (int i = 0; i < m.num_vertices(); ++i) idx[i] = m.interior_index(i);
  return idx;
}

std::vector<int> pinned_map(const mesh::DiskMesh& m, int pin) {
  std::vector<int> idx(m.num_vertices());
  int next = 0;
  for (int i = 0; i < m.num_vertices(); ++i) idx[i] = i == pin ? -1 : next++;
  return idx;
}

}  // namespace

EllipticSolver::EllipticSolver(mesh::MeshPtr mesh, Method method)
    : mesh_(std::move(mesh)),
      method_(method),
      interior_(restrict_matrix(mesh_->stiffness(), interior_map(*mesh_),
                                static_cast<int>(mesh_->interior_vertices().size())),
                method),
      pinned_(restrict_matrix(mesh_->stiffness(), pinned_map(*mesh_, mesh_->center_vertex()),
                              mesh_->num_vertices() - 1),
              method),
      pin_(mesh_->center_vertex()) {}

VectorXd EllipticSolver::dirichlet(const VectorXd& load, const VectorXd& g) const {
  const auto& m = *mesh_;
  const int nv = m.num_vertices();
  if (load.size() != nv) throw UsageError("load vector has wrong size");
  VectorXd x = VectorXd::Zero(nv);
  VectorXd shifted = load;
  if (g.size() > 0) {
    if (g.size() != nv) throw UsageError("boundary vector has wrong size");
    for (int i : m.boundary_vertices()) x(i) = g(i);
    shifted -= m.stiffness() * x;
  }
  const auto& interior = m.interior_vertices();
  VectorXd b(interior.size());
  for (std::size_t k = 0; k < interior.size(); ++k) b(k) = shifted(interior[k]);
  VectorXd xi = interior_.solve(b);
  for (std::size_t k = 0; k < interior.size(); ++k) x(interior[k]) = xi(k);
  return x;
}

MatrixXd EllipticSolver::dirichlet(const MatrixXd& load) const {
  MatrixXd X(load.rows(), load.cols());
  for (int c = 0; c < load.cols(); ++c) X.col(c) = dirichlet(VectorXd(load.col(c)));
  return X;
}

VectorXd EllipticSolver::neumann(const VectorXd& load) const {
  const auto& m = *mesh_;
  const int nv = m.num_vertices();
  if (load.size() != nv) throw UsageError("load vector has wrong size");
  const VectorXd& w = m.lumped_mass();
  const double wsum = w.sum();
  VectorXd b = load - w * (load.sum() / wsum);
  VectorXd reduced(nv - 1);
  for (int i = 0, k = 0; i < nv; ++i)
    if (i != pin_) reduced(k++) = b(i);
  VectorXd xr = pinned_.solve(reduced);
  VectorXd x(nv);
  for (int i = 0, k = 0; i < nv; ++i) x(i) = i == pin_ ? 0.0 : xr(k++);
  x.array() -= w.dot(x) / wsum;
  return x;
}

MatrixXd EllipticSolver::neumann(const MatrixXd& load) const {
  MatrixXd X(load.rows(), load.cols());
  for (int c = 0; c < load.cols(); ++c) X.col(c) = neumann(VectorXd(load.col(c)));
  return X;
}

std::shared_ptr<const EllipticSolver> solver_for(const mesh::MeshPtr& mesh, Method method) {
  static std::mutex mutex;
  static std::vector<std::shared_ptr<const EllipticSolver>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  for (std::size_t k = 0; k < cache.size(); ++k)
    if (cache[k]->mesh() == mesh && cache[k]->method() == method) {
      auto hit = cache[k];
      cache.erase(cache.begin() + static_cast<long>(k));
      cache.push_back(hit);
      return hit;
    }
  auto made = std::make_shared<const EllipticSolver>(mesh, method);
  cache.push_back(made);
  if (cache.size() > 8) cache.erase(cache.begin());
  return made;
}

MatrixXd cell_load(const mesh::DiskMesh& m, const MatrixXd& f) {
  if (f.rows() != m.num_triangles()) throw UsageError("density has wrong size");
  MatrixXd load = MatrixXd::Zero(m.num_vertices(), f.cols());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const double w = m.area(t) / 3.0;
    for (int v : m.triangle(t)) load.row(v) += w * f.row(t);
  }
  return load;
}

MatrixXd div_load(const mesh::CellVectorField& F) {
  const auto& m = *F.mesh;
  MatrixXd load = MatrixXd::Zero(m.num_vertices(), F.dim());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& G = m.hat_gradients(t);
    const auto& tri = m.triangle(t);
    for (int a = 0; a < 3; ++a)
      load.row(tri[a]) += m.area(t) * (G(a, 0) * F.x.row(t) + G(a, 1) * F.y.row(t));
  }
  return load;
}

MatrixXd curl_load(const mesh::CellVectorField& F) {
  const auto& m = *F.mesh;
  MatrixXd load = MatrixXd::Zero(m.num_vertices(), F.dim());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& G = m.hat_gradients(t);
    const auto& tri = m.triangle(t);
    for (int a = 0; a < 3; ++a)
      load.row(tri[a]) += m.area(t) * (-G(a, 1) * F.x.row(t) + G(a, 0) * F.y.row(t));
  }
  return load;
}

namespace {

PoissonSolution finish_poisson(const mesh::MeshPtr& mesh, const VectorXd& load) {
  auto solver = solver_for(mesh);
  VectorXd psi = solver->dirichlet(VectorXd(-load));
  PoissonSolution out;
  out.psi = mesh::Field::scalar(mesh, psi);
  out.linf = psi.cwiseAbs().maxCoeff();
  out.grad_l2 = mesh::norms(mesh::gradient(out.psi)).l2;
  VectorXd r = mesh->stiffness() * psi + load;
  double rn = 0.0, bn = 0.0;
  for (int i : mesh->interior_vertices()) {
    rn += r(i) * r(i);
    bn += load(i) * load(i);
  }
  out.residual = bn > 0.0 ? std::sqrt(rn / bn) : std::sqrt(rn);
  return out;
}

}  // namespace

PoissonSolution poisson_dirichlet(const mesh::Field& f) {
  if (f.shape() != mesh::Shape::Scalar) throw UsageError("poisson_dirichlet needs a scalar field");
  if (!f.values().allFinite()) throw InputError("non-finite right-hand side");
  VectorXd load = f.mesh()->mass() * f.values().col(0);
  PoissonSolution out = finish_poisson(f.mesh(), load);
  auto n = mesh::norms(f);
  out.rhs_l1 = n.l1;
  out.rhs_l2 = n.l2;
  return out;
}

PoissonSolution poisson_dirichlet(const mesh::MeshPtr& mesh, const VectorXd& f) {
  if (f.size() != mesh->num_triangles()) throw UsageError("density has wrong size");
  if (!f.allFinite()) throw InputError("non-finite right-hand side");
  VectorXd load = cell_load(*mesh, f).col(0);
  PoissonSolution out = finish_poisson(mesh, load);
  auto n = mesh::cell_norms(*mesh, f);
  out.rhs_l1 = n.l1;
  out.rhs_l2 = n.l2;
  return out;
}

PoissonSolution psi_energy_density(const mesh::Field& u) {
  auto g = mesh::gradient(u);
  VectorXd density = g.x.rowwise().squaredNorm() + g.y.rowwise().squaredNorm();
  return poisson_dirichlet(u.mesh(), density);
}

WenteResult wente_solve(const mesh::Field& a, const mesh::Field& b, Boundary bc) {
  if (a.shape() != mesh::Shape::Scalar || b.shape() != mesh::Shape::Scalar)
    throw UsageError("wente_solve needs scalar fields");
  if (a.mesh() != b.mesh()) throw UsageError("fields live on different meshes");
  const auto& mesh = a.mesh();
  VectorXd J = mesh::jacobian_product(a, b);
  VectorXd load = cell_load(*mesh, J).col(0);
  auto solver = solver_for(mesh);
  VectorXd w = bc == Boundary::DirichletZero ? solver->dirichlet(VectorXd(-load))
                                             : solver->neumann(VectorXd(-load));
  WenteResult out;
  out.w = mesh::Field::scalar(mesh, w);
  out.grad_a = mesh::norms(mesh::gradient(a)).l2;
  out.grad_b = mesh::norms(mesh::gradient(b)).l2;
  const double denom = out.grad_a * out.grad_b;
  if (denom < 1e-300) {
    out.degenerate = true;
    out.ratio = 0.0;
  } else {
    out.ratio = w.cwiseAbs().maxCoeff() / denom;
  }
  return out;
}

HodgePair hodge_decompose(const mesh::CellVectorField& F) {
  const auto& mesh = F.mesh;
  auto solver = solver_for(mesh);
  MatrixXd zeta = solver->dirichlet(div_load(F));
  MatrixXd eta = solver->neumann(curl_load(F));
  const auto shape = F.dim() == 1 ? mesh::Shape::Scalar : mesh::Shape::Vector;
  HodgePair out;
  out.zeta = mesh::Field(mesh, shape, F.dim(), zeta);
  out.eta = mesh::Field(mesh, shape, F.dim(), eta);
  auto gz = mesh::gradient(out.zeta);
  auto pe = mesh::perp_gradient(out.eta);
  out.residual.mesh = mesh;
  out.residual.x = F.x - gz.x - pe.x;
  out.residual.y = F.y - gz.y - pe.y;
  out.residual_l2 = mesh::norms(out.residual).l2;
  return out;
}

}  // namespace heatflow::elliptic
