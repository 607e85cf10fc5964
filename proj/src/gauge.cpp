#include "heatflow/gauge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "heatflow/error.hpp"

namespace heatflow::gauge {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Mats = std::vector<Mat>;

namespace {

Mat skew(const Mat& X) { return 0.5 * (X - X.transpose()); }

Mats to_mats(const Field& f) {
  if (f.shape() != mesh::Shape::Matrix) throw UsageError("expected a matrix field");
  Mats out(f.mesh()->num_vertices());
  for (int v = 0; v < f.mesh()->num_vertices(); ++v) out[v] = f.matrix_at(v);
  return out;
}

Field from_mats(const mesh::MeshPtr& m, int n, const Mats& ms) {
  Field f = Field::zeros(m, mesh::Shape::Matrix, n);
  for (int v = 0; v < m->num_vertices(); ++v) f.set_matrix(v, ms[v]);
  return f;
}

Mat row_to_mat(const Eigen::Ref<const Eigen::RowVectorXd>& row, int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = row(i * n + j);
  return m;
}

void put_mat(MatrixXd& dst, int r, const Mat& m) {
  const int n = static_cast<int>(m.rows());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) dst(r, i * n + j) = m(i, j);
}

struct TriangleGeom {
  Mat bar;
  Mat gx;
  Mat gy;
};

TriangleGeom triangle_geom(const mesh::DiskMesh& mesh, const Mats& R, int t) {
  const auto& tri = mesh.triangle(t);
  const auto& G = mesh.hat_gradients(t);
  TriangleGeom g;
  g.bar = (R[tri[0]] + R[tri[1]] + R[tri[2]]) / 3.0;
  g.gx = G(1, 0) * (R[tri[1]] - R[tri[0]]) + G(2, 0) * (R[tri[2]] - R[tri[0]]);
  g.gy = G(1, 1) * (R[tri[1]] - R[tri[0]]) + G(2, 1) * (R[tri[2]] - R[tri[0]]);
  return g;
}

void check_form(const ConnectionForm& omega, const Field& R) {
  if (omega.mesh != R.mesh() || omega.n != R.n())
    throw UsageError("connection form and frame do not match");
}

double energy_of(const mesh::DiskMesh& mesh, const Mats& R, const ConnectionForm& omega) {
  double e = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    auto g = triangle_geom(mesh, R, t);
    Mat mx = skew(g.bar.transpose() * (g.gx + omega.x[t] * g.bar));
    Mat my = skew(g.bar.transpose() * (g.gy + omega.y[t] * g.bar));
    e += mesh.area(t) * (mx.squaredNorm() + my.squaredNorm());
  }
  return e;
}

// Euclidean gradient of the energy with respect to every vertex matrix.
Mats euclidean_gradient(const mesh::DiskMesh& mesh, const Mats& R, const ConnectionForm& omega) {
  const int n = omega.n;
  Mats grad(mesh.num_vertices(), Mat::Zero(n, n));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    auto g = triangle_geom(mesh, R, t);
    const double w = 2.0 * mesh.area(t);
    Mat dbar = Mat::Zero(n, n);
    Mat dg[2];
    const Mat* gd[2] = {&g.gx, &g.gy};
    const Mat* od[2] = {&omega.x[t], &omega.y[t]};
    for (int d = 0; d < 2; ++d) {
      Mat M = skew(g.bar.transpose() * (*gd[d] + *od[d] * g.bar));
      dbar += *gd[d] * M.transpose() + *od[d] * g.bar * M.transpose() +
              od[d]->transpose() * g.bar * M;
      dg[d] = g.bar * M;
    }
    const auto& tri = mesh.triangle(t);
    const auto& G = mesh.hat_gradients(t);
    for (int a = 0; a < 3; ++a)
      grad[tri[a]] += w * (dbar / 3.0 + G(a, 0) * dg[0] + G(a, 1) * dg[1]);
  }
  return grad;
}

Mat polar(const Mat& X) {
  Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

std::vector<std::pair<int, int>> upper_pairs(int n) {
  std::vector<std::pair<int, int>> p;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) p.emplace_back(i, j);
  return p;
}

double dual_norm(const mesh::DiskMesh& mesh, const elliptic::EllipticSolver& solver,
                 MatrixXd load) {
  for (int b : mesh.boundary_vertices()) load.row(b).setZero();
  MatrixXd x = solver.dirichlet(load);
  return std::sqrt(std::max(0.0, (load.array() * x.array()).sum()));
}

mesh::CellVectorField cell_field(const mesh::MeshPtr& m, int dim) {
  return mesh::CellVectorField::zeros(m, dim);
}

// M^i_{jl}(p) = −(A^i_{jl} − A^j_{il}), the coefficient of ∇u^l in Ω^i_j.
manifold::SffTensor omega_coefficients(const TargetManifold& m, const VectorXd& p) {
  auto A = m.sff_tensor(p);
  const int n = m.ambient_dim();
  manifold::SffTensor M(n, Mat::Zero(n, n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) M[i](j, l) = -(A[i](j, l) - A[j](i, l));
  return M;
}

}  // namespace

ConnectionForm connection(const TargetManifold& m, const Field& u) {
  ConnectionForm w = manifold::assemble_omega(m, u);
  for (auto& x : w.x) x = -x;
  for (auto& y : w.y) y = -y;
  return w;
}

ConnectionForm gauge_connection(const Field& R, const ConnectionForm& omega) {
  check_form(omega, R);
  const auto& mesh = *R.mesh();
  Mats Rm = to_mats(R);
  ConnectionForm out = ConnectionForm::zeros(R.mesh(), R.n());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    auto g = triangle_geom(mesh, Rm, t);
    out.x[t] = skew(g.bar.transpose() * (g.gx + omega.x[t] * g.bar));
    out.y[t] = skew(g.bar.transpose() * (g.gy + omega.y[t] * g.bar));
  }
  return out;
}

double gauge_energy(const Field& R, const ConnectionForm& omega) {
  check_form(omega, R);
  return energy_of(*R.mesh(), to_mats(R), omega);
}

GaugeFrame minimize_gauge(const ConnectionForm& omega, const GaugeOptions& opts) {
  const auto& mptr = omega.mesh;
  const auto& mesh = *mptr;
  const int n = omega.n;
  const int nv = mesh.num_vertices();
  Mats R(nv, Mat::Identity(n, n));
  GaugeFrame out;
  const double e0 = energy_of(mesh, R, omega);
  out.initial_energy = e0;
  out.energy = e0;
  if (omega.l2_norm() == 0.0) {
    out.P = from_mats(mptr, n, R);
    out.converged = true;
    return out;
  }

  const auto pairs = upper_pairs(n);
  mesh::SparseMatrix H = mesh.stiffness() + mesh.mass();
  elliptic::SpdSolver pre(H, elliptic::Method::Direct);

  double energy = e0;
  double step = 1.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Mats eg = euclidean_gradient(mesh, R, omega);
    MatrixXd g(nv, pairs.size());
    for (int v = 0; v < nv; ++v) {
      Mat s = skew(R[v].transpose() * eg[v]);
      for (std::size_t k = 0; k < pairs.size(); ++k) g(v, k) = s(pairs[k].first, pairs[k].second);
    }
    MatrixXd d = pre.solve(g);
    // Frobenius pairing of skew matrices counts each upper entry twice.
    const double slope = 2.0 * (g.array() * d.array()).sum();
    if (!(slope > 0.0)) {
      out.converged = true;
      break;
    }
    auto retract = [&](double s) {
      Mats out(nv);
      for (int v = 0; v < nv; ++v) {
        Mat D = Mat::Zero(n, n);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
          D(pairs[k].first, pairs[k].second) = d(v, k);
          D(pairs[k].second, pairs[k].first) = -d(v, k);
        }
        out[v] = polar(R[v] * (Mat::Identity(n, n) - s * D));
      }
      return out;
    };
    Mats trial;
    double e_trial = energy;
    bool accepted = false;
    step = std::min(1.0, 2.0 * step);
    while (step > 1e-14) {
      trial = retract(step);
      e_trial = energy_of(mesh, trial, omega);
      if (e_trial <= energy - opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    // An Armijo step can still overshoot badly; keep halving while it helps.
    while (accepted && step > 1e-14) {
      Mats half = retract(0.5 * step);
      const double e_half = energy_of(mesh, half, omega);
      if (!(e_half < e_trial)) break;
      trial.swap(half);
      e_trial = e_half;
      step *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) {
      out.converged = true;
      break;
    }
    if (e_trial > energy) out.monotone = false;
    const double decrease = energy - e_trial;
    R.swap(trial);
    energy = e_trial;
    if (decrease < opts.rel_tol * std::max(energy + decrease, 1e-300)) {
      out.converged = true;
      break;
    }
  }

  // The energy is invariant under R ↦ RQ for constant Q.
  const Mat Qt = R[mesh.center_vertex()].transpose();
  double orth = 0.0;
  for (auto& r : R) {
    r = r * Qt;
    orth = std::max(orth, (r.transpose() * r - Mat::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  out.orthogonality_error = orth;
  out.energy = energy_of(mesh, R, omega);
  out.P = from_mats(mptr, n, R);
  return out;
}

GaugeFrame recover_xi(GaugeFrame frame, const ConnectionForm& omega) {
  const auto& mptr = omega.mesh;
  const auto& mesh = *mptr;
  const int n = omega.n;
  ConnectionForm W = gauge_connection(frame.P, omega);
  const auto pairs = upper_pairs(n);
  auto F = cell_field(mptr, static_cast<int>(pairs.size()));
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      F.x(t, k) = W.x[t](pairs[k].first, pairs[k].second);
      F.y(t, k) = W.y[t](pairs[k].first, pairs[k].second);
    }
  MatrixXd upper = elliptic::solver_for(mptr, elliptic::Method::Direct)->dirichlet(elliptic::curl_load(F));
  MatrixXd xi = MatrixXd::Zero(mesh.num_vertices(), n * n);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    xi.col(i * n + j) = upper.col(k);
    xi.col(j * n + i) = -upper.col(k);
  }
  frame.xi = Field::matrix(mptr, n, xi);
  auto px = mesh::perp_gradient(frame.xi);
  double r2 = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    r2 += mesh.area(t) * ((row_to_mat(px.x.row(t), n) - W.x[t]).squaredNorm() +
                          (row_to_mat(px.y.row(t), n) - W.y[t]).squaredNorm());
  frame.r_gauge = std::sqrt(r2);
  return frame;
}

double conservation_law_residual(const ConservationFrame& frame, const ConnectionForm& omega) {
  const auto& mesh = *omega.mesh;
  const int n = omega.n;
  Mats A = to_mats(frame.A);
  auto pb = mesh::perp_gradient(frame.B);
  double r2 = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    auto g = triangle_geom(mesh, A, t);
    r2 += mesh.area(t) *
          ((g.gx - g.bar * omega.x[t] - row_to_mat(pb.x.row(t), n)).squaredNorm() +
           (g.gy - g.bar * omega.y[t] - row_to_mat(pb.y.row(t), n)).squaredNorm());
  }
  return std::sqrt(r2);
}

ConservationFrame construct_AB(const GaugeFrame& gauge, const ConnectionForm& omega,
                               const ABOptions& opts) {
  check_form(omega, gauge.P);
  const auto& mptr = omega.mesh;
  const auto& mesh = *mptr;
  const int n = omega.n;
  const int nv = mesh.num_vertices();
  auto solver = elliptic::solver_for(mptr, elliptic::Method::Direct);

  Mats P = to_mats(gauge.P);
  Mats Pt(nv);
  for (int v = 0; v < nv; ++v) Pt[v] = P[v].transpose();
  Field PtField = from_mats(mptr, n, Pt);
  const VectorXd pt_integral = mesh::integrate(PtField);

  Mats A = Pt;
  MatrixXd Bv = MatrixXd::Zero(nv, n * n);
  ConservationFrame out;
  int growing = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    auto X = cell_field(mptr, n * n);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const auto& tri = mesh.triangle(t);
      Mat bar = (A[tri[0]] + A[tri[1]] + A[tri[2]]) / 3.0;
      put_mat(X.x, t, bar * omega.x[t]);
      put_mat(X.y, t, bar * omega.y[t]);
    }
    MatrixXd Bnew = solver->dirichlet(MatrixXd(-elliptic::curl_load(X)));
    MatrixXd load = elliptic::div_load(X);
    MatrixXd Anew(nv, n * n);
    if (opts.boundary == ABoundary::Natural) {
      Anew = solver->neumann(load);
      Field tmp = Field::matrix(mptr, n, Anew);
      const VectorXd shift = (pt_integral - mesh::integrate(tmp)) / mesh.lumped_mass().sum();
      Anew.rowwise() += shift.transpose();
    } else {
      for (int c = 0; c < n * n; ++c)
        Anew.col(c) = solver->dirichlet(VectorXd(load.col(c)), VectorXd(PtField.values().col(c)));
    }
    MatrixXd Aold(nv, n * n);
    for (int v = 0; v < nv; ++v) put_mat(Aold, v, A[v]);
    const double change = mesh::norms(Field::matrix(mptr, n, Anew - Aold)).l2 +
                          mesh::norms(Field::matrix(mptr, n, Bnew - Bv)).l2;
    out.changes.push_back(change);
    for (int v = 0; v < nv; ++v) A[v] = row_to_mat(Anew.row(v), n);
    Bv = Bnew;
    out.iterations = it + 1;
    if (change < opts.tol) {
      out.converged = true;
      break;
    }
    const std::size_t k = out.changes.size();
    growing = (k >= 2 && out.changes[k - 1] > out.changes[k - 2]) ? growing + 1 : 0;
    if (growing >= 3)
      throw DivergenceError("A/B fixed-point iteration is diverging; use a smaller-energy input");
  }
  out.A = from_mats(mptr, n, A);
  out.B = Field::matrix(mptr, n, Bv);
  Mats Ahat(nv);
  double smin = std::numeric_limits<double>::infinity();
  for (int v = 0; v < nv; ++v) {
    Ahat[v] = A[v] * P[v] - Mat::Identity(n, n);
    smin = std::min(smin, Eigen::JacobiSVD<Mat>(A[v]).singularValues().minCoeff());
  }
  out.Ahat = from_mats(mptr, n, Ahat);
  out.min_singular = smin;
  out.r_cons = conservation_law_residual(out, omega);
  return out;
}

double conservation_residual(const ConservationFrame& frame, const Field& u, const Field& ut) {
  const auto& mptr = u.mesh();
  const auto& mesh = *mptr;
  const int n = u.n();
  if (frame.A.mesh() != mptr || frame.A.n() != n || ut.mesh() != mptr || ut.dim() != u.dim())
    throw UsageError("fields do not share a mesh and dimension");
  Mats A = to_mats(frame.A);
  Mats B = to_mats(frame.B);
  auto gu = mesh::gradient(u);
  auto pu = mesh::perp_gradient(u);
  auto F = cell_field(mptr, n);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    Mat Ab = (A[tri[0]] + A[tri[1]] + A[tri[2]]) / 3.0;
    Mat Bb = (B[tri[0]] + B[tri[1]] + B[tri[2]]) / 3.0;
    F.x.row(t) = (Ab * gu.x.row(t).transpose() + Bb * pu.x.row(t).transpose()).transpose();
    F.y.row(t) = (Ab * gu.y.row(t).transpose() + Bb * pu.y.row(t).transpose()).transpose();
  }
  MatrixXd r = -elliptic::div_load(F);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    r.row(v) -= mesh.lumped_mass()(v) * (A[v] * ut.at(v)).transpose();
  return dual_norm(mesh, *elliptic::solver_for(mptr, elliptic::Method::Direct), r);
}

mesh::CellVectorField conserved_flux(const ConservationFrame& frame, const Field& u) {
  const auto& m = *u.mesh();
  const int n = u.n();
  if (frame.A.mesh() != u.mesh()) throw UsageError("conserved_flux: mesh mismatch");
  const auto gu = mesh::gradient(u), pu = mesh::perp_gradient(u);
  auto F = mesh::CellVectorField::zeros(u.mesh(), n);
  for (int t = 0; t < m.num_triangles(); ++t) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n), B = A;
    for (int v : m.triangle(t)) {
      A += frame.A.matrix_at(v) / 3.0;
      B += frame.B.matrix_at(v) / 3.0;
    }
    F.x.row(t) = (A * gu.x.row(t).transpose() + B * pu.x.row(t).transpose()).transpose();
    F.y.row(t) = (A * gu.y.row(t).transpose() + B * pu.y.row(t).transpose()).transpose();
  }
  return F;
}

BSupEstimate b_sup_estimate(const ConservationFrame& frame, const TargetManifold& m,
                            const Field& u) {
  const auto& mptr = u.mesh();
  const auto& mesh = *mptr;
  const int n = u.n();
  const int nv = mesh.num_vertices();
  Mats A = to_mats(frame.A);
  std::vector<manifold::SffTensor> M(nv);
  for (int v = 0; v < nv; ++v) M[v] = omega_coefficients(m, u.at(v));

  MatrixXd density = MatrixXd::Zero(mesh.num_triangles(), n * n);
  std::vector<Field> ul;
  for (int l = 0; l < n; ++l) ul.push_back(u.component(l));
  VectorXd f(nv);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        for (int v = 0; v < nv; ++v) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += A[v](k, i) * M[v][i](j, l);
          f(v) = s;
        }
        density.col(k * n + j) += mesh::jacobian_product(Field::scalar(mptr, f), ul[l]);
      }
  MatrixXd bw = elliptic::solver_for(mptr, elliptic::Method::Direct)->dirichlet(MatrixXd(-elliptic::cell_load(mesh, density)));

  BSupEstimate out;
  out.b_wente = Field::matrix(mptr, n, bw);
  out.b_sup = mesh::norms(frame.B).linf;
  out.wente_sup = mesh::norms(out.b_wente).linf;
  out.energy = 0.0;
  auto g = mesh::gradient(u);
  for (int t = 0; t < mesh.num_triangles(); ++t)
    out.energy += mesh.area(t) * (g.x.row(t).squaredNorm() + g.y.row(t).squaredNorm());
  out.ratio = out.energy > 0.0 ? out.b_sup / out.energy : 0.0;
  out.difference_l2 = mesh::norms(Field::matrix(mptr, n, bw - frame.B.values())).l2;
  return out;
}

PStructure p_structure(const ConservationFrame& frame, const GaugeFrame& gauge,
                       const TargetManifold& m, const Field& u,
                       const elliptic::HodgePair& hodge) {
  const auto& mptr = u.mesh();
  const auto& mesh = *mptr;
  const int n = u.n();
  const int nv = mesh.num_vertices();
  if (gauge.xi.mesh() != mptr) throw UsageError("gauge frame has no recovered xi");
  Mats A = to_mats(frame.A), B = to_mats(frame.B), P = to_mats(gauge.P);

  PStructure out;
  std::vector<Mats> Q(n, Mats(nv)), R(n, Mats(nv));
  for (int v = 0; v < nv; ++v) {
    Eigen::JacobiSVD<Mat> svd(A[v], Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues().minCoeff() < 1e-10) throw UsageError("A is singular at a vertex");
    Mat Ainv = svd.solve(Mat::Identity(n, n));
    Mat AinvB = Ainv * B[v];
    auto M = omega_coefficients(m, u.at(v));
    // T_l(i, j) = Σ_z M^i_{zl} P^z_j
    Mats T(n, Mat::Zero(n, n));
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i) T[l].row(i) = M[i].col(l).transpose() * P[v];
    for (int k = 0; k < n; ++k) {
      Q[k][v] = Mat::Zero(n, n);
      R[k][v] = Mat::Zero(n, n);
      for (int l = 0; l < n; ++l) {
        Q[k][v] += T[l] * Ainv(l, k);
        R[k][v] += T[l] * AinvB(l, k);
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    out.Q.push_back(from_mats(mptr, n, Q[k]));
    out.R.push_back(from_mats(mptr, n, R[k]));
    out.q_norm += mesh::norms(mesh::gradient(out.Q.back())).l2;
    out.r_norm += mesh::norms(mesh::gradient(out.R.back())).l2;
  }
  out.eta = hodge.eta;
  out.zeta = hodge.zeta;

  auto gP = mesh::gradient(gauge.P);
  auto pXi = mesh::perp_gradient(gauge.xi);
  auto pEta = mesh::perp_gradient(hodge.eta);
  auto gZeta = mesh::gradient(hodge.zeta);
  auto pU = mesh::perp_gradient(u);
  std::vector<mesh::CellVectorField> gQ, gR;
  for (int k = 0; k < n; ++k) {
    gQ.push_back(mesh::gradient(out.Q[k]));
    gR.push_back(mesh::gradient(out.R[k]));
  }
  MatrixXd density = MatrixXd::Zero(mesh.num_triangles(), n * n);
  auto G = cell_field(mptr, n * n);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    Mat d = row_to_mat(gP.x.row(t), n) * row_to_mat(pXi.x.row(t), n) +
            row_to_mat(gP.y.row(t), n) * row_to_mat(pXi.y.row(t), n);
    Mat gx = Mat::Zero(n, n), gy = Mat::Zero(n, n);
    const auto& tri = mesh.triangle(t);
    for (int k = 0; k < n; ++k) {
      d -= row_to_mat(gQ[k].x.row(t), n) * pEta.x(t, k) +
           row_to_mat(gQ[k].y.row(t), n) * pEta.y(t, k);
      d += row_to_mat(gR[k].x.row(t), n) * pU.x(t, k) + row_to_mat(gR[k].y.row(t), n) * pU.y(t, k);
      Mat qbar = (Q[k][tri[0]] + Q[k][tri[1]] + Q[k][tri[2]]) / 3.0;
      gx += qbar * gZeta.x(t, k);
      gy += qbar * gZeta.y(t, k);
    }
    put_mat(density, t, d);
    put_mat(G.x, t, gx);
    put_mat(G.y, t, gy);
  }
  out.rhs_load = elliptic::cell_load(mesh, density) + elliptic::div_load(G);
  MatrixXd lhs = -(mesh.stiffness() * gauge.P.values());
  out.residual = dual_norm(mesh, *elliptic::solver_for(mptr, elliptic::Method::Direct), lhs - out.rhs_load);
  return out;
}

std::vector<Probe> random_probes(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Probe> out;
  for (int k = 0; k < count; ++k) {
    const double rho = 0.6 * std::sqrt(unit(rng)), th = 2 * std::numbers::pi * unit(rng);
    Probe p;
    p.x = Vec2(rho * std::cos(th), rho * std::sin(th));
    p.r = (0.2 + 0.8 * unit(rng)) * 0.5 * (1.0 - rho);
    const double s = p.r * std::sqrt(unit(rng)), ph = 2 * std::numbers::pi * unit(rng);
    p.y = p.x + Vec2(s * std::cos(ph), s * std::sin(ph));
    out.push_back(p);
  }
  return out;
}

Eigen::VectorXd evaluate(const Field& f, const Vec2& p) {
  auto hit = f.mesh()->locate(p);
  if (!hit) throw UsageError("point is outside the mesh");
  const auto& tri = f.mesh()->triangle(hit->first);
  const auto& b = hit->second;
  return (b(0) * f.values().row(tri[0]) + b(1) * f.values().row(tri[1]) +
          b(2) * f.values().row(tri[2]))
      .transpose();
}

OscillationReport p_oscillation(const GaugeFrame& gauge, const PStructure& structure,
                                double ut_norm, double epsilon0,
                                const std::vector<Probe>& probes) {
  const auto& mptr = gauge.P.mesh();
  const auto& mesh = *mptr;
  const int n = gauge.P.n();
  MatrixXd pt = elliptic::solver_for(mptr, elliptic::Method::Direct)->dirichlet(MatrixXd(-structure.rhs_load));
  Field Pt = Field::matrix(mptr, n, pt);
  Field V = Field::matrix(mptr, n, gauge.P.values() - pt);
  auto gV = mesh::gradient(V);

  OscillationReport out;
  out.p_tilde_sup = mesh::norms(Pt).linf;
  for (const auto& pr : probes) {
    if (pr.r <= 0.0 || pr.x.norm() + 2.0 * pr.r > 1.0 + 1e-12 || (pr.y - pr.x).norm() > pr.r) {
      ++out.skipped;
      continue;
    }
    const double osc = (evaluate(gauge.P, pr.y) - evaluate(gauge.P, pr.x)).norm();
    double grad2 = 0.0;
    mesh.for_each_triangle_near(pr.x, 2.0 * pr.r, [&](int t) {
      if ((mesh.centroid(t) - pr.x).norm() <= 2.0 * pr.r)
        grad2 += mesh.area(t) * (gV.x.row(t).squaredNorm() + gV.y.row(t).squaredNorm());
    });
    const double bound = 2.0 * out.p_tilde_sup + std::sqrt(grad2 / std::numbers::pi);
    out.max_oscillation = std::max(out.max_oscillation, osc);
    out.max_bound = std::max(out.max_bound, bound);
    ++out.probes_used;
  }
  out.ratio = out.max_oscillation / (std::sqrt(epsilon0) + ut_norm);
  return out;
}

}  // namespace heatflow::gauge
