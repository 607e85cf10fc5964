#include "heatflow/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "heatflow/error.hpp"

namespace heatflow::manifold {

namespace {

constexpr double kAxisTol = 1e-12;
constexpr double kOnTol = 1e-8;
constexpr double kCliffordRadius = 0.70710678118654752440;

Vec gaussian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

Mat central_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& p, int rows) {
  const double eps = 1e-6;
  Mat J(rows, p.size());
  Vec q = p;
  for (int l = 0; l < p.size(); ++l) {
    q(l) = p(l) + eps;
    Vec fp = f(q);
    q(l) = p(l) - eps;
    Vec fm = f(q);
    q(l) = p(l);
    J.col(l) = (fp - fm) / (2.0 * eps);
  }
  return J;
}

}  // namespace

TargetManifold TargetManifold::sphere(int n) {
  if (n < 2) throw ConfigError("sphere target needs ambient dimension >= 2");
  TargetManifold m;
  m.kind_ = Kind::Sphere;
  m.n_ = n;
  m.codim_ = 1;
  m.reach_ = 1.0;
  return m;
}

TargetManifold TargetManifold::torus(double major, double minor) {
  if (!(minor > 0.0) || !(major > minor) || !std::isfinite(major))
    throw ConfigError("torus target needs R > r > 0");
  TargetManifold m;
  m.kind_ = Kind::Torus3;
  m.n_ = 3;
  m.codim_ = 1;
  m.major_ = major;
  m.minor_ = minor;
  m.reach_ = std::min(minor, major - minor);
  return m;
}

TargetManifold TargetManifold::clifford() {
  TargetManifold m;
  m.kind_ = Kind::Clifford;
  m.n_ = 4;
  m.codim_ = 2;
  m.reach_ = kCliffordRadius;
  return m;
}

TargetManifold TargetManifold::generic(int n, LevelFunction phi, double reach,
                                       std::function<Vec(std::mt19937_64&)> sampler) {
  if (n < 2 || phi.codim < 1 || phi.codim >= n)
    throw ConfigError("generic target needs 1 <= codim < n");
  if (!phi.value) throw ConfigError("generic target needs a level function");
  if (!(reach > 0.0)) throw ConfigError("generic target needs a positive reach");
  TargetManifold m;
  m.kind_ = Kind::Generic;
  m.n_ = n;
  m.codim_ = phi.codim;
  m.reach_ = reach;
  m.phi_ = std::move(phi);
  m.sampler_ = std::move(sampler);
  return m;
}

std::string TargetManifold::name() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Sphere: os << "sphere S^" << (n_ - 1); break;
    case Kind::Torus3: os << "torus (R=" << major_ << ", r=" << minor_ << ")"; break;
    case Kind::Clifford: os << "Clifford torus"; break;
    case Kind::Generic: os << "generic (n=" << n_ << ", k=" << codim_ << ")"; break;
  }
  return os.str();
}

Mat TargetManifold::level_jacobian(const Vec& p) const {
  if (phi_.jacobian) return phi_.jacobian(p);
  return central_jacobian(phi_.value, p, codim_);
}

Vec TargetManifold::project_generic(const Vec& p) const {
  Vec x = p;
  for (int it = 0; it < 50; ++it) {
    Vec f = phi_.value(x);
    if (f.norm() < 1e-14) break;
    Mat J = level_jacobian(x);
    Mat G = J * J.transpose();
    x -= J.transpose() * G.ldlt().solve(f);
  }
  if (!x.allFinite()) throw MedialAxisError("projection diverged");

  const int n = n_, k = codim_;
  Mat J = level_jacobian(x);
  Vec lambda = -(J * J.transpose()).ldlt().solve(J * (x - p));
  auto residual = [&](const Vec& xx, const Vec& ll, const Mat& JJ) {
    Vec F(n + k);
    F.head(n) = xx - p + JJ.transpose() * ll;
    F.tail(k) = phi_.value(xx);
    return F;
  };
  Vec F = residual(x, lambda, J);
  bool converged = F.norm() < 1e-12;
  for (int it = 0; it < 50 && !converged; ++it) {
    Mat H = Mat::Identity(n, n);
    const double eps = 1e-6;
    Vec q = x;
    for (int l = 0; l < n; ++l) {
      q(l) = x(l) + eps;
      Mat Jp = level_jacobian(q);
      q(l) = x(l) - eps;
      Mat Jm = level_jacobian(q);
      q(l) = x(l);
      Mat dJ = (Jp - Jm) / (2.0 * eps);
      H.col(l) += dJ.transpose() * lambda;
    }
    H = 0.5 * (H + H.transpose()).eval();
    Mat KKT = Mat::Zero(n + k, n + k);
    KKT.topLeftCorner(n, n) = H;
    KKT.topRightCorner(n, k) = J.transpose();
    KKT.bottomLeftCorner(k, n) = J;
    Vec step = KKT.fullPivLu().solve(-F);
    double alpha = 1.0;
    const double f0 = F.norm();
    while (true) {
      Vec xn = x + alpha * step.head(n);
      Vec ln = lambda + alpha * step.tail(k);
      Mat Jn = level_jacobian(xn);
      Vec Fn = residual(xn, ln, Jn);
      if (Fn.norm() < f0 || alpha < 1e-8) {
        x = xn;
        lambda = ln;
        J = Jn;
        F = Fn;
        break;
      }
      alpha *= 0.5;
    }
    converged = F.norm() < 1e-12;
  }
  if (!converged || !x.allFinite())
    throw MedialAxisError("projection did not converge; point may be on the medial axis");
  if ((x - p).norm() > reach_)
    throw MedialAxisError("point lies beyond the projection reach");
  return x;
}

Vec TargetManifold::project(const Vec& p) const {
  if (p.size() != n_) throw UsageError("point has wrong ambient dimension");
  if (!p.allFinite()) throw InputError("non-finite point");
  switch (kind_) {
    case Kind::Sphere: {
      const double r = p.norm();
      if (r < kAxisTol) throw MedialAxisError("sphere centre has no nearest point");
      return p / r;
    }
    case Kind::Torus3: {
      const double rho = std::hypot(p(0), p(1));
      if (rho < kAxisTol) throw MedialAxisError("torus axis has no nearest point");
      Vec c(3);
      c << major_ * p(0) / rho, major_ * p(1) / rho, 0.0;
      Vec d = p - c;
      const double s = d.norm();
      if (s < kAxisTol) throw MedialAxisError("torus core circle has no nearest point");
      return c + minor_ * d / s;
    }
    case Kind::Clifford: {
      Vec q = p;
      for (int b = 0; b < 2; ++b) {
        const double r = p.segment(2 * b, 2).norm();
        if (r < kAxisTol) throw MedialAxisError("Clifford torus medial set");
        q.segment(2 * b, 2) = kCliffordRadius * p.segment(2 * b, 2) / r;
      }
      return q;
    }
    case Kind::Generic:
      return project_generic(p);
  }
  return p;
}

double TargetManifold::distance(const Vec& p) const { return (p - project(p)).norm(); }

bool TargetManifold::on_manifold(const Vec& p, double tol) const {
  if (p.size() != n_ || !p.allFinite()) return false;
  switch (kind_) {
    case Kind::Sphere:
      return std::abs(p.norm() - 1.0) <= tol;
    case Kind::Torus3: {
      const double rho = std::hypot(p(0), p(1));
      return std::abs(std::hypot(rho - major_, p(2)) - minor_) <= tol;
    }
    case Kind::Clifford:
      return std::abs(p.head(2).norm() - kCliffordRadius) <= tol &&
             std::abs(p.tail(2).norm() - kCliffordRadius) <= tol;
    case Kind::Generic:
      return phi_.value(p).norm() <= tol;
  }
  return false;
}

Mat TargetManifold::normal_basis(const Vec& p) const {
  switch (kind_) {
    case Kind::Sphere: {
      return p.normalized();
    }
    case Kind::Torus3: {
      Vec c(3);
      const double rho = std::hypot(p(0), p(1));
      c << major_ * p(0) / rho, major_ * p(1) / rho, 0.0;
      return (p - c).normalized();
    }
    case Kind::Clifford: {
      Mat N = Mat::Zero(4, 2);
      N.block(0, 0, 2, 1) = p.head(2).normalized();
      N.block(2, 1, 2, 1) = p.tail(2).normalized();
      return N;
    }
    case Kind::Generic: {
      Mat Jt = level_jacobian(p).transpose();
      Eigen::HouseholderQR<Mat> qr(Jt);
      return qr.householderQ() * Mat::Identity(n_, codim_);
    }
  }
  return Mat();
}

Mat TargetManifold::tangent_projector(const Vec& p) const {
  Mat N = normal_basis(p);
  return Mat::Identity(n_, n_) - N * N.transpose();
}

Vec TargetManifold::tangent_project(const Vec& p, const Vec& v) const {
  if (v.size() != n_) throw UsageError("vector has wrong ambient dimension");
  if (!on_manifold(p, kOnTol)) throw UsageError("base point is not on the target");
  Mat N = normal_basis(p);
  return v - N * (N.transpose() * v);
}

SffTensor TargetManifold::sff_generic(const Vec& p0) const {
  Vec p = on_manifold(p0, 1e-12) ? p0 : project(p0);
  const int n = n_;
  const double s = 1e-5 * reach_;
  Mat PT = tangent_projector(p);
  Mat PN = Mat::Identity(n, n) - PT;
  std::vector<Mat> D(n);
  for (int l = 0; l < n; ++l) {
    Vec e = Vec::Zero(n);
    e(l) = s;
    D[l] = (tangent_projector(project(p + e)) - tangent_projector(project(p - e))) / (2.0 * s);
    D[l] = PN * D[l] * PT;
  }
  SffTensor A(n, Mat::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) A[i](j, l) = D[l](i, j);
    A[i] = 0.5 * (A[i] + A[i].transpose()).eval();
  }
  return A;
}

SffTensor TargetManifold::sff_tensor(const Vec& p) const {
  const int n = n_;
  SffTensor A(n, Mat::Zero(n, n));
  switch (kind_) {
    case Kind::Sphere:
      for (int i = 0; i < n; ++i) A[i].diagonal().setConstant(-p(i));
      return A;
    case Kind::Clifford:
      for (int b = 0; b < 2; ++b)
        for (int i = 2 * b; i < 2 * b + 2; ++i)
          for (int j = 2 * b; j < 2 * b + 2; ++j)
            A[i](j, j) = -p(i) / (kCliffordRadius * kCliffordRadius);
      return A;
    case Kind::Torus3: {
      const double rho = std::hypot(p(0), p(1));
      if (rho < kAxisTol) throw MedialAxisError("torus axis");
      Eigen::Vector3d er(p(0) / rho, p(1) / rho, 0.0), ephi(-p(1) / rho, p(0) / rho, 0.0),
          ez(0.0, 0.0, 1.0);
      const double a = rho - major_, s = std::hypot(a, p(2));
      if (s < kAxisTol) throw MedialAxisError("torus core circle");
      Eigen::Vector3d nu = (a * er + p(2) * ez) / s;
      Eigen::Matrix3d hess = (a / s / rho) * ephi * ephi.transpose() +
                             (er * er.transpose() + ez * ez.transpose() - nu * nu.transpose()) / s;
      for (int i = 0; i < 3; ++i) A[i] = -nu(i) * hess;
      return A;
    }
    case Kind::Generic:
      return sff_generic(p);
  }
  return A;
}

Vec contract(const SffTensor& A, const Vec& X, const Vec& Y) {
  Vec out(static_cast<int>(A.size()));
  for (std::size_t i = 0; i < A.size(); ++i) out(static_cast<int>(i)) = X.dot(A[i] * Y);
  return out;
}

Vec TargetManifold::second_fundamental_form(const Vec& p, const Vec& X, const Vec& Y) const {
  if (X.size() != n_ || Y.size() != n_) throw UsageError("vector has wrong ambient dimension");
  if (!on_manifold(p, kOnTol)) throw UsageError("base point is not on the target");
  Mat N = normal_basis(p);
  const double scale = std::max({1.0, X.norm(), Y.norm()});
  if ((N.transpose() * X).norm() > kOnTol * scale || (N.transpose() * Y).norm() > kOnTol * scale)
    throw UsageError("arguments of the second fundamental form must be tangent");
  return contract(sff_tensor(p), X, Y);
}

Vec TargetManifold::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  switch (kind_) {
    case Kind::Sphere: {
      Vec v = gaussian(n_, rng);
      while (v.norm() < 1e-8) v = gaussian(n_, rng);
      return v.normalized();
    }
    case Kind::Torus3: {
      const double a = angle(rng), b = angle(rng);
      Vec v(3);
      v << (major_ + minor_ * std::cos(b)) * std::cos(a),
          (major_ + minor_ * std::cos(b)) * std::sin(a), minor_ * std::sin(b);
      return v;
    }
    case Kind::Clifford: {
      const double a = angle(rng), b = angle(rng);
      Vec v(4);
      v << std::cos(a), std::sin(a), std::cos(b), std::sin(b);
      return kCliffordRadius * v;
    }
    case Kind::Generic: {
      if (sampler_) return sampler_(rng);
      for (int attempt = 0; attempt < 1000; ++attempt) {
        try {
          return project_generic(gaussian(n_, rng));
        } catch (const MedialAxisError&) {
        }
      }
      throw ConfigError("could not sample the generic target; supply a sampler");
    }
  }
  return Vec();
}

Vec TargetManifold::base_point() const {
  Vec p = Vec::Zero(n_);
  switch (kind_) {
    case Kind::Sphere: p(n_ - 1) = 1.0; break;
    case Kind::Torus3: p(0) = major_ + minor_; break;
    case Kind::Clifford: p << kCliffordRadius, 0.0, kCliffordRadius, 0.0; break;
    case Kind::Generic: {
      std::mt19937_64 rng(0);
      p = sample(rng);
      break;
    }
  }
  return p;
}

std::pair<Vec, Vec> TargetManifold::base_tangents() const {
  Vec e1 = Vec::Zero(n_), e2 = Vec::Zero(n_);
  switch (kind_) {
    case Kind::Sphere: e1(0) = 1.0; e2(1) = 1.0; break;
    case Kind::Torus3: e1(1) = 1.0; e2(2) = 1.0; break;
    case Kind::Clifford: e1(1) = 1.0; e2(3) = 1.0; break;
    case Kind::Generic: {
      Mat PT = tangent_projector(base_point());
      Eigen::JacobiSVD<Mat> svd(PT, Eigen::ComputeFullU);
      e1 = svd.matrixU().col(0);
      if (n_ - codim_ >= 2) e2 = svd.matrixU().col(1);
      break;
    }
  }
  return {e1, e2};
}

double sup_sff_norm(const TargetManifold& m, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = m.ambient_dim();
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    SffTensor A = m.sff_tensor(m.sample(rng));
    Mat flat(n * n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) flat.row(i * n + j) = A[i].row(j);
    Eigen::JacobiSVD<Mat> svd(flat);
    best = std::max(best, svd.singularValues()(0));
  }
  return best;
}

double normal_deviation_check(const TargetManifold& m, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> expo(-3.0, 0.0);
  const int n = m.ambient_dim();
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vec p = m.sample(rng);
    Vec q;
    if (s % 2 == 0) {
      q = m.sample(rng);
    } else {
      Vec w = m.tangent_project(p, gaussian(n, rng));
      if (w.norm() < 1e-12) continue;
      const double len = std::pow(10.0, expo(rng)) * m.reach();
      try {
        q = m.project(p + len * w.normalized());
      } catch (const MedialAxisError&) {
        continue;
      }
    }
    Vec d = p - q;
    const double dist = d.norm();
    if (dist < 1e-12) continue;
    Mat N = m.normal_basis(p);
    best = std::max(best, (N.transpose() * d).norm() / (dist * dist));
  }
  return best;
}

ConnectionForm ConnectionForm::zeros(mesh::MeshPtr mesh, int n) {
  ConnectionForm w;
  const int nt = mesh->num_triangles();
  w.mesh = std::move(mesh);
  w.n = n;
  w.x.assign(nt, Mat::Zero(n, n));
  w.y.assign(nt, Mat::Zero(n, n));
  return w;
}

double ConnectionForm::l2_norm() const {
  double acc = 0.0;
  for (int t = 0; t < mesh->num_triangles(); ++t)
    acc += mesh->area(t) * (x[t].squaredNorm() + y[t].squaredNorm());
  return std::sqrt(acc);
}

ConnectionForm assemble_omega(const TargetManifold& m, const mesh::Field& u) {
  if (u.shape() != mesh::Shape::Vector || u.n() != m.ambient_dim())
    throw UsageError("assemble_omega needs a vector field in the ambient space");
  const auto& mesh = *u.mesh();
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (!m.on_manifold(u.at(v), kOnTol)) throw UsageError("map value is off the target");
  const int n = m.ambient_dim();
  ConnectionForm w = ConnectionForm::zeros(u.mesh(), n);
  const Eigen::MatrixXd& U = u.values();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& G = mesh.hat_gradients(t);
    Vec ubar = (U.row(tri[0]) + U.row(tri[1]) + U.row(tri[2])).transpose() / 3.0;
    Vec gx = Vec::Zero(n), gy = Vec::Zero(n);
    for (int a = 1; a < 3; ++a) {
      gx += G(a, 0) * (U.row(tri[a]) - U.row(tri[0])).transpose();
      gy += G(a, 1) * (U.row(tri[a]) - U.row(tri[0])).transpose();
    }
    SffTensor A = m.sff_tensor(ubar);
    Mat Cx(n, n), Cy(n, n);
    for (int i = 0; i < n; ++i) {
      Cx.row(i) = (A[i] * gx).transpose();
      Cy.row(i) = (A[i] * gy).transpose();
    }
    w.x[t] = Cx - Cx.transpose();
    w.y[t] = Cy - Cy.transpose();
  }
  return w;
}

}  // namespace heatflow::manifold
