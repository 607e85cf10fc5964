#include "heatflow/hardy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>

#include "heatflow/error.hpp"

namespace heatflow::hardy {

using mesh::Vec2;

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double s = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + s * ab)).norm();
}

double triangle_distance(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  const double d1 = cross(b - a, p - a), d2 = cross(c - b, p - b), d3 = cross(a - c, p - c);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0, pos = d1 > 0 || d2 > 0 || d3 > 0;
  if (!(neg && pos)) return 0.0;
  return std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
}

// Signed area of B_r(0) ∩ triangle(0, a, b).
double disc_wedge_area(const Vec2& a, const Vec2& b, double r) {
  auto sector = [r](const Vec2& p, const Vec2& q) {
    return 0.5 * r * r * std::atan2(cross(p, q), p.dot(q));
  };
  if (a.norm() <= r && b.norm() <= r) return 0.5 * cross(a, b);
  const Vec2 d = b - a;
  const double A = d.squaredNorm(), B = a.dot(d), C = a.squaredNorm() - r * r;
  const double disc = B * B - A * C;
  if (disc <= 0.0) return sector(a, b);
  const double s = std::sqrt(disc);
  const double t1 = (-B - s) / A, t2 = (-B + s) / A;
  if (t2 <= 0.0 || t1 >= 1.0) return sector(a, b);
  const Vec2 p1 = a + std::max(t1, 0.0) * d, p2 = a + std::min(t2, 1.0) * d;
  return sector(a, p1) + 0.5 * cross(p1, p2) + sector(p2, b);
}

double disc_triangle_area(const Vec2& x, const Vec2& a, const Vec2& b, const Vec2& c, double r) {
  return std::abs(disc_wedge_area(a - x, b - x, r) + disc_wedge_area(b - x, c - x, r) +
                  disc_wedge_area(c - x, a - x, r));
}

// ∫_T φ_t(x − y) dy = −∫ |T ∩ B_ρ(x)| ∂_ρφ_t dρ, Gauss–Legendre on the
// transition annulus.
double kernel_integral(const Bump& bump, const Vec2& x, double t, const Vec2& a, const Vec2& b,
                       const Vec2& c) {
  static constexpr double kNodes[6] = {0.033765242898423986, 0.16939530676686776,
                                       0.38069040695840156,  0.6193095930415985,
                                       0.8306046932331322,   0.966234757101576};
  static constexpr double kWeights[6] = {0.08566224618958517, 0.18038078652406933,
                                         0.23395696728634552, 0.23395696728634552,
                                         0.18038078652406933, 0.08566224618958517};
  const double rin = bump.inner * t, rout = bump.outer * t;
  const double far = std::max({(a - x).norm(), (b - x).norm(), (c - x).norm()});
  const double area = 0.5 * std::abs(cross(b - a, c - a));
  if (far <= rin) return bump.plateau / (t * t) * area;
  if (triangle_distance(x, a, b, c) >= rout) return 0.0;
  const double w = bump.outer - bump.inner;
  double sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double s = kNodes[i];
    const double rho = t * (bump.inner + w * s);
    const double covered = rho >= far ? area : disc_triangle_area(x, a, b, c, rho);
    sum += kWeights[i] * 6.0 * s * (1.0 - s) * covered;
  }
  return bump.plateau * sum / (t * t);
}

}  // namespace

double Bump::value(double r) const {
  if (r <= inner) return plateau;
  if (r >= outer) return 0.0;
  const double s = (r - inner) / (outer - inner);
  return plateau * (1.0 - s * s * (3.0 - 2.0 * s));
}

double Bump::slope(double r) const {
  if (r <= inner || r >= outer) return 0.0;
  const double w = outer - inner, s = (r - inner) / w;
  return plateau * 6.0 * s * (s - 1.0) / w;
}

double Bump::mass() const {
  const double w = outer - inner;
  return plateau * (kPi * inner * inner + 2.0 * kPi * w * (0.5 * inner + 0.15 * w));
}

double Bump::gradient_bound() const { return 1.5 * plateau / (outer - inner); }

Bump build_bump(double pad) {
  Bump b;
  const double c = b.plateau, a = b.inner;
  const double qa = 0.3 * kPi * c, qb = kPi * c * a, qc = kPi * c * a * a - 1.0;
  double w = (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
  const double w_max = 0.5 - pad - a;
  if (!(w > 0.0) || w > w_max) {
    w = w_max;
    b.plateau = 1.0 / (kPi * a * a + 2.0 * kPi * w * (0.5 * a + 0.15 * w));
  }
  b.outer = a + w;
  return b;
}

HardyEstimator::HardyEstimator(MeshPtr mesh, HardyOptions opts)
    : mesh_(std::move(mesh)), opts_(opts), bump_(build_bump()) {
  if (!mesh_) throw UsageError("HardyEstimator: null mesh");
  if (opts_.scales_per_octave < 1 || opts_.max_octaves < 0)
    throw ConfigError("HardyEstimator: scales_per_octave >= 1 and max_octaves >= 0 required");
  const auto& m = *mesh_;
  // Roughly nt·|B_{Rt}|/π entries per (vertex, scale), plus one per triangle.
  double estimate = 0.0;
  for (int v = 0; v < m.num_vertices(); ++v)
    for (double t : scales(v))
      estimate += m.num_triangles() * std::pow(bump_.outer * t, 2) + 1.0;
  if (estimate > opts_.cache_limit) return;
  vertex_start_.push_back(0);
  scale_start_.push_back(0);
  for (int v = 0; v < m.num_vertices(); ++v) {
    for (double t : scales(v)) {
      kernel_weights(v, t, entries_);
      scale_start_.push_back(entries_.size());
    }
    vertex_start_.push_back(scale_start_.size() - 1);
  }
  cached_ = true;
}

std::vector<double> HardyEstimator::scales(int vertex) const {
  std::vector<double> out;
  if (mesh_->is_boundary(vertex)) return out;
  const double d = 1.0 - mesh_->vertex(vertex).norm();
  if (d <= 0.0) return out;
  const int J = std::clamp(static_cast<int>(std::ceil(std::log2(d / mesh_->h()))), 0,
                           opts_.max_octaves);
  const int k = opts_.scales_per_octave;
  for (int i = 0; i <= k * J; ++i) out.push_back(d * std::exp2(-static_cast<double>(i) / k));
  return out;
}

void HardyEstimator::kernel_weights(int vertex, double t,
                                    std::vector<std::pair<int, double>>& out) const {
  const auto& m = *mesh_;
  const Vec2& x = m.vertex(vertex);
  m.for_each_triangle_near(x, bump_.outer * t, [&](int tri) {
    const auto& T = m.triangle(tri);
    const double w = kernel_integral(bump_, x, t, m.vertex(T[0]), m.vertex(T[1]), m.vertex(T[2]));
    if (w > 0.0) out.emplace_back(tri, w);
  });
}

double HardyEstimator::convolve(int vertex, double t, const Eigen::VectorXd& f) const {
  if (f.size() != mesh_->num_triangles()) throw UsageError("convolve: f must be per-triangle");
  const auto& m = *mesh_;
  const Vec2& x = m.vertex(vertex);
  double total = 0.0;
  m.for_each_triangle_near(x, bump_.outer * t, [&](int tri) {
    if (f(tri) == 0.0) return;
    const auto& T = m.triangle(tri);
    total += f(tri) * kernel_integral(bump_, x, t, m.vertex(T[0]), m.vertex(T[1]), m.vertex(T[2]));
  });
  return total;
}

double HardyEstimator::local_value(int vertex, const Eigen::VectorXd& f) const {
  double num = 0.0, den = 0.0;
  for (int t : mesh_->vertex_triangles(vertex)) {
    num += mesh_->area(t) * std::abs(f(t));
    den += mesh_->area(t);
  }
  return den > 0.0 ? num / den : 0.0;
}

Field HardyEstimator::radial_maximal(const Eigen::VectorXd& f) const {
  const auto& m = *mesh_;
  if (f.size() != m.num_triangles()) throw UsageError("radial_maximal: f must be per-triangle");
  if (!f.allFinite()) throw InputError("radial_maximal: non-finite density");
  std::vector<int> support;
  Eigen::AlignedBox2d box;
  for (int t = 0; t < m.num_triangles(); ++t)
    if (f(t) != 0.0) {
      support.push_back(t);
      for (int v : m.triangle(t)) box.extend(m.vertex(v));
    }
  const bool sparse = !cached_ && 4 * support.size() < static_cast<std::size_t>(m.num_triangles());

  Eigen::VectorXd out(m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) {
    double best = local_value(v, f);
    if (cached_) {
      for (std::size_t s = vertex_start_[v]; s < vertex_start_[v + 1]; ++s) {
        double total = 0.0;
        for (std::size_t i = scale_start_[s]; i < scale_start_[s + 1]; ++i)
          total += entries_[i].second * f(entries_[i].first);
        best = std::max(best, std::abs(total));
      }
    } else if (sparse) {
      const Vec2& x = m.vertex(v);
      const double gap = support.empty() ? 1e300 : box.exteriorDistance(x);
      for (double t : scales(v)) {
        if (gap >= bump_.outer * t) break;  // scales decrease
        double total = 0.0;
        for (int tri : support) {
          const auto& T = m.triangle(tri);
          total += f(tri) *
                   kernel_integral(bump_, x, t, m.vertex(T[0]), m.vertex(T[1]), m.vertex(T[2]));
        }
        best = std::max(best, std::abs(total));
      }
    } else {
      for (double t : scales(v)) best = std::max(best, std::abs(convolve(v, t, f)));
    }
    out(v) = best;
  }
  return Field::scalar(mesh_, out);
}

double HardyEstimator::h1_norm(const Eigen::VectorXd& f) const {
  return mesh_->lumped_mass().dot(radial_maximal(f).values().col(0));
}

Eigen::VectorXd energy_density(const Field& u) {
  const auto g = mesh::gradient(u);
  return (g.x.rowwise().squaredNorm() + g.y.rowwise().squaredNorm()).eval();
}

LowerBoundReport pointwise_lower_bound_check(const Field& u, const gauge::GaugeFrame& gauge,
                                             const elliptic::HodgePair& hodge,
                                             const std::vector<gauge::Probe>& probes,
                                             double floor) {
  const auto& m = *u.mesh();
  const int n = u.n();
  if (gauge.P.mesh() != u.mesh() || hodge.eta.mesh() != u.mesh())
    throw UsageError("pointwise_lower_bound_check: mesh mismatch");
  const auto gu = mesh::gradient(u);
  const auto pe = mesh::perp_gradient(hodge.eta), gz = mesh::gradient(hodge.zeta);
  LowerBoundReport rep;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& probe : probes) {
    const Eigen::VectorXd pv = gauge::evaluate(gauge.P, probe.x);
    const Eigen::MatrixXd Pt =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            pv.data(), n, n)
            .transpose();
    m.for_each_triangle_near(probe.x, probe.r, [&](int t) {
      if ((m.centroid(t) - probe.x).norm() >= probe.r) return;
      const double dens = gu.x.row(t).squaredNorm() + gu.y.row(t).squaredNorm();
      if (dens <= 1e-12) {
        ++rep.skipped;
        return;
      }
      const Eigen::VectorXd rx = Pt * gu.x.row(t).transpose(), ry = Pt * gu.y.row(t).transpose();
      const double lhs = (pe.x.row(t) + gz.x.row(t)).dot(rx.transpose()) +
                         (pe.y.row(t) + gz.y.row(t)).dot(ry.transpose());
      const double ratio = lhs / dens;
      ++rep.evaluated;
      best = std::min(best, ratio);
      if (ratio < 0.25) ++rep.violations;
      if (ratio < floor) ++rep.below_floor;
    });
  }
  rep.min_ratio = rep.evaluated > 0 ? best : 0.0;
  return rep;
}

H1EnergyReport h1_energy_check(const flow::FlowTrajectory& traj, int max_samples,
                               HardyOptions opts) {
  H1EnergyReport rep;
  if (!traj.t0) {
    rep.skipped = true;
    rep.reason = "T0 not detected";
    return rep;
  }
  std::vector<const flow::Snapshot*> eligible;
  for (const auto& s : traj.snapshots)
    if (s.t >= *traj.t0) eligible.push_back(&s);
  if (eligible.empty()) {
    rep.skipped = true;
    rep.reason = "no snapshot after T0";
    return rep;
  }
  std::vector<const flow::Snapshot*> chosen;
  const int count = std::min<int>(std::max(max_samples, 1), static_cast<int>(eligible.size()));
  for (int i = 0; i < count; ++i) {
    const std::size_t k =
        count == 1 ? eligible.size() - 1 : i * (eligible.size() - 1) / (count - 1);
    chosen.push_back(eligible[k]);
  }

  HardyEstimator est(eligible.front()->u.mesh(), opts);
  rep.min_poisson_constant = std::numeric_limits<double>::infinity();
  for (const auto* s : chosen) {
    H1Sample sample;
    sample.t = s->t;
    const Eigen::VectorXd dens = energy_density(s->u);
    sample.h1_density = est.h1_norm(dens);
    sample.energy = flow::dirichlet_energy(s->u).raw;
    if (sample.energy > 0.0) sample.h1_over_energy = sample.h1_density / sample.energy;
    if (sample.h1_density > 0.0) {
      const auto psi = elliptic::psi_energy_density(s->u);
      sample.poisson_constant = (psi.linf + psi.grad_l2) / sample.h1_density;
      rep.min_poisson_constant = std::min(rep.min_poisson_constant, sample.poisson_constant);
      rep.max_poisson_constant = std::max(rep.max_poisson_constant, sample.poisson_constant);
    }
    rep.max_ratio = std::max(rep.max_ratio, sample.h1_over_energy);
    rep.samples.push_back(sample);
  }
  if (!std::isfinite(rep.min_poisson_constant)) rep.min_poisson_constant = 0.0;
  return rep;
}

}  // namespace heatflow::hardy
