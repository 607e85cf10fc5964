#include "heatflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "heatflow/error.hpp"

namespace heatflow::flow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kDegenerate = 1e-14;

void require_on_target(const Field& u, const TargetManifold& m, double tol = 1e-8) {
  if (u.shape() != mesh::Shape::Vector || u.n() != m.ambient_dim())
    throw UsageError("map must be a vector field in the ambient space of the target");
  for (int v = 0; v < u.mesh()->num_vertices(); ++v)
    if (!m.on_manifold(u.at(v), tol)) throw UsageError("map value is off the target");
}

}  // namespace

Energy dirichlet_energy(const Field& u) {
  auto g = mesh::gradient(u);
  const auto& m = *u.mesh();
  double raw = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t)
    raw += m.area(t) * (g.x.row(t).squaredNorm() + g.y.row(t).squaredNorm());
  return {0.5 * raw, raw};
}

double gradient_distance_sq(const Field& a, const Field& b) {
  if (a.mesh() != b.mesh() || a.dim() != b.dim()) throw UsageError("fields do not match");
  Field d = a;
  d.values() -= b.values();
  return dirichlet_energy(d).raw;
}

MatrixXd curvature_term(const Field& u, const TargetManifold& m) {
  const auto& mesh = *u.mesh();
  const int n = m.ambient_dim();
  const MatrixXd& U = u.values();
  std::vector<MatrixXd> gram(mesh.num_vertices(), MatrixXd::Zero(n, n));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& G = mesh.hat_gradients(t);
    VectorXd gx = VectorXd::Zero(n), gy = VectorXd::Zero(n);
    for (int a = 1; a < 3; ++a) {
      gx += G(a, 0) * (U.row(tri[a]) - U.row(tri[0])).transpose();
      gy += G(a, 1) * (U.row(tri[a]) - U.row(tri[0])).transpose();
    }
    MatrixXd local = (mesh.area(t) / 3.0) * (gx * gx.transpose() + gy * gy.transpose());
    for (int v : tri) gram[v] += local;
  }
  MatrixXd F(mesh.num_vertices(), n);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    auto A = m.sff_tensor(u.at(v));
    for (int i = 0; i < n; ++i)
      F(v, i) = (A[i].array() * gram[v].array()).sum() / mesh.lumped_mass()(v);
  }
  return F;
}

Field tension(const Field& u, const TargetManifold& m) {
  require_on_target(u, m);
  const auto& mesh = *u.mesh();
  MatrixXd lap = -(mesh.stiffness() * u.values());
  MatrixXd F = curvature_term(u, m);
  MatrixXd T = MatrixXd::Zero(mesh.num_vertices(), u.dim());
  for (int v : mesh.interior_vertices()) {
    VectorXd raw = lap.row(v).transpose() / mesh.lumped_mass()(v) - F.row(v).transpose();
    T.row(v) = m.tangent_project(u.at(v), raw).transpose();
  }
  return Field(u.mesh(), mesh::Shape::Vector, u.n(), T);
}

Field harmonic_initial_map(const Field& trace, const TargetManifold& m) {
  const auto& mesh = *trace.mesh();
  if (trace.shape() != mesh::Shape::Vector || trace.n() != m.ambient_dim())
    throw UsageError("trace must be a vector field in the ambient space of the target");
  for (int b : mesh.boundary_vertices())
    if (!m.on_manifold(trace.at(b))) throw UsageError("boundary data is off the target");
  auto solver = elliptic::solver_for(trace.mesh());
  MatrixXd U(mesh.num_vertices(), trace.dim());
  for (int c = 0; c < trace.dim(); ++c)
    U.col(c) = solver->dirichlet(VectorXd::Zero(mesh.num_vertices()),
                                 VectorXd(trace.values().col(c)));
  for (int v : mesh.interior_vertices()) U.row(v) = m.project(U.row(v).transpose()).transpose();
  for (int b : mesh.boundary_vertices()) U.row(b) = trace.values().row(b);
  return Field(trace.mesh(), mesh::Shape::Vector, trace.n(), U);
}

Integrator::Integrator(const TargetManifold& m, const Field& u0)
    : target_(m), mesh_(u0.mesh()) {
  require_on_target(u0, m);
  chi_ = MatrixXd::Zero(mesh_->num_vertices(), u0.dim());
  for (int b : mesh_->boundary_vertices()) chi_.row(b) = u0.values().row(b);
}

const elliptic::SpdSolver& Integrator::solver(double tau) {
  auto it = solvers_.find(tau);
  if (it != solvers_.end()) return *it->second;
  const auto& mesh = *mesh_;
  const auto& K = mesh.stiffness();
  const int ni = static_cast<int>(mesh.interior_vertices().size());
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < K.outerSize(); ++k)
    for (mesh::SparseMatrix::InnerIterator e(K, k); e; ++e) {
      const int r = mesh.interior_index(static_cast<int>(e.row()));
      const int c = mesh.interior_index(static_cast<int>(e.col()));
      if (r >= 0 && c >= 0) trips.emplace_back(r, c, tau * e.value());
    }
  for (int v : mesh.interior_vertices())
    trips.emplace_back(mesh.interior_index(v), mesh.interior_index(v), mesh.lumped_mass()(v));
  mesh::SparseMatrix A(ni, ni);
  A.setFromTriplets(trips.begin(), trips.end());
  auto made = std::make_unique<elliptic::SpdSolver>(A, elliptic::Method::Direct);
  const auto& ref = *made;
  solvers_.emplace(tau, std::move(made));
  if (solvers_.size() > 4) {
    // Halving only ever moves to smaller steps; drop the largest.
    auto largest = std::prev(solvers_.end());
    if (largest->first != tau) solvers_.erase(largest);
  }
  return ref;
}

FlowState Integrator::step(const FlowState& state, double tau) {
  if (!(tau > 0.0)) throw UsageError("time step must be positive");
  const auto& mesh = *mesh_;
  const MatrixXd& U = state.u.values();
  const int dim = static_cast<int>(U.cols());
  MatrixXd F = curvature_term(state.u, target_);
  MatrixXd rhs = mesh.lumped_mass().asDiagonal() * (U - tau * F);
  rhs -= tau * (mesh.stiffness() * chi_);
  const auto& interior = mesh.interior_vertices();
  MatrixXd b(interior.size(), dim);
  for (std::size_t k = 0; k < interior.size(); ++k) b.row(k) = rhs.row(interior[k]);
  MatrixXd x = solver(tau).solve(b);

  MatrixXd Unew = chi_;
  const double limit = 0.5 * target_.reach();
  for (std::size_t k = 0; k < interior.size(); ++k) {
    VectorXd v = x.row(k).transpose();
    VectorXd q;
    try {
      q = target_.project(v);
    } catch (const MedialAxisError&) {
      throw StepSizeError("step left the projection reach; reduce the time step");
    }
    if ((q - v).norm() > limit)
      throw StepSizeError("step left the projection reach; reduce the time step");
    Unew.row(interior[k]) = q.transpose();
  }
  FlowState out;
  out.t = state.t + tau;
  out.u = Field(state.u.mesh(), mesh::Shape::Vector, state.u.n(), Unew);
  out.ut = Field(state.u.mesh(), mesh::Shape::Vector, state.u.n(), (Unew - U) / tau);
  return out;
}

double lumped_norm_sq(const Field& f) {
  return (f.mesh()->lumped_mass().asDiagonal() * f.values().cwiseAbs2()).sum();
}

std::optional<std::pair<double, int>> detect_t0(const std::vector<Monitor>& monitors,
                                                double epsilon0, double floor) {
  for (std::size_t k = 0; k < monitors.size(); ++k)
    if (monitors[k].t >= floor - 1e-12 && monitors[k].ut_sq < epsilon0)
      return std::make_pair(monitors[k].t, static_cast<int>(k));
  return std::nullopt;
}

FlowTrajectory run_flow(const TargetManifold& m, const Field& u0, const FlowOptions& opts) {
  if (!(opts.t_end > 0.0)) throw ConfigError("t_end must be positive");
  if (!(opts.epsilon0 > 0.0)) throw ConfigError("epsilon0 must be positive");
  if (opts.max_snapshots < 2) throw ConfigError("max_snapshots must be at least 2");
  Integrator integ(m, u0);
  const auto& mesh = *u0.mesh();

  double tau = opts.tau > 0.0 ? opts.tau : 4.0 * mesh.h() * mesh.h();
  const long steps0 = std::max(1L, static_cast<long>(std::ceil(opts.t_end / tau - 1e-9)));
  tau = opts.t_end / static_cast<double>(steps0);

  FlowTrajectory traj;
  traj.tau_initial = tau;
  traj.epsilon0 = opts.epsilon0;

  FlowState state;
  state.t = 0.0;
  state.u = u0;
  state.ut = tension(u0, m);
  double energy = dirichlet_energy(u0).raw;
  const double e0 = energy;
  const double tol = opts.energy_tol * std::max(e0, 1e-300);

  auto record = [&](const FlowState& s, double e) {
    Monitor mon;
    mon.t = s.t;
    mon.e_raw = e;
    mon.ut_sq = lumped_norm_sq(s.ut);
    mon.tension_l2 = mesh::norms(tension(s.u, m)).l2;
    traj.monitors.push_back(mon);
  };
  const int dense = opts.max_snapshots / 2;
  double snap_dt = 0.0, next_snap = 0.0;
  auto maybe_snapshot = [&](const FlowState& s, bool force) {
    const int stored = static_cast<int>(traj.snapshots.size());
    if (stored == dense) {
      snap_dt = (opts.t_end - s.t) / std::max(1, opts.max_snapshots - dense - 1);
      next_snap = s.t;
    }
    if (!force && stored >= dense && s.t < next_snap - 1e-12) return;
    traj.snapshots.push_back({s.t, static_cast<int>(traj.monitors.size()) - 1, s.u, s.ut});
    if (stored >= dense)
      while (next_snap <= s.t + 1e-12) next_snap += snap_dt;
  };
  record(state, energy);
  maybe_snapshot(state, true);

  long remaining = steps0;
  while (remaining > 0) {
    FlowState next;
    double e_next = 0.0;
    while (true) {
      bool ok = true;
      try {
        next = integ.step(state, tau);
        e_next = dirichlet_energy(next.u).raw;
        if (e_next > energy + tol) {
          ok = false;
          traj.max_energy_increase = std::max(traj.max_energy_increase, e_next - energy);
        }
      } catch (const StepSizeError&) {
        ok = false;
        if (traj.halvings >= opts.max_halvings) throw;
      }
      if (ok) break;
      if (traj.halvings >= opts.max_halvings) {
        ++traj.energy_violations;
        break;
      }
      tau *= 0.5;
      remaining *= 2;
      ++traj.halvings;
    }
    --remaining;
    if (remaining == 0) next.t = opts.t_end;
    state = std::move(next);
    energy = e_next;
    record(state, energy);
    maybe_snapshot(state, remaining == 0);
  }
  traj.tau_final = tau;
  if (auto t0 = detect_t0(traj.monitors, opts.epsilon0, opts.t0_floor)) {
    traj.t0 = t0->first;
    traj.t0_step = t0->second;
  }
  return traj;
}

int monitor_index(const FlowTrajectory& traj, double t) {
  const auto& ms = traj.monitors;
  auto it = std::lower_bound(ms.begin(), ms.end(), t - 1e-9 * std::max(1.0, std::abs(t)),
                             [](const Monitor& m, double v) { return m.t < v; });
  if (it == ms.end() || std::abs(it->t - t) > 1e-9 * std::max(1.0, std::abs(t)))
    throw UsageError("no trajectory step at the requested time");
  return static_cast<int>(it - ms.begin());
}

double dissipation(const FlowTrajectory& traj, int k1, int k2) {
  const auto& ms = traj.monitors;
  if (k1 < 0 || k2 >= static_cast<int>(ms.size()) || k1 > k2)
    throw UsageError("invalid step range");
  double acc = 0.0;
  for (int k = k1 + 1; k <= k2; ++k)
    acc += (ms[k].t - ms[k - 1].t) * (ms[k - 1].ut_sq + ms[k].ut_sq);
  return acc;
}

double decay_identity_residual(const FlowTrajectory& traj, double t1, double t2) {
  if (t2 < t1) throw UsageError("decay identity needs t1 <= t2");
  const int k1 = monitor_index(traj, t1), k2 = monitor_index(traj, t2);
  const auto& ms = traj.monitors;
  return std::abs(dissipation(traj, k1, k2) - (ms[k1].e_raw - ms[k2].e_raw));
}

namespace {

struct PairData {
  double difference;
  double denominator;
};

// Snapshots expressed as offsets w = u − u_ref from a reference map, with
// K·w formed after the subtraction. Differences of nearby late-time maps are
// then free of the cancellation in K·u_a − K·u_b.
struct Offsets {
  MatrixXd Kref;
  std::vector<MatrixXd> w;
  std::vector<MatrixXd> Kw;

  Offsets(const FlowTrajectory& traj, const std::vector<int>& idx, const Field& ref) {
    const auto& K = ref.mesh()->stiffness();
    Kref = K * ref.values();
    for (int i : idx) {
      w.push_back(traj.snapshots[i].u.values() - ref.values());
      Kw.push_back(K * w.back());
    }
  }

  PairData pair(std::size_t a, std::size_t b) const {
    MatrixXd d = w[a] - w[b];
    MatrixXd Kd = Kw[a] - Kw[b];
    const double denom = (d.array() * Kd.array()).sum();
    const double diff =
        2.0 * (d.array() * Kref.array()).sum() + (Kd.array() * (w[a] + w[b]).array()).sum();
    return {diff, denom};
  }
};

ConvexityPair make_pair_result(double t1, double t2, PairData pd, double threshold,
                               double slack) {
  ConvexityPair p;
  p.t1 = t1;
  p.t2 = t2;
  p.difference = pd.difference;
  p.denominator = pd.denominator;
  if (pd.denominator < kDegenerate) {
    p.degenerate = true;
    p.pass = true;
  } else {
    p.ratio = pd.difference / pd.denominator;
    p.pass = p.ratio >= threshold - slack;
  }
  return p;
}

std::vector<int> late_snapshots(const FlowTrajectory& traj) {
  std::vector<int> idx;
  if (!traj.t0) return idx;
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k)
    if (traj.snapshots[k].t >= *traj.t0 - 1e-12) idx.push_back(static_cast<int>(k));
  return idx;
}

void tally(ConvexityReport& rep, const ConvexityPair& p) {
  if (p.degenerate) {
    ++rep.degenerate;
    return;
  }
  if (rep.non_degenerate == 0 || p.ratio < rep.min_ratio) rep.min_ratio = p.ratio;
  ++rep.non_degenerate;
  if (!p.pass) ++rep.failures;
  rep.pairs.push_back(p);
}

}  // namespace

ConvexityPair convexity_pair(const Snapshot& a, const Snapshot& b, double threshold,
                             double slack) {
  const auto& K = a.u.mesh()->stiffness();
  MatrixXd d = a.u.values() - b.u.values();
  MatrixXd Kd = K * d;
  MatrixXd Kb = K * b.u.values();
  PairData pd{2.0 * (d.array() * Kb.array()).sum() + (d.array() * Kd.array()).sum(),
              (d.array() * Kd.array()).sum()};
  return make_pair_result(a.t, b.t, pd, threshold, slack);
}

ConvexityReport convexity_report(const FlowTrajectory& traj, int count, std::uint64_t seed,
                                 double threshold, double slack) {
  ConvexityReport rep;
  rep.threshold = threshold;
  rep.slack = slack;
  std::vector<int> idx = late_snapshots(traj);
  if (idx.size() < 2) return rep;
  Offsets off(traj, idx, traj.snapshots[idx.back()].u);
  std::vector<std::pair<int, int>> pool;
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b)
      pool.emplace_back(static_cast<int>(a), static_cast<int>(b));
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  for (const auto& [a, b] : pool) {
    if (rep.non_degenerate >= count) break;
    const auto& sa = traj.snapshots[idx[a]];
    const auto& sb = traj.snapshots[idx[b]];
    tally(rep, make_pair_result(sa.t, sb.t, off.pair(a, b), threshold, slack));
  }
  return rep;
}

ConvexityReport stationary_convexity(const FlowTrajectory& traj, double threshold,
                                     double slack) {
  ConvexityReport rep;
  rep.threshold = threshold;
  rep.slack = slack;
  std::vector<int> idx = late_snapshots(traj);
  if (idx.size() < 2) return rep;
  const auto& last = traj.snapshots[idx.back()];
  Offsets off(traj, idx, last.u);
  for (std::size_t k = 0; k + 1 < idx.size(); ++k)
    tally(rep, make_pair_result(traj.snapshots[idx[k]].t, last.t, off.pair(k, idx.size() - 1),
                                threshold, slack));
  return rep;
}

MonotonicityReport ut_monotonicity_check(const FlowTrajectory& traj, double rel_tol,
                                         int mean_value_pairs, std::uint64_t seed) {
  MonotonicityReport rep;
  if (!traj.t0) return rep;
  rep.t0 = traj.t0;
  const auto& ms = traj.monitors;
  const int k0 = traj.t0_step;
  rep.tolerance = rel_tol * ms[k0].ut_sq;
  for (std::size_t k = k0; k + 1 < ms.size(); ++k)
    if (ms[k + 1].ut_sq > ms[k].ut_sq + rep.tolerance) ++rep.violations;

  const int last = static_cast<int>(ms.size()) - 1;
  if (last - k0 < 1) return rep;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(k0, last);
  for (int p = 0; p < mean_value_pairs; ++p) {
    int a = pick(rng), b = pick(rng);
    while (a == b) b = pick(rng);
    if (a > b) std::swap(a, b);
    const double mean = 0.5 * dissipation(traj, a, b) / (ms[b].t - ms[a].t);
    ++rep.mean_value_pairs;
    if (ms[b].ut_sq > mean + rep.tolerance) ++rep.mean_value_violations;
  }
  return rep;
}

CrossTerm cross_term_check(const Snapshot& s1, const Snapshot& s2, double epsilon0) {
  const auto& mesh = *s2.u.mesh();
  Field d = s1.u;
  d.values() -= s2.u.values();
  MatrixXd dc = mesh::centroid_values(d);
  auto g = mesh::gradient(s2.u);
  CrossTerm out;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    out.lhs += mesh.area(t) * dc.row(t).squaredNorm() *
               (g.x.row(t).squaredNorm() + g.y.row(t).squaredNorm());
  out.rhs = dirichlet_energy(d).raw;
  if (out.rhs < kDegenerate) {
    out.degenerate = true;
  } else {
    out.constant = out.lhs / (epsilon0 * out.rhs);
  }
  return out;
}

CauchyCertificate cauchy_certificate(const FlowTrajectory& traj, double slack) {
  CauchyCertificate cert;
  if (!traj.t0) return cert;
  std::vector<int> idx = late_snapshots(traj);
  if (idx.empty()) return cert;
  Offsets off(traj, idx, traj.snapshots[idx.back()].u);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      PairData pd = off.pair(a, b);
      worst = std::max(worst, pd.denominator - 4.0 * pd.difference);
      cert.max_denominator = std::max(cert.max_denominator, pd.denominator);
      ++cert.pairs;
    }
  cert.value = cert.pairs > 0 ? worst : 0.0;
  cert.pass = cert.value <= slack * cert.max_denominator;
  return cert;
}

void write_trajectory_csv(std::ostream& os, const FlowTrajectory& traj) {
  os << "t,E_raw,ut_L2_sq,tension_L2\n" << std::setprecision(17);
  for (const auto& m : traj.monitors)
    os << m.t << ',' << m.e_raw << ',' << m.ut_sq << ',' << m.tension_l2 << '\n';
}

}  // namespace heatflow::flow
