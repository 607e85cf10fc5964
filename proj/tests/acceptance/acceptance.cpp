// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "heatflow/elliptic.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/gauge.hpp"
#include "heatflow/hardy.hpp"
#include "heatflow/lab.hpp"
#include "support.hpp"

using namespace heatflow;
using mesh::Field;
using mesh::Vec2;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

struct SuiteRun {
  std::string name;
  lab::Json report;
  std::string verdict;
  double seconds = 0.0;
};

std::vector<fs::path> scenario_files() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(HEATFLOW_SCENARIOS))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<SuiteRun> run_suite(int refinement, const std::vector<lab::Check>& checks) {
  std::vector<SuiteRun> runs;
  for (const auto& f : scenario_files()) {
    auto cfg = lab::load_config(f);
    if (cfg.exploratory) continue;
    if (refinement > 0) cfg.refinement = refinement;
    if (!checks.empty()) cfg.checks = checks;
    const auto start = std::chrono::steady_clock::now();
    auto out = lab::run_scenario(cfg);
    runs.push_back({cfg.name, std::move(out.report), out.verdict, seconds_since(start)});
  }
  return runs;
}

const lab::Json& check_of(const SuiteRun& r, const char* name) { return r.report["checks"][name]; }

double max_b_ratio(const std::vector<SuiteRun>& runs) {
  double b = 0.0;
  for (const auto& r : runs)
    for (const auto& s : check_of(r, "gauge")["snapshots"])
      b = std::max(b, s["b_sup"]["ratio"].get<double>());
  return b;
}

// 1
Outcome convexity(const std::vector<SuiteRun>& suite) {
  Outcome o;
  double worst = std::numeric_limits<double>::infinity(), slowest = 0.0;
  int pairs = std::numeric_limits<int>::max();
  for (const auto& r : suite) {
    const auto& c = check_of(r, "convexity");
    o.require(r.report["initial"]["energy"].get<double>() < r.report["config"]["epsilon0"].get<double>(),
              r.name + " not small energy");
    o.require(c["verdict"] == "pass", r.name + " convexity " + c["verdict"].get<std::string>());
    worst = std::min(worst, c["min_ratio"].get<double>());
    pairs = std::min(pairs, c["pairs"].get<int>());
    slowest = std::max(slowest, r.seconds);
  }
  o.require(suite.size() >= 6, "fewer than 6 scenarios");
  o.require(pairs >= 50, "fewer than 50 pairs");
  o.require(worst >= 0.25 - 0.05, "ratio below 0.20");
  o.require(slowest < 300.0, "scenario over 5 min");
  o.detail << suite.size() << " scenarios, >= " << pairs << " pairs each, min ratio " << worst
           << ", slowest scenario " << slowest << " s";
  return o;
}

// 2
Outcome decay_identity() {
  Outcome o;
  auto N = manifold::TargetManifold::sphere(3);
  std::vector<double> res;
  for (int level = 3; level <= 5; ++level) {
    auto m = mesh::build_disk_mesh(level);
    flow::FlowOptions fo;
    fo.t_end = 1.25;
    fo.tau = 0.01 / std::pow(2.0, level - 2);
    fo.max_snapshots = 4;
    auto traj = flow::run_flow(N, support::cap_map(m, N, 0.12, 0.03), fo);
    res.push_back(flow::decay_identity_residual(traj, 1.0, 1.25));
  }
  o.detail << "residuals at levels 3,4,5 on [1, 1.25]:";
  for (double r : res) o.detail << " " << r;
  o.detail << "; ratios";
  for (std::size_t k = 1; k < res.size(); ++k) {
    const double q = res[k - 1] / res[k];
    o.detail << " " << q;
    o.require(q >= 1.4 && q <= 2.6, "ratio outside [1.4, 2.6]");
  }
  return o;
}

// 3
Outcome monotonicity(const std::vector<SuiteRun>& suite) {
  Outcome o;
  int violations = 0, mv_pairs = 0, mv_violations = 0;
  for (const auto& r : suite) {
    const auto& c = check_of(r, "ut_monotone");
    o.require(c["verdict"] == "pass", r.name + " ut_monotone " + c["verdict"].get<std::string>());
    if (c["verdict"] != "pass") continue;
    violations += c["violations"].get<int>();
    mv_pairs += c["mean_value_pairs"].get<int>();
    mv_violations += c["mean_value_violations"].get<int>();
  }
  o.require(violations == 0, "monotonicity violations");
  o.require(mv_violations == 0, "mean-value violations");
  o.require(mv_pairs > 0, "no mean-value pairs sampled");
  o.detail << violations << " violations after T0, " << mv_violations << "/" << mv_pairs
           << " mean-value violations";
  return o;
}

// 4
Outcome wente() {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> k(-4.0, 4.0), ph(0, 2 * kPi), amp(0.5, 1.5);
  auto wave = [&]() {
    std::array<double, 12> w;
    for (int i = 0; i < 3; ++i) w[4 * i] = k(rng), w[4 * i + 1] = k(rng), w[4 * i + 2] = ph(rng), w[4 * i + 3] = amp(rng);
    return [w](const Vec2& x) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += w[4 * i + 3] * std::sin(w[4 * i] * x(0) + w[4 * i + 1] * x(1) + w[4 * i + 2]);
      return s;
    };
  };
  auto m3 = mesh::build_disk_mesh(3), m4 = mesh::build_disk_mesh(4);
  double sup3 = 0.0, sup4 = 0.0, worst_member = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto a = wave(), b = wave();
    const double r3 = elliptic::wente_solve(mesh::interpolate_scalar(m3, a), mesh::interpolate_scalar(m3, b)).ratio;
    const double r4 = elliptic::wente_solve(mesh::interpolate_scalar(m4, a), mesh::interpolate_scalar(m4, b)).ratio;
    sup3 = std::max(sup3, r3);
    sup4 = std::max(sup4, r4);
    worst_member = std::max(worst_member, std::abs(r4 - r3) / r4);
  }
  o.require(sup3 <= 0.2 && sup4 <= 0.2, "sup ratio above 0.2");
  o.require(std::abs(sup4 - sup3) <= 0.1 * sup4, "sup ratio moved more than 10%");
  o.detail << "sup ratio " << sup3 << " (level 3), " << sup4 << " (level 4), worst member change "
           << 100 * worst_member << "%; w(0) error for a=x, b=y:";
  for (int level = 3; level <= 4; ++level) {
    auto m = mesh::build_disk_mesh(level);
    auto r = elliptic::wente_solve(mesh::interpolate_scalar(m, [](const Vec2& p) { return p(0); }),
                                   mesh::interpolate_scalar(m, [](const Vec2& p) { return p(1); }));
    const double err = std::abs(r.w.values()(m->center_vertex(), 0) - 0.25);
    o.detail << " " << err << " (h^2 = " << m->h() * m->h() << ")";
    o.require(err <= m->h() * m->h(), "w(0) error above h^2");
  }
  return o;
}

// 5
Outcome gauge_construction() {
  Outcome o;
  support::SyntheticGauge sg;
  std::vector<double> constant;
  for (int level = 3; level <= 5; ++level) {
    auto m = mesh::build_disk_mesh(level);
    auto omega = sg.omega(m);
    auto g = gauge::recover_xi(gauge::minimize_gauge(omega), omega);
    Field diff = g.xi;
    diff.values() -= sg.xi_field(m).values();
    const double xi_err = mesh::norms(diff).l2;
    o.require(g.r_gauge <= 10 * m->h() * omega.l2_norm(), "r_gauge above 10 h |Omega|");
    o.require(xi_err <= 10 * m->h(), "xi error above 10 h");
    constant.push_back((mesh::norms(mesh::gradient(g.P)).l2 + mesh::norms(mesh::gradient(g.xi)).l2) /
                       omega.l2_norm());
    o.detail << "L" << level << ": r_gauge " << g.r_gauge << ", xi err " << xi_err << "; ";
  }
  o.detail << "constants";
  for (std::size_t k = 0; k < constant.size(); ++k) {
    o.detail << " " << constant[k];
    if (k > 0) o.require(std::abs(constant[k] / constant[k - 1] - 1.0) <= 0.2, "constant moved more than 20%");
  }
  return o;
}

// 6
Outcome conservation() {
  Outcome o;
  auto N = manifold::TargetManifold::sphere(3);
  auto chain = [&](const Field& u) {
    auto omega = gauge::connection(N, u);
    auto g = gauge::recover_xi(gauge::minimize_gauge(omega), omega);
    return gauge::construct_AB(g, omega);
  };
  o.detail << "harmonic residual / h:";
  for (int level = 3; level <= 5; ++level) {
    auto m = mesh::build_disk_mesh(level);
    Field u = support::stereographic(m, 0.4);
    const double r = gauge::conservation_residual(chain(u), u, Field::zeros(m, mesh::Shape::Vector, 3));
    o.detail << " " << r / m->h();
    o.require(r <= 10 * m->h(), "harmonic residual above 10 h");
  }
  auto flow_ratios = [&](double t_end, double tau0) {
    std::vector<double> res;
    for (int level = 2; level <= 4; ++level) {
      auto m = mesh::build_disk_mesh(level);
      flow::FlowOptions fo;
      fo.t_end = t_end;
      fo.tau = tau0 / std::pow(2.0, level - 2);
      fo.max_snapshots = 2;
      auto s = flow::run_flow(N, support::cap_map(m, N, 0.12, 0.03), fo).snapshots.back();
      res.push_back(gauge::conservation_residual(chain(s.u), s.u, s.ut));
    }
    return std::vector<double>{res[0] / res[1], res[1] / res[2]};
  };
  const auto dyn = flow_ratios(0.1, 0.04);
  const auto late = flow_ratios(1.0, 0.02);
  o.detail << "; snapshot ratios under halving, t = 0.1: " << dyn[0] << " " << dyn[1]
           << ", t = 1 (reported): " << late[0] << " " << late[1];
  for (double q : dyn) o.require(q >= 1.4 && q <= 2.6, "t = 0.1 ratio outside [1.4, 2.6]");
  for (double q : late) o.require(q >= 1.4, "t = 1 residual not decreasing");
  return o;
}

// 7
Outcome b_sup(const std::vector<SuiteRun>& suite4) {
  Outcome o;
  const auto suite3 = run_suite(3, {lab::Check::Gauge});
  for (const auto* s : {&suite3, &suite4})
    for (const auto& r : *s) {
      const auto& c = check_of(r, "gauge");
      o.require(c["verdict"] == "pass", r.name + " gauge " + c["verdict"].get<std::string>());
    }
  const double c3 = max_b_ratio(suite3), c4 = max_b_ratio(suite4);
  o.require(c3 > 0.0 && c4 > 0.0, "no B estimates");
  o.require(std::abs(c4 - c3) <= 0.25 * std::max(c3, c4), "suite constant moved more than 25%");
  o.detail << "suite constant max |B|_inf / E: " << c3 << " (refinement 3), " << c4
           << " (refinement 4)";
  return o;
}

// 8
Outcome hardy_machinery(const std::vector<SuiteRun>& suite) {
  Outcome o;
  {
    auto m = mesh::build_disk_mesh(4);
    hardy::HardyEstimator est(m);
    const double one = est.h1_norm(Eigen::VectorXd::Ones(m->num_triangles()));
    o.require(std::abs(one / kPi - 1.0) <= 0.01, "|1|_h1 not within 1% of pi");
    o.detail << "|1|_h1 = " << one << "; ";
  }
  {
    auto m = mesh::build_disk_mesh(5);
    hardy::HardyOptions ho;
    ho.cache_limit = 0;
    hardy::HardyEstimator est(m, ho);
    std::vector<double> x, y;
    for (double rho : {0.1, 0.05, 0.025}) {
      Eigen::VectorXd f(m->num_triangles());
      for (int t = 0; t < m->num_triangles(); ++t) {
        // Centroid-sampled bump 3/(pi rho^2)(1 - r^2/rho^2)^2, normalised to unit L1.
        const double r = m->centroid(t).norm();
        const double q = r < rho ? 1.0 - r * r / (rho * rho) : 0.0;
        f(t) = q * q;
      }
      double mass = 0.0;
      for (int t = 0; t < m->num_triangles(); ++t) mass += m->area(t) * f(t);
      f /= mass;
      x.push_back(std::log(1.0 / rho));
      y.push_back(est.h1_norm(f));
    }
    const double mx = (x[0] + x[1] + x[2]) / 3, my = (y[0] + y[1] + y[2]) / 3;
    double sxy = 0, sxx = 0, syy = 0;
    for (int k = 0; k < 3; ++k) {
      sxy += (x[k] - mx) * (y[k] - my);
      sxx += (x[k] - mx) * (x[k] - mx);
      syy += (y[k] - my) * (y[k] - my);
    }
    const double r2 = sxy * sxy / (sxx * syy);
    o.require(sxy > 0.0 && r2 >= 0.98, "log growth fit R^2 below 0.98");
    o.detail << "bump h1 " << y[0] << " " << y[1] << " " << y[2] << ", R^2 " << r2 << "; ";
  }
  double ratio = 0.0, cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
  for (const auto& r : suite) {
    const auto& c = check_of(r, "hardy");
    o.require(c["verdict"] == "pass", r.name + " hardy " + c["verdict"].get<std::string>());
    if (c["verdict"] != "pass") continue;
    ratio = std::max(ratio, c["max_ratio"].get<double>());
    cmin = std::min(cmin, c["poisson_constant_min"].get<double>());
    cmax = std::max(cmax, c["poisson_constant_max"].get<double>());
  }
  o.require(cmax <= 1.25 * cmin, "h1 Poisson constant spread above 25%");
  o.detail << "suite h1/E max " << ratio << ", h1 Poisson constant in [" << cmin << ", " << cmax << "]";
  return o;
}

// 9
Outcome lower_bound(const std::vector<SuiteRun>& suite) {
  Outcome o;
  double worst = std::numeric_limits<double>::infinity();
  long evaluated = 0, below = 0;
  for (const auto& r : suite) {
    const auto& c = check_of(r, "gauge");
    if (!c.contains("snapshots")) {
      o.require(false, r.name + " has no gauge snapshots");
      continue;
    }
    for (const auto& s : c["snapshots"]) {
      const auto& lb = s["lower_bound"];
      evaluated += lb["evaluated"].get<long>();
      below += lb["below_floor"].get<long>();
      if (lb["evaluated"].get<long>() > 0) worst = std::min(worst, lb["min_ratio"].get<double>());
    }
  }
  o.require(evaluated > 0, "nothing evaluated");
  o.require(below == 0, "ratios below 0.20");
  o.require(worst >= 0.2, "min ratio below 0.20");
  o.detail << evaluated << " (probe, point) evaluations, min ratio " << worst << ", " << below
           << " below 0.20";
  return o;
}

// 10
Outcome solver_oracles() {
  Outcome o;
  std::vector<double> errs;
  for (int level = 2; level <= 5; ++level) {
    auto m = mesh::build_disk_mesh(level);
    auto sol = elliptic::poisson_dirichlet(mesh::interpolate_scalar(m, [](const Vec2& x) { return -8.0 * x(0); }));
    Field diff = sol.psi;
    diff.values() -= mesh::interpolate_scalar(m, [](const Vec2& x) { return (1 - x.squaredNorm()) * x(0); }).values();
    errs.push_back(mesh::norms(diff).l2);
  }
  const double rate = std::log2(errs.front() / errs.back()) / 3.0;
  o.require(rate >= 1.8, "Poisson rate below 1.8");
  o.detail << "Poisson L2 rate " << rate;

  double worst = 0.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int level = 0; level <= 2; ++level) {
    auto m = mesh::build_disk_mesh(level);
    elliptic::EllipticSolver it(m, elliptic::Method::Iterative);
    const auto& in = m->interior_vertices();
    const int ni = static_cast<int>(in.size());
    Eigen::MatrixXd K(m->stiffness());
    Eigen::MatrixXd Kii(ni, ni);
    for (int a = 0; a < ni; ++a)
      for (int b = 0; b < ni; ++b) Kii(a, b) = K(in[a], in[b]);
    Eigen::VectorXd load(m->num_vertices()), b(ni);
    for (auto& v : load) v = nd(rng);
    for (int a = 0; a < ni; ++a) b(a) = load(in[a]);
    const Eigen::VectorXd x = it.dirichlet(load), dense = Kii.fullPivLu().solve(b);
    for (int a = 0; a < ni; ++a)
      worst = std::max(worst, std::abs(x(in[a]) - dense(a)) / dense.cwiseAbs().maxCoeff());
  }
  o.require(worst <= 1e-10, "iterative and dense solves differ");
  o.detail << ", iterative vs dense " << worst;

  auto cfg = lab::parse_config(lab::Json::parse(R"({
    "name": "determinism", "target": "sphere",
    "boundary": {"family": "fourier", "coeffs": [[1, 0.08, 0.08], [2, 0.03, 0.02]]},
    "initial_perturbation": 0.03, "refinement": 2, "t_end": 3, "max_snapshots": 60, "seed": 9
  })"));
  unsetenv("HEATFLOW_SEED");
  const std::string a = lab::dump_report(lab::run_scenario(cfg).report);
  const std::string b = lab::dump_report(lab::run_scenario(cfg).report);
  setenv("HEATFLOW_SEED", "9", 1);
  const std::string c = lab::dump_report(lab::run_scenario(cfg).report);
  unsetenv("HEATFLOW_SEED");
  o.require(a == b && a == c, "reports differ for a fixed seed");
  o.detail << ", repeated reports identical (" << a.size() << " bytes)";
  return o;
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    all = all && o.pass;
    std::printf("criterion %2d %-22s %s  %s (%.1f s)\n", id, name, o.pass ? "PASS" : "FAIL",
                o.detail.str().c_str(), seconds_since(start));
    std::fflush(stdout);
  };

  std::vector<SuiteRun> suite;
  try {
    suite = run_suite(0, {});
  } catch (const std::exception& e) {
    std::printf("suite failed to run: %s\n", e.what());
  }
  for (const auto& r : suite)
    std::printf("suite %-20s %-10s %.1f s\n", r.name.c_str(), r.verdict.c_str(), r.seconds);

  report(1, "convexity", [&] { return convexity(suite); });
  report(2, "decay identity", decay_identity);
  report(3, "ut monotonicity", [&] { return monotonicity(suite); });
  report(4, "wente", wente);
  report(5, "gauge construction", gauge_construction);
  report(6, "conservation law", conservation);
  report(7, "B sup bound", [&] { return b_sup(suite); });
  report(8, "hardy", [&] { return hardy_machinery(suite); });
  report(9, "pointwise lower bound", [&] { return lower_bound(suite); });
  report(10, "solver oracles", solver_oracles);
  return all ? 0 : 1;
}
