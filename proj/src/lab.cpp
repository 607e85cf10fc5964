#include "heatflow/lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "heatflow/elliptic.hpp"
#include "heatflow/error.hpp"
#include "heatflow/gauge.hpp"
#include "heatflow/hardy.hpp"

namespace heatflow::lab {

namespace fs = std::filesystem;
using mesh::Field;
using mesh::MeshPtr;

namespace {

// Validation failure tied to a config key, so load_config can point at its line.
class KeyError : public ConfigError {
 public:
  KeyError(std::string key, const std::string& what) : ConfigError(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

const std::vector<std::pair<Check, const char*>>& check_table() {
  static const std::vector<std::pair<Check, const char*>> table = {
      {Check::Convexity, "convexity"}, {Check::UtMonotone, "ut_monotone"},
      {Check::DecayIdentity, "decay_identity"}, {Check::CrossTerm, "cross_term"},
      {Check::Gauge, "gauge"}, {Check::Hardy, "hardy"}, {Check::Cauchy, "cauchy"}};
  return table;
}

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw KeyError(key, "unknown key '" + where + key + "'");
  }
}

double number(const Json& j, const char* key, double fallback, const std::string& where = "") {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw KeyError(key, "'" + where + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw KeyError(key, "'" + where + key + "' must be finite");
  return x;
}

long long integer(const Json& j, const char* key, long long fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw KeyError(key, std::string("'") + key + "' must be an integer");
  return v.get<long long>();
}

std::string text(const Json& j, const char* key, const std::string& fallback,
                 const std::string& where = "") {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw KeyError(key, "'" + where + key + "' must be a string");
  return v.get<std::string>();
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw KeyError(key, message);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

// Boundary value at angle θ for amplitude multiplier s.
Eigen::VectorXd boundary_point(const BoundarySpec& b, const manifold::TargetManifold& N,
                               double theta, double s) {
  const auto p0 = N.base_point();
  const auto [e1, e2] = N.base_tangents();
  Eigen::VectorXd p = p0;
  if (b.family == "cap") {
    p += s * b.delta * (std::cos(theta) * e1 + std::sin(theta) * e2);
  } else {
    for (const auto& c : b.coeffs)
      p += s * (c[1] * std::cos(c[0] * theta) * e1 + c[2] * std::sin(c[0] * theta) * e2);
  }
  return N.project(p);
}

Json verdict(const std::string& v, const std::string& reason = "") {
  Json j;
  j["verdict"] = v;
  if (!reason.empty()) j["reason"] = reason;
  return j;
}

// Indices of up to `count` snapshots after T₀, first and last included.
std::vector<int> late_sample(const flow::FlowTrajectory& traj, int count) {
  std::vector<int> eligible;
  if (!traj.t0) return eligible;
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k)
    if (traj.snapshots[k].t >= *traj.t0 - 1e-12) eligible.push_back(static_cast<int>(k));
  if (static_cast<int>(eligible.size()) <= count) return eligible;
  std::vector<int> out;
  for (int i = 0; i < count; ++i)
    out.push_back(eligible[i * (eligible.size() - 1) / (count - 1)]);
  return out;
}

struct ChainResult {
  Json metrics;
  std::vector<std::string> gauge_failures;
  hardy::LowerBoundReport lower;
  bool lower_ok = false;
  double b_ratio = 0.0;
};

// Gauge, conservation, B bound, P structure and the pointwise lower bound
// for one map.
ChainResult run_chain(const manifold::TargetManifold& N, const Field& u, const Field& ut,
                      double epsilon0, std::uint64_t seed, double floor) {
  ChainResult out;
  Json& j = out.metrics;
  const double h = u.mesh()->h();
  const auto omega = gauge::connection(N, u);
  const double om = omega.l2_norm();
  j["omega_l2"] = om;

  auto g = gauge::recover_xi(gauge::minimize_gauge(omega), omega);
  const double grad_p = mesh::norms(mesh::gradient(g.P)).l2;
  const double grad_xi = mesh::norms(mesh::gradient(g.xi)).l2;
  j["gauge"] = {{"energy", g.energy},
                {"initial_energy", g.initial_energy},
                {"iterations", g.iterations},
                {"converged", g.converged},
                {"monotone", g.monotone},
                {"orthogonality_error", g.orthogonality_error},
                {"r_gauge", g.r_gauge},
                {"r_gauge_bound", 10.0 * h * om},
                {"constant", om > 0.0 ? (grad_p + grad_xi) / om : 0.0}};
  if (!g.converged) out.gauge_failures.push_back("gauge descent did not converge");
  if (g.r_gauge > 10.0 * h * om) out.gauge_failures.push_back("r_gauge above 10 h |Omega|");

  gauge::ConservationFrame ab;
  try {
    ab = gauge::construct_AB(g, omega);
  } catch (const DivergenceError& e) {
    out.gauge_failures.push_back(std::string("construct_AB: ") + e.what());
    j["ab"] = {{"converged", false}, {"error", e.what()}};
    return out;
  }
  Field ut_or_zero = ut.mesh() ? ut : Field::zeros(u.mesh(), mesh::Shape::Vector, u.n());
  const double cons = gauge::conservation_residual(ab, u, ut_or_zero);
  j["ab"] = {{"iterations", ab.iterations},
             {"converged", ab.converged},
             {"r_cons", ab.r_cons},
             {"r_cons_bound", 10.0 * h * om},
             {"min_singular", ab.min_singular},
             {"conservation_residual", cons}};
  if (!ab.converged) out.gauge_failures.push_back("construct_AB did not converge");
  if (ab.r_cons > 10.0 * h * om) out.gauge_failures.push_back("r_cons above 10 h |Omega|");

  const auto bs = gauge::b_sup_estimate(ab, N, u);
  out.b_ratio = bs.ratio;
  j["b_sup"] = {{"b_sup", bs.b_sup},
                {"energy", bs.energy},
                {"ratio", bs.ratio},
                {"wente_sup", bs.wente_sup},
                {"difference_l2", bs.difference_l2}};

  const auto hodge = elliptic::hodge_decompose(gauge::conserved_flux(ab, u));
  const auto ps = gauge::p_structure(ab, g, N, u, hodge);
  const double p_bound = 10.0 * h * (1.0 + om * om);
  j["p_structure"] = {{"residual", ps.residual},
                      {"residual_bound", p_bound},
                      {"q_norm", ps.q_norm},
                      {"r_norm", ps.r_norm}};
  if (ps.residual > p_bound) out.gauge_failures.push_back("P structure residual above bound");

  const auto probes = gauge::random_probes(40, seed);
  const auto osc = gauge::p_oscillation(g, ps, std::sqrt(flow::lumped_norm_sq(ut_or_zero)),
                                        epsilon0, probes);
  j["oscillation"] = {{"max_oscillation", osc.max_oscillation},
                      {"max_bound", osc.max_bound},
                      {"ratio", osc.ratio},
                      {"probes_used", osc.probes_used},
                      {"skipped", osc.skipped}};
  if (osc.max_oscillation > osc.max_bound)
    out.gauge_failures.push_back("P oscillation above its bound");

  out.lower = hardy::pointwise_lower_bound_check(u, g, hodge, probes, floor);
  out.lower_ok = true;
  j["lower_bound"] = {{"min_ratio", out.lower.min_ratio},
                      {"evaluated", out.lower.evaluated},
                      {"skipped", out.lower.skipped},
                      {"violations", out.lower.violations},
                      {"below_floor", out.lower.below_floor}};
  return out;
}

void collect_nonfinite(const Json& j, const std::string& path, std::vector<std::string>& bad) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) bad.push_back(path);
  if (j.is_object())
    for (const auto& [k, v] : j.items()) collect_nonfinite(v, path + "/" + k, bad);
  if (j.is_array())
    for (std::size_t i = 0; i < j.size(); ++i)
      collect_nonfinite(j[i], path + "/" + std::to_string(i), bad);
}

}  // namespace

const std::vector<Check>& all_checks() {
  static const std::vector<Check> checks = [] {
    std::vector<Check> c;
    for (const auto& [k, name] : check_table()) c.push_back(k);
    return c;
  }();
  return checks;
}

std::string check_name(Check c) {
  for (const auto& [k, name] : check_table())
    if (k == c) return name;
  return "unknown";
}

Check parse_check(const std::string& name) {
  for (const auto& [k, n] : check_table())
    if (name == n) return k;
  throw ConfigError("unknown check '" + name + "'");
}

ScenarioConfig parse_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, {"name", "target", "boundary", "initial_perturbation", "refinement", "tau",
                     "max_snapshots", "t_end", "epsilon0", "t0_floor", "checks", "seed", "pairs",
                     "exploratory", "thresholds"},
                 "");
  ScenarioConfig c;
  c.name = text(j, "name", c.name);
  require(!c.name.empty(), "name", "'name' must not be empty");

  if (j.contains("target")) {
    const auto& t = j.at("target");
    if (t.is_string()) {
      c.target.kind = t.get<std::string>();
    } else if (t.is_object()) {
      reject_unknown(t, {"kind", "major", "minor"}, "target.");
      c.target.kind = text(t, "kind", c.target.kind, "target.");
      c.target.major = number(t, "major", c.target.major, "target.");
      c.target.minor = number(t, "minor", c.target.minor, "target.");
    } else {
      throw KeyError("target", "'target' must be a string or an object");
    }
    const auto& k = c.target.kind;
    require(k == "sphere" || k == "torus" || k == "clifford", "target",
            "'target' must be sphere, torus or clifford (got '" + k + "')");
    require(c.target.major > c.target.minor && c.target.minor > 0.0, "target",
            "torus radii need major > minor > 0");
  }

  if (j.contains("boundary")) {
    const auto& b = j.at("boundary");
    if (!b.is_object()) throw KeyError("boundary", "'boundary' must be an object");
    reject_unknown(b, {"family", "delta", "coeffs"}, "boundary.");
    c.boundary.family = text(b, "family", c.boundary.family, "boundary.");
    if (c.boundary.family == "cap") {
      c.boundary.delta = number(b, "delta", c.boundary.delta, "boundary.");
      require(c.boundary.delta > 0.0, "delta", "'boundary.delta' must be > 0");
      require(!b.contains("coeffs"), "coeffs", "'boundary.coeffs' is only valid for fourier");
    } else if (c.boundary.family == "fourier") {
      require(!b.contains("delta"), "delta", "'boundary.delta' is only valid for cap");
      require(b.contains("coeffs") && b.at("coeffs").is_array() && !b.at("coeffs").empty(),
              "coeffs", "'boundary.coeffs' must be a non-empty array of [k, a, b]");
      for (const auto& e : b.at("coeffs")) {
        require(e.is_array() && e.size() == 3 && e[0].is_number_integer() && e[1].is_number() &&
                    e[2].is_number(),
                "coeffs", "each 'boundary.coeffs' entry must be [k, a, b] with integer k");
        require(e[0].get<int>() >= 1, "coeffs", "'boundary.coeffs' needs k >= 1");
        c.boundary.coeffs.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
      }
    } else {
      throw KeyError("family", "unknown boundary family '" + c.boundary.family + "'");
    }
  }

  c.initial_perturbation = number(j, "initial_perturbation", c.initial_perturbation);
  require(c.initial_perturbation >= 0.0, "initial_perturbation",
          "'initial_perturbation' must be >= 0");
  c.refinement = static_cast<int>(integer(j, "refinement", c.refinement));
  require(c.refinement >= 0 && c.refinement <= mesh::kMaxRefinement, "refinement",
          "'refinement' must be in [0, " + std::to_string(mesh::kMaxRefinement) + "]");
  c.tau = number(j, "tau", c.tau);
  require(c.tau >= 0.0, "tau", "'tau' must be >= 0 (0 selects 4h^2)");
  c.max_snapshots = static_cast<int>(integer(j, "max_snapshots", c.max_snapshots));
  require(c.max_snapshots >= 2, "max_snapshots", "'max_snapshots' must be >= 2");
  c.t_end = number(j, "t_end", c.t_end);
  require(c.t_end > 1.0, "t_end", "'t_end' must be > 1 (got " + fmt(c.t_end) + ")");
  c.epsilon0 = number(j, "epsilon0", c.epsilon0);
  require(c.epsilon0 > 0.0, "epsilon0", "'epsilon0' must be > 0 (got " + fmt(c.epsilon0) + ")");
  c.t0_floor = number(j, "t0_floor", c.t0_floor);
  require(c.t0_floor >= 0.0 && c.t0_floor < c.t_end, "t0_floor",
          "'t0_floor' must be in [0, t_end)");

  if (j.contains("checks")) {
    const auto& arr = j.at("checks");
    if (!arr.is_array()) throw KeyError("checks", "'checks' must be an array of names");
    c.checks.clear();
    for (const auto& e : arr) {
      if (!e.is_string()) throw KeyError("checks", "'checks' entries must be strings");
      Check k;
      try {
        k = parse_check(e.get<std::string>());
      } catch (const ConfigError& err) {
        throw KeyError("checks", err.what());
      }
      require(std::find(c.checks.begin(), c.checks.end(), k) == c.checks.end(), "checks",
              "duplicate check '" + e.get<std::string>() + "'");
      c.checks.push_back(k);
    }
  }

  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    require(s.is_number_unsigned(), "seed", "'seed' must be a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.pairs = static_cast<int>(integer(j, "pairs", c.pairs));
  require(c.pairs >= 1, "pairs", "'pairs' must be >= 1");
  if (j.contains("exploratory")) {
    require(j.at("exploratory").is_boolean(), "exploratory", "'exploratory' must be a boolean");
    c.exploratory = j.at("exploratory").get<bool>();
  }

  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    if (!t.is_object()) throw KeyError("thresholds", "'thresholds' must be an object");
    reject_unknown(t, {"convexity", "slack", "lower_bound_floor", "cross_term_max",
                       "hardy_ratio_max", "b_sup_ratio_max"},
                   "thresholds.");
    auto& th = c.thresholds;
    th.convexity = number(t, "convexity", th.convexity, "thresholds.");
    th.slack = number(t, "slack", th.slack, "thresholds.");
    th.lower_bound_floor = number(t, "lower_bound_floor", th.lower_bound_floor, "thresholds.");
    th.cross_term_max = number(t, "cross_term_max", th.cross_term_max, "thresholds.");
    th.hardy_ratio_max = number(t, "hardy_ratio_max", th.hardy_ratio_max, "thresholds.");
    th.b_sup_ratio_max = number(t, "b_sup_ratio_max", th.b_sup_ratio_max, "thresholds.");
    require(th.slack >= 0.0, "slack", "'thresholds.slack' must be >= 0");
    require(th.cross_term_max > 0.0 && th.hardy_ratio_max > 0.0 && th.b_sup_ratio_max > 0.0,
            "thresholds", "threshold maxima must be > 0");
  }
  return c;
}

ScenarioConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string src = buf.str();
  auto line_of = [&](std::size_t byte) {
    const std::size_t end = std::min(byte, src.size());
    const auto line = 1 + std::count(src.begin(), src.begin() + end, '\n');
    const auto nl = src.rfind('\n', end == 0 ? 0 : end - 1);
    const std::size_t col = nl == std::string::npos ? end + 1 : end - nl;
    return std::to_string(line) + ":" + std::to_string(col);
  };
  Json j;
  try {
    j = Json::parse(src);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ":" + line_of(e.byte == 0 ? 0 : e.byte - 1) +
                      ": parse error: " + e.what());
  }
  try {
    ScenarioConfig c = parse_config(j);
    if (!j.contains("name")) c.name = path.stem().string();
    return c;
  } catch (const KeyError& e) {
    const auto pos = src.find("\"" + e.key() + "\"");
    const std::string where = pos == std::string::npos ? "" : ":" + line_of(pos);
    throw ConfigError(path.string() + where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json config_to_json(const ScenarioConfig& c) {
  Json j;
  j["name"] = c.name;
  j["target"] = {{"kind", c.target.kind}};
  if (c.target.kind == "torus") {
    j["target"]["major"] = c.target.major;
    j["target"]["minor"] = c.target.minor;
  }
  j["boundary"] = {{"family", c.boundary.family}};
  if (c.boundary.family == "cap") {
    j["boundary"]["delta"] = c.boundary.delta;
  } else {
    Json arr = Json::array();
    for (const auto& e : c.boundary.coeffs)
      arr.push_back({static_cast<int>(e[0]), e[1], e[2]});
    j["boundary"]["coeffs"] = arr;
  }
  j["initial_perturbation"] = c.initial_perturbation;
  j["refinement"] = c.refinement;
  j["tau"] = c.tau;
  j["max_snapshots"] = c.max_snapshots;
  j["t_end"] = c.t_end;
  j["epsilon0"] = c.epsilon0;
  j["t0_floor"] = c.t0_floor;
  Json checks = Json::array();
  for (Check k : c.checks) checks.push_back(check_name(k));
  j["checks"] = checks;
  j["seed"] = c.seed;
  j["pairs"] = c.pairs;
  j["exploratory"] = c.exploratory;
  j["thresholds"] = {{"convexity", c.thresholds.convexity},
                     {"slack", c.thresholds.slack},
                     {"lower_bound_floor", c.thresholds.lower_bound_floor},
                     {"cross_term_max", c.thresholds.cross_term_max},
                     {"hardy_ratio_max", c.thresholds.hardy_ratio_max},
                     {"b_sup_ratio_max", c.thresholds.b_sup_ratio_max}};
  return j;
}

std::uint64_t effective_seed(const ScenarioConfig& cfg) {
  const char* env = std::getenv("HEATFLOW_SEED");
  if (!env || !*env) return cfg.seed;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || env[0] == '-') throw ConfigError("HEATFLOW_SEED must be a non-negative integer");
  return v;
}

manifold::TargetManifold make_target(const TargetSpec& spec) {
  if (spec.kind == "sphere") return manifold::TargetManifold::sphere(3);
  if (spec.kind == "torus") return manifold::TargetManifold::torus(spec.major, spec.minor);
  if (spec.kind == "clifford") return manifold::TargetManifold::clifford();
  throw ConfigError("unknown target '" + spec.kind + "'");
}

InitialData build_initial_data(const ScenarioConfig& cfg, const manifold::TargetManifold& N,
                               const MeshPtr& mesh) {
  InitialData out;
  const auto [e1, e2] = N.base_tangents();
  double s = 1.0;
  for (int attempt = 0; attempt <= 10; ++attempt) {
    try {
      Field trace = mesh::interpolate(mesh, [&](const mesh::Vec2& x) {
        return boundary_point(cfg.boundary, N, std::atan2(x.y(), x.x()), s);
      });
      Field u = flow::harmonic_initial_map(trace, N);
      const double a = s * cfg.initial_perturbation;
      if (a > 0.0)
        for (int v : mesh->interior_vertices()) {
          const double r2 = mesh->vertex(v).squaredNorm();
          u.values().row(v) = N.project(u.at(v) + a * (1.0 - r2) * e1).transpose();
        }
      out.u0 = u;
      out.energy = flow::dirichlet_energy(u).raw;
      out.scale = s;
      out.shrink_steps = attempt;
      if (out.energy < cfg.epsilon0) {
        out.feasible = true;
        return out;
      }
    } catch (const MedialAxisError&) {
      out.scale = s;
      out.shrink_steps = attempt;
    }
    s *= 0.9;
  }
  return out;
}

RunOutput run_scenario(const ScenarioConfig& cfg) {
  RunOutput out;
  Json& rep = out.report;
  const std::uint64_t seed = effective_seed(cfg);
  rep["artifact_version"] = kArtifactVersion;
  rep["config"] = config_to_json(cfg);
  rep["seed"] = seed;

  const auto N = make_target(cfg.target);
  const auto mesh = mesh::build_disk_mesh(cfg.refinement);
  rep["mesh"] = {{"refinement", cfg.refinement},
                 {"vertices", mesh->num_vertices()},
                 {"triangles", mesh->num_triangles()},
                 {"h", mesh->h()},
                 {"min_angle_degrees", mesh->min_angle_degrees()}};

  const auto init = build_initial_data(cfg, N, mesh);
  rep["initial"] = {{"energy", init.u0.mesh() ? init.energy : 0.0},
                    {"scale", init.scale},
                    {"shrink_steps", init.shrink_steps},
                    {"feasible", init.feasible}};
  Json& checks = rep["checks"];
  checks = Json::object();
  if (!init.feasible) {
    for (Check k : cfg.checks)
      checks[check_name(k)] = verdict("skipped", "no small-energy initial map for this family");
    out.verdict = "infeasible";
    rep["verdict"] = out.verdict;
    return out;
  }

  flow::FlowOptions fo;
  fo.t_end = cfg.t_end;
  fo.tau = cfg.tau;
  fo.max_snapshots = cfg.max_snapshots;
  fo.epsilon0 = cfg.epsilon0;
  fo.t0_floor = cfg.t0_floor;
  out.trajectory = flow::run_flow(N, init.u0, fo);
  const auto& traj = out.trajectory;
  const auto& ms = traj.monitors;
  rep["trajectory"] = {{"steps", static_cast<int>(ms.size()) - 1},
                       {"snapshots", traj.snapshots.size()},
                       {"tau_initial", traj.tau_initial},
                       {"tau_final", traj.tau_final},
                       {"halvings", traj.halvings},
                       {"energy_violations", traj.energy_violations},
                       {"max_energy_increase", traj.max_energy_increase},
                       {"initial_energy", ms.front().e_raw},
                       {"final_energy", ms.back().e_raw},
                       {"final_ut_l2", std::sqrt(ms.back().ut_sq)},
                       {"final_tension_l2", ms.back().tension_l2},
                       {"t0", traj.t0 ? Json(*traj.t0) : Json(nullptr)}};

  const auto& th = cfg.thresholds;
  const bool want_chain = std::find(cfg.checks.begin(), cfg.checks.end(), Check::Gauge) !=
                              cfg.checks.end() ||
                          std::find(cfg.checks.begin(), cfg.checks.end(), Check::Hardy) !=
                              cfg.checks.end();
  std::vector<std::pair<int, ChainResult>> chains;
  std::string chain_error;
  if (want_chain && traj.t0) {
    for (int k : late_sample(traj, 3)) {
      const auto& s = traj.snapshots[k];
      try {
        chains.emplace_back(k, run_chain(N, s.u, s.ut, cfg.epsilon0, seed + k,
                                         th.lower_bound_floor));
      } catch (const Error& e) {
        chain_error = "t=" + fmt(s.t) + ": " + e.what();
        break;
      }
    }
  }

  for (Check k : cfg.checks) {
    Json c;
    switch (k) {
      case Check::Convexity: {
        if (!traj.t0) {
          c = verdict("skipped", "T0 not detected");
          break;
        }
        const auto r = flow::convexity_report(traj, cfg.pairs, seed, th.convexity, th.slack);
        const bool enough = r.non_degenerate >= cfg.pairs;
        c = verdict(r.failures == 0 && enough ? "pass" : "fail",
                    r.failures > 0  ? std::to_string(r.failures) + " pairs below threshold"
                    : !enough       ? "only " + std::to_string(r.non_degenerate) +
                                    " non-degenerate pairs"
                                    : "");
        c["min_ratio"] = r.min_ratio;
        c["pairs"] = r.non_degenerate;
        c["degenerate"] = r.degenerate;
        c["failures"] = r.failures;
        c["threshold"] = th.convexity - th.slack;
        const auto st = flow::stationary_convexity(traj);
        c["stationary_min_ratio"] = st.min_ratio;
        break;
      }
      case Check::UtMonotone: {
        if (!traj.t0) {
          c = verdict("skipped", "T0 not detected");
          break;
        }
        const auto r = flow::ut_monotonicity_check(traj, 1e-10, cfg.pairs, seed);
        const bool ok = r.violations == 0 && r.mean_value_violations == 0;
        c = verdict(ok ? "pass" : "fail", ok ? "" : "u_t norm grew after T0");
        c["violations"] = r.violations;
        c["mean_value_pairs"] = r.mean_value_pairs;
        c["mean_value_violations"] = r.mean_value_violations;
        break;
      }
      case Check::DecayIdentity: {
        const auto it = std::lower_bound(
            ms.begin(), ms.end(), 1.0 - 1e-12,
            [](const flow::Monitor& m, double v) { return m.t < v; });
        const int k1 = static_cast<int>(it - ms.begin());
        const int k2 = static_cast<int>(ms.size()) - 1;
        const double diss = flow::dissipation(traj, k1, k2);
        const double drop = ms[k1].e_raw - ms[k2].e_raw;
        const double res = std::abs(diss - drop);
        // The scheme's defect is O(τ) relative to the dissipated energy.
        const double allowed = 10.0 * traj.tau_final * diss + 1e-12 * ms.front().e_raw;
        c = verdict(res <= allowed ? "pass" : "fail",
                    res <= allowed ? "" : "residual above 10 tau x dissipation");
        c["t1"] = ms[k1].t;
        c["t2"] = ms[k2].t;
        c["dissipation"] = diss;
        c["energy_drop"] = drop;
        c["residual"] = res;
        c["allowed"] = allowed;
        break;
      }
      case Check::CrossTerm: {
        if (!traj.t0) {
          c = verdict("skipped", "T0 not detected");
          break;
        }
        const auto r = flow::convexity_report(traj, cfg.pairs, seed + 17, th.convexity, th.slack);
        double worst = 0.0;
        int used = 0;
        for (const auto& p : r.pairs) {
          const flow::Snapshot *a = nullptr, *b = nullptr;
          for (const auto& s : traj.snapshots) {
            if (s.t == p.t1) a = &s;
            if (s.t == p.t2) b = &s;
          }
          if (!a || !b) continue;
          const auto ct = flow::cross_term_check(*a, *b, cfg.epsilon0);
          if (ct.degenerate) continue;
          worst = std::max(worst, ct.constant);
          ++used;
        }
        const bool ok = used > 0 && worst <= th.cross_term_max;
        c = verdict(ok ? "pass" : "fail",
                    used == 0 ? "no non-degenerate pairs" : ok ? "" : "constant above maximum");
        c["max_constant"] = worst;
        c["pairs"] = used;
        break;
      }
      case Check::Gauge: {
        if (!traj.t0) {
          c = verdict("skipped", "T0 not detected");
          break;
        }
        std::vector<std::string> failures;
        Json snaps = Json::array();
        double bmax = 0.0;
        for (const auto& [idx, ch] : chains) {
          Json s = ch.metrics;
          s["t"] = traj.snapshots[idx].t;
          snaps.push_back(s);
          for (const auto& f : ch.gauge_failures) failures.push_back("t=" + fmt(traj.snapshots[idx].t) + ": " + f);
          bmax = std::max(bmax, ch.b_ratio);
        }
        if (!chain_error.empty()) failures.push_back(chain_error);
        if (bmax > th.b_sup_ratio_max) failures.push_back("|B|_inf / E above maximum");
        c = verdict(failures.empty() ? "pass" : "fail", failures.empty() ? "" : failures.front());
        c["b_sup_ratio_max"] = bmax;
        c["snapshots"] = snaps;
        break;
      }
      case Check::Hardy: {
        const auto r = hardy::h1_energy_check(traj);
        if (r.skipped) {
          c = verdict("skipped", r.reason);
          break;
        }
        std::vector<std::string> failures;
        Json samples = Json::array();
        for (const auto& s : r.samples) {
          samples.push_back({{"t", s.t},
                             {"h1_density", s.h1_density},
                             {"h1_over_energy", s.h1_over_energy},
                             {"poisson_constant", s.poisson_constant}});
          if (s.h1_density < s.energy * (1.0 - 1e-8)) failures.push_back("h1 norm below L1 norm");
        }
        if (r.max_ratio > th.hardy_ratio_max) failures.push_back("h1/E above maximum");
        int below = 0, evaluated = 0;
        double min_ratio = std::numeric_limits<double>::infinity();
        for (const auto& [idx, ch] : chains) {
          if (!ch.lower_ok) continue;
          below += ch.lower.below_floor;
          evaluated += ch.lower.evaluated;
          if (ch.lower.evaluated > 0) min_ratio = std::min(min_ratio, ch.lower.min_ratio);
        }
        if (!chain_error.empty()) failures.push_back(chain_error);
        if (below > 0) failures.push_back("pointwise lower bound below floor");
        c = verdict(failures.empty() ? "pass" : "fail", failures.empty() ? "" : failures.front());
        c["max_ratio"] = r.max_ratio;
        c["poisson_constant_min"] = r.min_poisson_constant;
        c["poisson_constant_max"] = r.max_poisson_constant;
        c["samples"] = samples;
        c["lower_bound"] = {{"min_ratio", evaluated > 0 ? min_ratio : 0.0},
                            {"evaluated", evaluated},
                            {"below_floor", below},
                            {"floor", th.lower_bound_floor}};
        rep["hardy"] = samples;
        break;
      }
      case Check::Cauchy: {
        if (!traj.t0) {
          c = verdict("skipped", "T0 not detected");
          break;
        }
        const auto r = flow::cauchy_certificate(traj, th.slack);
        c = verdict(r.pass ? "pass" : "fail", r.pass ? "" : "certificate above slack");
        c["value"] = r.value;
        c["max_denominator"] = r.max_denominator;
        c["pairs"] = r.pairs;
        break;
      }
    }
    checks[check_name(k)] = c;
  }

  bool pass = true;
  for (const auto& [name, c] : checks.items())
    if (c["verdict"] == "fail") pass = false;
  out.verdict = pass ? "pass" : "fail";
  rep["verdict"] = out.verdict;
  return out;
}

std::string dump_report(const Json& report) {
  std::vector<std::string> bad;
  collect_nonfinite(report, "", bad);
  if (!bad.empty()) throw InputError("report has a non-finite value at " + bad.front());
  return report.dump(2) + "\n";
}

void write_outputs(const RunOutput& out, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string text = dump_report(out.report);
  std::ofstream(dir / "report.json") << text;
  if (out.trajectory.monitors.empty()) return;
  std::ofstream csv(dir / "trajectory.csv");
  flow::write_trajectory_csv(csv, out.trajectory);
  const auto& last = out.trajectory.snapshots.back();
  std::ofstream fu(dir / "u_final.field");
  mesh::write_field(fu, last.u, last.t);
  std::ofstream fut(dir / "ut_final.field");
  mesh::write_field(fut, last.ut, last.t);
}

SuiteResult verify_suite(const fs::path& dir, int jobs, const std::optional<fs::path>& out_dir) {
  if (!fs::is_directory(dir)) throw UsageError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  if (files.empty()) throw UsageError(dir.string() + ": no scenario configs (*.json)");
  std::sort(files.begin(), files.end());

  std::vector<Json> results(files.size());
  std::vector<int> gate(files.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      Json r;
      r["config"] = files[i].filename().string();
      bool exploratory = false;
      try {
        const auto cfg = load_config(files[i]);
        exploratory = cfg.exploratory;
        r["name"] = cfg.name;
        const auto out = run_scenario(cfg);
        if (out_dir) write_outputs(out, *out_dir / cfg.name);
        r["verdict"] = out.verdict;
        r["exploratory"] = exploratory;
        Json failed = Json::array();
        for (const auto& [name, c] : out.report["checks"].items())
          if (c["verdict"] == "fail") failed.push_back(name);
        r["failed_checks"] = failed;
        r["checks"] = out.report["checks"];
        gate[i] = !exploratory && out.verdict != "pass";
      } catch (const std::exception& e) {
        r["verdict"] = "error";
        r["error"] = e.what();
        gate[i] = 1;
      }
      results[i] = std::move(r);
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(files.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SuiteResult res;
  Json scenarios = Json::array();
  double bmin = std::numeric_limits<double>::infinity(), bmax = 0.0, hmax = 0.0;
  double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    Json s = results[i];
    if (s.contains("checks")) {
      const auto& ch = s["checks"];
      if (ch.contains("gauge") && ch["gauge"].contains("snapshots") && !s["exploratory"].get<bool>())
        for (const auto& snap : ch["gauge"]["snapshots"])
          if (snap.contains("b_sup")) {
            const double r = snap["b_sup"]["ratio"].get<double>();
            bmin = std::min(bmin, r);
            bmax = std::max(bmax, r);
          }
      if (ch.contains("hardy") && ch["hardy"].contains("max_ratio") &&
          !s["exploratory"].get<bool>()) {
        hmax = std::max(hmax, ch["hardy"]["max_ratio"].get<double>());
        for (const auto& smp : ch["hardy"]["samples"]) {
          cmin = std::min(cmin, smp["poisson_constant"].get<double>());
          cmax = std::max(cmax, smp["poisson_constant"].get<double>());
        }
      }
      s.erase("checks");
    }
    scenarios.push_back(s);
    if (gate[i]) res.exit_code = 1;
  }
  res.aggregate["artifact_version"] = kArtifactVersion;
  res.aggregate["scenarios"] = scenarios;
  Json constants;
  if (bmax > 0.0) constants["b_sup_ratio"] = {{"min", bmin}, {"max", bmax}};
  if (hmax > 0.0) constants["h1_over_energy_max"] = hmax;
  if (cmax > 0.0) constants["poisson_constant"] = {{"min", cmin}, {"max", cmax}};
  res.aggregate["constants"] = constants;
  res.aggregate["verdict"] = res.exit_code == 0 ? "pass" : "fail";
  return res;
}

Json gauge_diagnostics(const manifold::TargetManifold& N, const Field& u, const Field& ut,
                       double epsilon0, std::uint64_t seed) {
  auto ch = run_chain(N, u, ut, epsilon0, seed, 0.2);
  Json j = ch.metrics;
  Json f = Json::array();
  for (const auto& s : ch.gauge_failures) f.push_back(s);
  j["failures"] = f;
  return j;
}

Json hardy_diagnostics(const manifold::TargetManifold& N, const Field& u, double epsilon0,
                       std::uint64_t seed) {
  hardy::HardyEstimator est(u.mesh());
  const Eigen::VectorXd dens = hardy::energy_density(u);
  const double h1 = est.h1_norm(dens);
  const double e = flow::dirichlet_energy(u).raw;
  const auto psi = elliptic::psi_energy_density(u);
  Json j;
  j["energy"] = e;
  j["h1_density"] = h1;
  j["h1_over_energy"] = e > 0.0 ? h1 / e : 0.0;
  j["poisson_constant"] = h1 > 0.0 ? (psi.linf + psi.grad_l2) / h1 : 0.0;
  auto ch = run_chain(N, u, Field(), epsilon0, seed, 0.2);
  j["lower_bound"] = ch.metrics.contains("lower_bound") ? ch.metrics["lower_bound"] : Json(nullptr);
  return j;
}

}  // namespace heatflow::lab
