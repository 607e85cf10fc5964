#include <cmath>
#include <numbers>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "heatflow/error.hpp"
#include "heatflow/mesh.hpp"

using namespace heatflow;
using namespace heatflow::mesh;

namespace {

constexpr double kPi = std::numbers::pi;

Field coordinate(const MeshPtr& m, int axis) {
  return interpolate_scalar(m, [axis](const Vec2& x) { return x[axis]; });
}

Field random_field(const MeshPtr& m, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(m->num_vertices());
  for (auto& x : v) x = nd(rng);
  return Field::scalar(m, v);
}

}  // namespace

TEST_CASE("disk mesh invariants") {
  for (int level = 0; level <= 4; ++level) {
    auto m = build_disk_mesh(level);
    CAPTURE(level);
    for (int i = 0; i < m->num_vertices(); ++i) {
      const double r = m->vertex(i).norm();
      CHECK(r <= 1.0 + 1e-12);
      if (m->is_boundary(i)) CHECK(r >= 1.0 - 2.0 * m->h() * m->h());
    }
    CHECK(m->min_angle_degrees() >= 20.0);

    // Conformity: every edge is shared by at most two triangles, and
    // boundary edges (one triangle) join boundary vertices only.
    std::map<std::pair<int, int>, int> edges;
    for (const auto& t : m->triangles())
      for (int a = 0; a < 3; ++a) {
        int i = t[a], j = t[(a + 1) % 3];
        edges[{std::min(i, j), std::max(i, j)}]++;
      }
    for (const auto& [e, count] : edges) {
      CHECK(count <= 2);
      if (count == 1) CHECK((m->is_boundary(e.first) && m->is_boundary(e.second)));
    }
  }
}

TEST_CASE("build_disk_mesh areas and refinement") {
  auto coarse = build_disk_mesh(0);
  CHECK(std::abs(coarse->total_area() - kPi) / kPi < 0.05);
  auto fine = build_disk_mesh(3);
  CHECK(std::abs(fine->total_area() - kPi) / kPi < 1e-3);
  CHECK(fine->h() == doctest::Approx(coarse->h() / 8.0).epsilon(0.15));
  CHECK_THROWS_AS(build_disk_mesh(11), ConfigError);
  CHECK_THROWS_AS(build_disk_mesh(-1), ConfigError);

  // Deterministic ordering.
  auto again = build_disk_mesh(3);
  REQUIRE(again->num_vertices() == fine->num_vertices());
  for (int i = 0; i < fine->num_vertices(); ++i) CHECK(again->vertex(i) == fine->vertex(i));
  for (int t = 0; t < fine->num_triangles(); ++t) CHECK(again->triangle(t) == fine->triangle(t));
}

TEST_CASE("gradient and perp_gradient") {
  auto m = build_disk_mesh(3);
  auto gx = gradient(coordinate(m, 0));
  CHECK((gx.x.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(gx.y.array().abs().maxCoeff() < 1e-12);

  auto gc = gradient(interpolate_scalar(m, [](const Vec2&) { return 3.5; }));
  CHECK(gc.x.array().abs().maxCoeff() < 1e-12);
  CHECK(gc.y.array().abs().maxCoeff() < 1e-12);

  auto px = perp_gradient(coordinate(m, 0));
  CHECK(px.x.array().abs().maxCoeff() < 1e-12);
  CHECK((px.y.array() - 1.0).abs().maxCoeff() < 1e-12);
  auto py = perp_gradient(coordinate(m, 1));
  CHECK((py.x.array() + 1.0).abs().maxCoeff() < 1e-12);

  // r² → (2x, 2y) with O(h) centroid error.
  auto r2 = interpolate_scalar(m, [](const Vec2& x) { return x.squaredNorm(); });
  auto g = gradient(r2);
  double err = 0.0;
  for (int t = 0; t < m->num_triangles(); ++t) {
    const Vec2 c = m->centroid(t);
    err = std::max(err, std::hypot(g.x(t, 0) - 2 * c.x(), g.y(t, 0) - 2 * c.y()));
  }
  CHECK(err < 2.0 * m->h());

  std::mt19937_64 rng(7);
  auto f = random_field(m, rng);
  auto gf = gradient(f);
  auto pf = perp_gradient(f);
  const Eigen::ArrayXd dots = gf.x.array() * pf.x.array() + gf.y.array() * pf.y.array();
  CHECK(dots.abs().maxCoeff() < 1e-9);
}

TEST_CASE("gradient is linear") {
  auto m = build_disk_mesh(2);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_field(m, rng);
    auto b = random_field(m, rng);
    auto sum = Field::scalar(m, a.values().col(0) + b.values().col(0));
    auto ga = gradient(a), gb = gradient(b), gs = gradient(sum);
    CHECK((gs.x - ga.x - gb.x).cwiseAbs().maxCoeff() < 1e-12 * (1 + gs.x.cwiseAbs().maxCoeff()));
    CHECK((gs.y - ga.y - gb.y).cwiseAbs().maxCoeff() < 1e-12 * (1 + gs.y.cwiseAbs().maxCoeff()));
    auto pa = perp_gradient(a), pb = perp_gradient(b), ps = perp_gradient(sum);
    CHECK((ps.x - pa.x - pb.x).cwiseAbs().maxCoeff() < 1e-12 * (1 + ps.x.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("jacobian_product") {
  auto m = build_disk_mesh(3);
  auto x = coordinate(m, 0);
  auto y = coordinate(m, 1);
  CHECK((jacobian_product(x, y).array() + 1.0).abs().maxCoeff() < 1e-12);
  CHECK(jacobian_product(x, x).array().abs().maxCoeff() < 1e-12);

  auto r2 = interpolate_scalar(m, [](const Vec2& p) { return p.squaredNorm(); });
  // a_y b_x − a_x b_y = 2y for a = r², b = x.
  auto j = jacobian_product(r2, x);
  double err = 0.0;
  for (int t = 0; t < m->num_triangles(); ++t) err = std::max(err, std::abs(j[t] - 2 * m->centroid(t).y()));
  CHECK(err < 2.0 * m->h());

  auto other = build_disk_mesh(2);
  CHECK_THROWS_AS(jacobian_product(x, coordinate(other, 0)), UsageError);
}

TEST_CASE("jacobian integral depends only on boundary values") {
  auto m = build_disk_mesh(2);
  std::mt19937_64 rng(3);
  auto f = random_field(m, rng);
  auto g = random_field(m, rng);
  auto total = [&](const Field& a) {
    Eigen::VectorXd j = jacobian_product(a, g);
    double s = 0.0;
    for (int t = 0; t < m->num_triangles(); ++t) s += m->area(t) * j[t];
    return s;
  };
  const double base = total(f);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd v = f.values().col(0);
    for (int i : m->interior_vertices()) v[i] = nd(rng);
    const double changed = total(Field::scalar(m, v));
    CHECK(std::abs(changed - base) <= 1e-10 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("norms") {
  auto m = build_disk_mesh(3);
  auto one = interpolate_scalar(m, [](const Vec2&) { return 1.0; });
  auto n1 = norms(one);
  CHECK(n1.l1 == doctest::Approx(m->total_area()).epsilon(1e-12));
  CHECK(n1.l2 * n1.l2 == doctest::Approx(m->total_area()).epsilon(1e-12));
  CHECK(m->total_area() == doctest::Approx(kPi).epsilon(1e-3));

  auto zero = interpolate_scalar(m, [](const Vec2&) { return 0.0; });
  auto n0 = norms(zero);
  CHECK(n0.l1 == 0.0);
  CHECK(n0.l2 == 0.0);
  CHECK(n0.linf == 0.0);

  // ∫ x² over B₁ = π/4.
  double prev = 1.0;
  for (int level = 2; level <= 5; ++level) {
    auto mm = build_disk_mesh(level);
    const double l2sq = std::pow(norms(coordinate(mm, 0)).l2, 2);
    const double err = std::abs(l2sq - kPi / 4);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-3);

  // Exact for degree ≤ 1 fields against an independent midpoint-rule oracle.
  auto lin = interpolate_scalar(m, [](const Vec2& p) { return 0.3 + 2 * p.x() - 1.1 * p.y(); });
  double oracle = 0.0;
  for (int t = 0; t < m->num_triangles(); ++t) {
    const auto& tri = m->triangle(t);
    for (int a = 0; a < 3; ++a) {
      const Vec2 mid = 0.5 * (m->vertex(tri[a]) + m->vertex(tri[(a + 1) % 3]));
      const double v = 0.3 + 2 * mid.x() - 1.1 * mid.y();
      oracle += m->area(t) / 3.0 * v * v;
    }
  }
  CHECK(std::abs(norms(lin).l2 - std::sqrt(oracle)) <= 1e-12 * std::sqrt(oracle));
}

TEST_CASE("weak_div_curl") {
  auto m = build_disk_mesh(4);
  auto interior_max = [&](const Field& f, double target) {
    double e = 0.0;
    for (int i : m->interior_vertices()) e = std::max(e, std::abs(f.values()(i, 0) - target));
    return e;
  };
  auto constant = CellVectorField::zeros(m, 1);
  constant.x.setOnes();
  auto [d0, c0] = weak_div_curl(constant);
  CHECK(interior_max(d0, 0.0) < 1e-10);
  CHECK(interior_max(c0, 0.0) < 1e-10);

  auto r2 = interpolate_scalar(m, [](const Vec2& p) { return p.squaredNorm(); });
  auto [d1, c1] = weak_div_curl(gradient(r2));
  CHECK(interior_max(d1, 4.0) < 10 * m->h());
  CHECK(interior_max(c1, 0.0) < 1e-10);

  auto rot = CellVectorField::zeros(m, 1);
  for (int t = 0; t < m->num_triangles(); ++t) {
    rot.x(t, 0) = -m->centroid(t).y();
    rot.y(t, 0) = m->centroid(t).x();
  }
  auto [d2, c2] = weak_div_curl(rot);
  CHECK(interior_max(c2, 2.0) < 10 * m->h());
  CHECK(interior_max(d2, 0.0) < 10 * m->h());
}

TEST_CASE("interpolate") {
  auto m = build_disk_mesh(3);
  Eigen::Vector3d p0(0.1, 0.2, 0.3);
  auto c = interpolate(m, [&](const Vec2&) -> Eigen::VectorXd { return p0; });
  CHECK(c.dim() == 3);
  CHECK((c.values().rowwise() - p0.transpose()).cwiseAbs().maxCoeff() == 0.0);

  auto id = interpolate(m, [](const Vec2& x) -> Eigen::VectorXd { return x; });
  for (int i = 0; i < m->num_vertices(); ++i) CHECK(id.at(i) == m->vertex(i));

  auto stereo = interpolate(m, [](const Vec2& x) -> Eigen::VectorXd {
    const double r2 = x.squaredNorm();
    return Eigen::Vector3d(2 * x.x(), 2 * x.y(), 1 - r2) / (1 + r2);
  });
  for (int i = 0; i < m->num_vertices(); ++i) CHECK(std::abs(stereo.at(i).norm() - 1.0) < 1e-14);

  CHECK_THROWS_AS(interpolate_scalar(m, [](const Vec2& x) { return 1.0 / (x.norm() == 0 ? 0.0 : 1.0) - INFINITY; }),
                  InputError);
}

TEST_CASE("mesh and field text formats") {
  auto m = build_disk_mesh(1);
  std::stringstream ss;
  write_mesh(ss, *m);
  auto back = read_mesh(ss);
  REQUIRE(back->num_vertices() == m->num_vertices());
  REQUIRE(back->num_triangles() == m->num_triangles());
  for (int i = 0; i < m->num_vertices(); ++i) {
    CHECK(back->vertex(i) == m->vertex(i));
    CHECK(back->is_boundary(i) == m->is_boundary(i));
  }

  std::stringstream first_line;
  write_mesh(first_line, *m);
  std::string header;
  std::getline(first_line, header);
  CHECK(header == std::to_string(m->num_vertices()) + " " + std::to_string(m->num_triangles()));

  auto f = interpolate(m, [](const Vec2& x) -> Eigen::VectorXd { return Eigen::Vector3d(x.x(), x.y(), 0.25); });
  std::stringstream fs;
  write_field(fs, f, 1.5);
  auto [t, g] = read_field(fs, m);
  CHECK(t == 1.5);
  CHECK((g.values() - f.values()).cwiseAbs().maxCoeff() == 0.0);

  std::stringstream bad("0.0 3\n1 2");
  CHECK_THROWS_AS(read_field(bad, m), InputError);
}

TEST_CASE("locate and neighbourhood queries") {
  auto m = build_disk_mesh(3);
  for (Vec2 p : {Vec2(0, 0), Vec2(0.3, -0.4), Vec2(-0.7, 0.05)}) {
    auto hit = m->locate(p);
    REQUIRE(hit);
    const auto& tri = m->triangle(hit->first);
    Vec2 q = Vec2::Zero();
    for (int a = 0; a < 3; ++a) q += hit->second[a] * m->vertex(tri[a]);
    CHECK((q - p).norm() < 1e-12);
  }
  CHECK_FALSE(m->locate(Vec2(1.2, 0.0)));

  int brute = 0, fast = 0;
  const Vec2 c(0.2, 0.1);
  const double radius = 0.3;
  for (int t = 0; t < m->num_triangles(); ++t)
    if ((m->centroid(t) - c).norm() < radius) ++brute;
  std::set<int> seen;
  m->for_each_triangle_near(c, radius, [&](int t) {
    CHECK(seen.insert(t).second);
    if ((m->centroid(t) - c).norm() < radius) ++fast;
  });
  CHECK(fast == brute);
}
