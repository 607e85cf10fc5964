#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "heatflow/flow.hpp"
#include "heatflow/manifold.hpp"
#include "heatflow/mesh.hpp"

namespace support {

using heatflow::manifold::ConnectionForm;
using heatflow::manifold::TargetManifold;
using heatflow::mesh::Field;
using heatflow::mesh::MeshPtr;
using heatflow::mesh::Vec2;
using Mat3 = Eigen::Matrix3d;

// Inverse stereographic projection scaled by lambda, valued in S² ⊂ R³.
inline Field stereographic(const MeshPtr& m, double lambda) {
  return heatflow::mesh::interpolate(m, [lambda](const Vec2& x) {
    const double r2 = lambda * lambda * x.squaredNorm();
    Eigen::VectorXd v(3);
    v << 2 * lambda * x(0), 2 * lambda * x(1), 1 - r2;
    return Eigen::VectorXd(v / (1 + r2));
  });
}

// Harmonic extension of a projected circle of radius delta around the base
// point, bent by a(1 − r²) along the first tangent.
inline Field cap_map(const MeshPtr& m, const TargetManifold& N, double delta, double a = 0.0) {
  const auto p0 = N.base_point();
  const auto [e1, e2] = N.base_tangents();
  Field trace = heatflow::mesh::interpolate(m, [&](const Vec2& x) {
    const double th = std::atan2(x(1), x(0));
    return N.project(p0 + delta * (std::cos(th) * e1 + std::sin(th) * e2));
  });
  Field u = heatflow::flow::harmonic_initial_map(trace, N);
  if (a != 0.0)
    for (int v : m->interior_vertices()) {
      const double r2 = m->vertex(v).squaredNorm();
      u.values().row(v) = N.project(u.at(v) + a * (1 - r2) * e1).transpose();
    }
  return u;
}

inline Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

inline Mat3 rot_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

inline Mat3 drot_z(double a) {
  Mat3 r;
  r << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return r;
}

inline Mat3 drot_x(double a) {
  Mat3 r;
  r << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return r;
}

// Synthetic gauge: P̂ = R_z(α)R_x(β) with α(0) = β(0) = 0, and ξ̂ skew with
// zero trace. Ω = P̂∇⊥ξ̂P̂ᵀ − ∇P̂P̂ᵀ makes P̂ᵀ∇P̂ + P̂ᵀΩP̂ = ∇⊥ξ̂ exactly.
struct SyntheticGauge {
  double s = 0.3;  // rotation amplitude
  double b = 0.3;  // ξ̂ amplitude

  double alpha(const Vec2& x) const { return s * (x(0) + 0.5 * x(1) * x(1)); }
  Vec2 dalpha(const Vec2& x) const { return s * Vec2(1.0, x(1)); }
  double beta(const Vec2& x) const { return s * (x(1) - 0.3 * x(0) * x(1)); }
  Vec2 dbeta(const Vec2& x) const { return s * Vec2(-0.3 * x(1), 1.0 - 0.3 * x(0)); }

  Mat3 P(const Vec2& x) const { return rot_z(alpha(x)) * rot_x(beta(x)); }
  Mat3 dP(const Vec2& x, int d) const {
    return drot_z(alpha(x)) * rot_x(beta(x)) * dalpha(x)(d) +
           rot_z(alpha(x)) * drot_x(beta(x)) * dbeta(x)(d);
  }

  Mat3 xi(const Vec2& x) const {
    const double w = b * (1.0 - x.squaredNorm());
    Mat3 m = Mat3::Zero();
    m(0, 1) = w;
    m(0, 2) = w * x(0);
    m(1, 2) = w * (x(1) + 0.5);
    return m - m.transpose();
  }
  Mat3 dxi(const Vec2& x, int d) const {
    const double w = b * (1.0 - x.squaredNorm());
    const double dw = -2.0 * b * x(d);
    Mat3 m = Mat3::Zero();
    m(0, 1) = dw;
    m(0, 2) = dw * x(0) + (d == 0 ? w : 0.0);
    m(1, 2) = dw * (x(1) + 0.5) + (d == 1 ? w : 0.0);
    return m - m.transpose();
  }
  // ∇⊥ξ̂ = (−∂_y ξ̂, ∂_x ξ̂)
  Mat3 perp_xi(const Vec2& x, int d) const { return d == 0 ? Mat3(-dxi(x, 1)) : dxi(x, 0); }

  ConnectionForm omega(const MeshPtr& m) const {
    auto w = ConnectionForm::zeros(m, 3);
    for (int t = 0; t < m->num_triangles(); ++t) {
      const Vec2 c = m->centroid(t);
      const Mat3 p = P(c);
      w.x[t] = p * perp_xi(c, 0) * p.transpose() - dP(c, 0) * p.transpose();
      w.y[t] = p * perp_xi(c, 1) * p.transpose() - dP(c, 1) * p.transpose();
    }
    return w;
  }

  Field P_field(const MeshPtr& m) const { return matrix_field(m, [&](const Vec2& x) { return P(x); }); }
  Field xi_field(const MeshPtr& m) const {
    return matrix_field(m, [&](const Vec2& x) { return xi(x); });
  }

  // ∫|∇⊥ξ̂|² by the centroid rule on a fine mesh.
  double xi_energy(const MeshPtr& m) const {
    double e = 0.0;
    for (int t = 0; t < m->num_triangles(); ++t) {
      const Vec2 c = m->centroid(t);
      e += m->area(t) * (dxi(c, 0).squaredNorm() + dxi(c, 1).squaredNorm());
    }
    return e;
  }

  template <class F>
  static Field matrix_field(const MeshPtr& m, F&& f) {
    Field out = Field::zeros(m, heatflow::mesh::Shape::Matrix, 3);
    for (int v = 0; v < m->num_vertices(); ++v) out.set_matrix(v, f(m->vertex(v)));
    return out;
  }
};

}  // namespace support
