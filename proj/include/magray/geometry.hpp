#pragma once

#include <array>
#include <cmath>

#include "magray/scene.hpp"

namespace magray {

// Point of SM in coordinates (x, y, theta); the unit vector is v = e^{-sigma}(cos theta, sin theta).
struct PhasePoint {
  double x = 0, y = 0, theta = 0;
};

// Vector field value a d/dx + b d/dy + c d/dtheta.
struct TangentVector {
  double x = 0, y = 0, theta = 0;
  TangentVector operator+(const TangentVector& o) const { return {x + o.x, y + o.y, theta + o.theta}; }
  TangentVector operator*(double s) const { return {x * s, y * s, theta * s}; }
};

struct Frame {
  TangentVector X, Xperp, V, G;
};

// Geodesic vector field X, its rotation Xperp = [X, V], the vertical field V and G = X + lambda V.
inline Frame frame_fields(const MetricSample& m, double theta) {
  const double e = std::exp(-m.sigma), c = std::cos(theta), s = std::sin(theta);
  Frame f;
  f.X = {e * c, e * s, e * (-s * m.sx + c * m.sy)};
  f.Xperp = {e * s, -e * c, e * (c * m.sx + s * m.sy)};
  f.V = {0, 0, 1};
  f.G = {f.X.x, f.X.y, f.X.theta + m.lambda};
  return f;
}

inline Frame frame_fields(const Scene& scene, const PhasePoint& p) {
  return frame_fields(scene.metric(p.x, p.y), p.theta);
}

// Lorentz force Y(v) = lambda J v in Cartesian components.
inline std::array<double, 2> lorentz(const Scene& scene, const PhasePoint& p) {
  const MetricSample m = scene.metric(p.x, p.y);
  const double e = std::exp(-m.sigma);
  return {-m.lambda * e * std::sin(p.theta), m.lambda * e * std::cos(p.theta)};
}

inline double metric_norm(const Scene& scene, double x, double y, double vx, double vy) {
  return std::exp(scene.sigma(x, y)) * std::hypot(vx, vy);
}

// Unit speed of the encoded velocity; equals one up to rounding.
inline double speed(const Scene& scene, const PhasePoint& p) {
  const double e = std::exp(-scene.sigma(p.x, p.y));
  return metric_norm(scene, p.x, p.y, e * std::cos(p.theta), e * std::sin(p.theta));
}

// Hodge star on 1-forms a dx + b dy is conformally invariant: (a, b) -> (-b, a).
template <class T>
inline std::array<T, 2> hodge_star_one(const std::array<T, 2>& a) {
  return {-a[1], a[0]};
}
// Star of a 2-form F dx^dy.
inline double hodge_star_two_factor(const Scene& scene, double x, double y) { return std::exp(-2.0 * scene.sigma(x, y)); }
// Area density e^{2 sigma} (star of the constant function 1).
inline double area_density(const Scene& scene, double x, double y) { return std::exp(2.0 * scene.sigma(x, y)); }

// Inflow/outflow coordinates. Inflow angle phi is measured from the inward normal,
// outflow angle from the outward normal, both counterclockwise.
inline PhasePoint inflow_point(double s, double phi) {
  return {std::cos(s), std::sin(s), wrap_positive(s + kPi + phi)};
}
inline PhasePoint outflow_point(double s, double phi) { return {std::cos(s), std::sin(s), wrap_positive(s + phi)}; }

inline std::array<double, 2> inflow_coords(const PhasePoint& p) {
  const double s = wrap_positive(std::atan2(p.y, p.x));
  return {s, wrap_angle(p.theta - s - kPi)};
}
inline std::array<double, 2> outflow_coords(const PhasePoint& p) {
  const double s = wrap_positive(std::atan2(p.y, p.x));
  return {s, wrap_angle(p.theta - s)};
}

// Boundary measure density d mu = cos(phi) e^{sigma} ds dphi on the inflow boundary.
inline double mu_density(const Scene& scene, double s, double phi) {
  return std::cos(phi) * std::exp(scene.sigma(std::cos(s), std::sin(s)));
}

// Second fundamental form of the unit circle with respect to the inward normal, on unit tangents.
inline double boundary_curvature(const Scene& scene, double s) {
  const double x = std::cos(s), y = std::sin(s);
  const MetricSample m = scene.metric(x, y);
  return std::exp(-m.sigma) * (1.0 + x * m.sx + y * m.sy);
}

// Lambda(x, xi) - <Y xi, nu> for the counterclockwise (+1) or clockwise (-1) unit tangent.
inline double convexity_margin(const Scene& scene, double s, int orientation) {
  const double lam = scene.lambda(std::cos(s), std::sin(s));
  return boundary_curvature(scene, s) - orientation * lam;
}

}  // namespace magray
