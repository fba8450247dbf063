#include <gtest/gtest.h>

#include <random>

#include "magray/geometry.hpp"

using namespace magray;

namespace {

// Lie bracket of two vector fields given as callables, by central differences.
template <class F, class G>
TangentVector bracket(F f, G g, const PhasePoint& p) {
  const double h = 1e-5;
  auto apply = [&](auto field, auto other) {
    // (field . grad) other
    TangentVector a = field(p);
    auto at = [&](double dx, double dy, double dt) { return other(PhasePoint{p.x + dx, p.y + dy, p.theta + dt}); };
    TangentVector px = (at(h, 0, 0) + at(-h, 0, 0) * -1.0) * (1 / (2 * h));
    TangentVector py = (at(0, h, 0) + at(0, -h, 0) * -1.0) * (1 / (2 * h));
    TangentVector pt = (at(0, 0, h) + at(0, 0, -h) * -1.0) * (1 / (2 * h));
    return px * a.x + py * a.y + pt * a.theta;
  };
  return apply(f, g) + apply(g, f) * -1.0;
}

}  // namespace

TEST(Geometry, FrameRelationsOnCurvedScene) {
  Scene s = make_scene(1, "0.2*x^2 - 0.1*y + 0.05*x*y", "0.4 + 0.1*x", {}, {}, {});
  auto X = [&](const PhasePoint& p) { return frame_fields(s, p).X; };
  auto Xp = [&](const PhasePoint& p) { return frame_fields(s, p).Xperp; };
  auto V = [&](const PhasePoint& p) { return frame_fields(s, p).V; };
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.6, 0.6), th(0, kTwoPi);
  for (int k = 0; k < 20; ++k) {
    PhasePoint p{u(rng), u(rng), th(rng)};
    // Xperp = [X, V]; [V, Xperp] = X.
    TangentVector a = bracket(X, V, p), b = Xp(p);
    EXPECT_NEAR(a.x, b.x, 1e-8);
    EXPECT_NEAR(a.y, b.y, 1e-8);
    EXPECT_NEAR(a.theta, b.theta, 1e-8);
    TangentVector c = bracket(V, Xp, p), d = X(p);
    EXPECT_NEAR(c.x, d.x, 1e-8);
    EXPECT_NEAR(c.y, d.y, 1e-8);
    EXPECT_NEAR(c.theta, d.theta, 1e-8);
    EXPECT_NEAR(speed(s, p), 1.0, 1e-14);
  }
}

TEST(Geometry, LorentzForceIsRotatedVelocity) {
  Scene s = make_scene(1, "0.1*x", "0.7", {}, {}, {});
  PhasePoint p{0.3, -0.2, 1.1};
  auto y = lorentz(s, p);
  const double e = std::exp(-0.03);
  EXPECT_NEAR(y[0], -0.7 * e * std::sin(1.1), 1e-15);
  EXPECT_NEAR(y[1], 0.7 * e * std::cos(1.1), 1e-15);
  // Orthogonal to v and of g-length |lambda|.
  EXPECT_NEAR(y[0] * std::cos(1.1) + y[1] * std::sin(1.1), 0.0, 1e-15);
  EXPECT_NEAR(metric_norm(s, p.x, p.y, y[0], y[1]), 0.7, 1e-14);
}

TEST(Geometry, BoundaryCoordinates) {
  for (double s : {0.0, 1.0, 3.0, 5.5})
    for (double phi : {-1.2, 0.0, 0.7}) {
      auto c = inflow_coords(inflow_point(s, phi));
      EXPECT_NEAR(c[0], s, 1e-13);
      EXPECT_NEAR(c[1], phi, 1e-13);
      auto d = outflow_coords(outflow_point(s, phi));
      EXPECT_NEAR(d[1], phi, 1e-13);
      // <v, nu> = cos(phi) with nu the inward normal.
      PhasePoint p = inflow_point(s, phi);
      EXPECT_NEAR(-(p.x * std::cos(p.theta) + p.y * std::sin(p.theta)), std::cos(phi), 1e-13);
    }
}

TEST(Geometry, ConvexityMargin) {
  Scene flat = make_scene(1, "0", "0", {}, {}, {});
  EXPECT_NEAR(convexity_margin(flat, 0.3, 1), 1.0, 1e-15);
  Scene strong = make_scene(1, "0", "2", {}, {}, {});
  EXPECT_NEAR(std::min(convexity_margin(strong, 0.3, 1), convexity_margin(strong, 0.3, -1)), -1.0, 1e-15);
  // Conformal factor: Lambda = e^{-sigma}(1 + d sigma / dr) on the unit circle.
  Scene curved = make_scene(1, "0.1*(x^2+y^2)", "0", {}, {}, {});
  EXPECT_NEAR(boundary_curvature(curved, 1.0), std::exp(-0.1) * 1.2, 1e-14);
}

TEST(Geometry, HodgeStar) {
  auto a = hodge_star_one<double>({1.0, 0.0});
  EXPECT_EQ(a[0], 0.0);
  EXPECT_EQ(a[1], 1.0);
  auto b = hodge_star_one<double>(hodge_star_one<double>({0.3, -0.4}));
  EXPECT_EQ(b[0], -0.3);
  EXPECT_EQ(b[1], 0.4);
}
