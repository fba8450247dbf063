#include <gtest/gtest.h>

#include "magray/transport.hpp"

using namespace magray;

namespace {

Scene euclid(const std::string& phi = "0") { return make_scene(1, "0", "0", {"0"}, {"0"}, {phi}); }

Scene full_scene() {
  return make_scene(2, "0.1*(x^2 + y^2) + 0.05*x", "0.3 + 0.1*y", {"i*0.3*y", "0.2*x", "-0.2*x", "0"},
                    {"0", "0.1", "-0.1", "-i*0.2*x*y"}, {"i*0.5", "0", "0", "i*0.2*x"});
}

}  // namespace

TEST(Transport, ZeroAttenuationIsIdentity) {
  TransportSolution sol = solve_transport(euclid(), inflow_point(0.3, 0.2));
  for (const CMat& U : sol.U) EXPECT_LT((U - CMat::Identity(1, 1)).norm(), 1e-15);
}

TEST(Transport, ScalarHiggsExponential) {
  const double c = 0.7;
  Scene s = euclid("i*0.7");
  TransportSolution sol = solve_transport(s, inflow_point(1.0, 0.4));
  for (std::size_t i = 0; i < sol.t.size(); ++i) EXPECT_LT(std::abs(sol.U[i](0, 0) - std::polar(1.0, -c * sol.t[i])), 1e-10);
}

TEST(Transport, UnitarityOnFullScene) {
  Scene s = full_scene();
  for (double phi : {-1.2, 0.0, 0.9}) {
    TransportSolution sol = solve_transport(s, inflow_point(2.0, phi));
    for (const CMat& U : sol.U) EXPECT_LT(unitarity_defect(U), 1e-8);
    EXPECT_LT(sol.max_drift, 1e-10);
  }
}

TEST(Transport, SemigroupAlongRay) {
  Scene s = full_scene();
  FlowIntegrator flow(s);
  const PhasePoint p = inflow_point(0.5, 0.3);
  FlowState a = flow.start(p);
  for (int i = 0; i < 400; ++i) flow.step(a, 1e-3, true);
  FlowState b = flow.start(a.point());
  for (int i = 0; i < 300; ++i) flow.step(b, 1e-3, true);
  FlowState c = a;
  for (int i = 0; i < 300; ++i) flow.step(c, 1e-3, true);
  EXPECT_LT((c.U - b.U * a.U).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Transport, ScatteringDataAnalytic) {
  const double c = 0.7;
  BoundaryGrid g(16, 8);
  ScatteringData d = scattering_data(euclid("i*0.7"), g);
  for (int idx = 0; idx < g.size(); ++idx) {
    const double phi = g.phi[static_cast<std::size_t>(idx % g.nphi)];
    EXPECT_LT(std::abs(d.C[static_cast<std::size_t>(idx)](0, 0) - std::polar(1.0, -c * 2 * std::cos(phi))), 1e-9);
  }
  ScatteringData z = scattering_data(euclid(), g);
  for (const CMat& C : z.C) EXPECT_LT(std::abs(C(0, 0) - 1.0), 1e-15);
}

TEST(Transport, RayTransformAnalytic) {
  BoundaryGrid g(16, 12);
  ForwardRayTable t(euclid(), g, TableOptions{});
  BoundaryFn one = ray_transform(t, 1, [](double, double, double) { return CVec::Ones(1); });
  BoundaryFn dx = ray_transform(t, 1, [](double, double, double th) { return CVec::Constant(1, std::cos(th)); });
  for (int idx = 0; idx < g.size(); ++idx) {
    const double s = g.s[static_cast<std::size_t>(idx / g.nphi)], phi = g.phi[static_cast<std::size_t>(idx % g.nphi)];
    EXPECT_NEAR(one.at(idx).real(), 2 * std::cos(phi), 1e-9);
    const double xe = std::cos(s + kPi + 2 * phi);
    EXPECT_NEAR(dx.at(idx).real(), xe - std::cos(s), 1e-9);
  }
  const double c = 0.7;
  ForwardRayTable ta(euclid("i*0.7"), g, TableOptions{});
  BoundaryFn att = ray_transform(ta, 1, [](double, double, double) { return CVec::Ones(1); });
  for (int idx = 0; idx < g.size(); ++idx) {
    const double phi = g.phi[static_cast<std::size_t>(idx % g.nphi)];
    const cd expect = (std::polar(1.0, c * 2 * std::cos(phi)) - 1.0) / cd(0, c);
    EXPECT_LT(std::abs(att.at(idx) - expect), 1e-8);
  }
}

TEST(Transport, GridTransformMatchesAnalytic) {
  Scene s = full_scene();
  RandomFields rf(4);
  CompiledModes f(rf.modes(2, 2, 0.5));
  BoundaryGrid g(16, 8);
  ForwardRayTable t(s, g, TableOptions{});
  auto grid = std::make_shared<const SpatialGrid>(64);
  BoundaryFn exact = ray_transform(t, f);
  BoundaryFn approx = ray_transform(t, FiberGridFn::sample(grid, 16, f));
  BoundaryFn d = approx;
  d -= exact;
  EXPECT_LT(mu_norm(s, d) / mu_norm(s, exact), 1e-5);
}

TEST(Transport, Linearity) {
  Scene s = full_scene();
  RandomFields rf(8);
  CompiledModes f(rf.modes(2, 1)), h(rf.modes(2, 2));
  BoundaryGrid g(8, 6);
  ForwardRayTable t(s, g, TableOptions{});
  const cd a(0.3, -1.2), b(2.0, 0.5);
  BoundaryFn lhs = ray_transform(t, 2, [&](double x, double y, double th) { return CVec(a * f(x, y, th) + b * h(x, y, th)); });
  BoundaryFn rhs = ray_transform(t, f);
  rhs *= a;
  BoundaryFn hh = ray_transform(t, h);
  hh *= b;
  rhs += hh;
  for (std::size_t i = 0; i < lhs.v.size(); ++i) EXPECT_LT(std::abs(lhs.v[i] - rhs.v[i]), 1e-12 * (1 + std::abs(lhs.v[i])));
}

TEST(Transport, InflowInterpolationIsSpectral) {
  BoundaryGrid g(32, 16);
  auto f = [](double s, double phi) { return CVec::Constant(1, std::exp(std::sin(s)) * std::cos(2 * phi + s) + cd(0, 1) * phi * phi); };
  BoundaryFn b = BoundaryFn::sample(g, 1, f);
  InflowInterpolator I(g);
  double worst = 0;
  for (double s : {0.1, 1.7, 4.0, 6.2})
    for (double phi : {-1.5707, -0.9, 0.33, 1.5})
      worst = std::max(worst, std::abs(I.eval(b, s, phi)(0) - f(s, phi)(0)));
  EXPECT_LT(worst, 1e-9);
}

TEST(Transport, ExtensionOfConstants) {
  Scene s = euclid();
  BoundaryGrid g(16, 8);
  BoundaryOperators ops(s, g, 16, TableOptions{});
  BoundaryFn w = BoundaryFn::sample(g, 1, [](double, double) { return CVec::Constant(1, cd(2.0, -1.0)); });
  auto grid = std::make_shared<const SpatialGrid>(12);
  Extension e = extend_boundary(s, w, grid, 8, ops, TableOptions{});
  for (int node : grid->disk_nodes())
    for (int l = 0; l < 8; ++l) EXPECT_LT(std::abs(e.w_sharp.at(node, l) - cd(2.0, -1.0)), 1e-12);
  for (cd v : e.Qw.v) EXPECT_LT(std::abs(v - cd(2.0, -1.0)), 1e-12);
  BoundaryFn p = ops.P(w);
  for (cd v : p.v) EXPECT_LT(std::abs(v), 1e-12);
  BoundaryFn bc = ops.B(1, [](double, double) { return CVec::Constant(1, 3.0); });
  for (cd v : bc.v) EXPECT_LT(std::abs(v), 1e-14);
}

TEST(Transport, SharpSolvesTransportEquation) {
  Scene s = full_scene();
  BoundaryGrid g(32, 16);
  BoundaryOperators ops(s, g, 32, TableOptions{});
  BoundaryFn w = BoundaryFn::sample(g, 2, [](double s, double phi) {
    CVec v(2);
    v << std::cos(s) + cd(0, 1) * std::sin(phi), 0.5 * std::sin(2 * s) * std::cos(phi);
    return v;
  });
  // Re-trace short flow segments and difference U^{-1} w_sharp along them.
  FlowIntegrator flow(s);
  const double h = 1e-3;
  std::vector<PhasePoint> pts;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.6, 0.6), th(0, kTwoPi);
  std::vector<PhasePoint> base;
  for (int i = 0; i < 40; ++i) {
    const PhasePoint p{u(rng), u(rng), th(rng)};
    base.push_back(p);
    FlowState a = flow.start(p), b = flow.start(p);
    flow.step(a, h, false);
    flow.step(b, -h, false);
    pts.push_back(p);
    pts.push_back(a.point());
    pts.push_back(b.point());
  }
  BackTraceTable table(s, pts, TableOptions{1e-3, 1e-2, 0});
  const InflowInterpolator& I = ops.interpolator();
  double worst = 0;
  for (int i = 0; i < 40; ++i) {
    auto sharp = [&](int q) {
      const BackTrace& r = table.row(3 * i + q);
      return CVec(r.U * I.eval(w, r.s, r.phi));
    };
    const PhasePoint& p = base[static_cast<std::size_t>(i)];
    CVec d = (sharp(1) - sharp(2)) / (2 * h) + flow.generator(p.x, p.y, p.theta) * sharp(0);
    worst = std::max(worst, d.cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Transport, KernelIdentity) {
  Scene s = full_scene();
  BoundaryGrid g(32, 16);
  BoundaryOperators ops(s, g, 32, TableOptions{});
  RandomFields rf(21);
  CompiledModes a(rf.modes(2, 3, 0.5));
  KernelIdentityResult r = kernel_transform_identity(s, ops, a);
  EXPECT_LT(r.l2_residual / r.l2_rhs, 1e-4);
  // Vanishing boundary trace: a carries the factor (1 - r^2)^2.
  ModeExpansion e = rf.modes(2, 2, 0.5).scaled(parse_expression("(1 - x^2 - y^2)^2"));
  CompiledModes a0(e);
  KernelIdentityResult r0 = kernel_transform_identity(s, ops, a0);
  EXPECT_LT(r0.sup_lhs, 1e-6);
}

TEST(Transport, GaugeInvarianceOfScatteringData) {
  Scene s = full_scene();
  CMat s1(2, 2), s2(2, 2);
  s1 << cd(0, 1), cd(0.3, 0.2), cd(-0.3, 0.2), cd(0, -0.5);
  s2 << cd(0, 0.2), cd(1, 0), cd(-1, 0), cd(0, 0.7);
  auto gauged = std::make_shared<GaugedAttenuation>(s.attenuation_ptr(), s1, s2, 0.8, -0.6);
  Scene sg = s.with_attenuation(gauged);
  BoundaryGrid g(12, 6);
  ScatteringData a = scattering_data(s, g), b = scattering_data(sg, g);
  double worst = 0, moved = 0;
  for (int i = 0; i < g.size(); ++i) worst = std::max(worst, (a.C[static_cast<std::size_t>(i)] - b.C[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-5);
  // The interior transport itself does change.
  TransportSolution ua = solve_transport(s, inflow_point(0.0, 0.0)), ub = solve_transport(sg, inflow_point(0.0, 0.0));
  const std::size_t mid = ua.U.size() / 2;
  moved = (ua.U[mid] - ub.U[mid]).cwiseAbs().maxCoeff();
  EXPECT_GT(moved, 1e-2);
}
