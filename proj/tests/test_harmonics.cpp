#include <gtest/gtest.h>

#include "magray/harmonics.hpp"

using namespace magray;

namespace {

Scene magnetic_scene() {
  return make_scene(2, "0.1*(x^2 + y^2) + 0.05*x", "0.3 + 0.1*y", {"i*0.3*y", "0.2*x", "-0.2*x", "0"},
                    {"0", "0.1", "-0.1", "-i*0.2*x*y"}, {"i*0.5", "0", "0", "i*0.2*x"});
}

}  // namespace

TEST(Fiber, ParsevalAndModes) {
  auto g = std::make_shared<const SpatialGrid>(16);
  RandomFields rf(3);
  CompiledModes m(rf.modes(2, 5));
  FiberGridFn u = FiberGridFn::sample(g, 32, m);
  double worst = 0;
  for (int node : g->disk_nodes()) {
    for (int c = 0; c < 2; ++c) {
      double l2 = 0, sum = 0;
      for (int l = 0; l < 32; ++l) l2 += std::norm(u.at(node, l, c)) / 32;
      for (int k = -16; k < 16; ++k) sum += std::norm(u.mode(node, k, c));
      worst = std::max(worst, std::abs(l2 - sum) / std::max(1.0, l2));
    }
    CVec exact = m.coefficient(3, g->x(node), g->y(node));
    worst = std::max(worst, std::abs(exact(1) - u.mode(node, 3, 1)));
  }
  EXPECT_LT(worst, 1e-13);
}

TEST(Fiber, HilbertSquaredIsMinusIdentityOffMeanMode) {
  auto g = std::make_shared<const SpatialGrid>(12);
  RandomFields rf(5);
  FiberGridFn u = FiberGridFn::sample(g, 32, CompiledModes(rf.modes(1, 6)));
  FiberGridFn hh = hilbert(hilbert(u));
  FiberGridFn p0 = fiber_project(u, 0);
  double worst = 0;
  for (std::size_t s = 0; s < u.data().v.size(); ++s)
    worst = std::max(worst, std::abs(hh.data().v[s] + u.data().v[s] - p0.data().v[s]));
  EXPECT_LT(worst, 1e-13);
}

TEST(Fiber, GuilleminKazhdanOperatorsShiftDegree) {
  Scene scene = magnetic_scene();
  auto g = std::make_shared<const SpatialGrid>(32);
  SceneSamples ss(scene, g);
  RandomFields rf(11);
  for (int k : {-3, 0, 2}) {
    ModeExpansion e = rf.modes(2, 0).shifted(k);
    FiberGridFn u = FiberGridFn::sample(g, 32, CompiledModes(e));
    GKOperators op = gk_operators(ss, u);
    double leak_p = 0, leak_m = 0, peak = 0;
    for (int node : g->disk_nodes())
      for (int j = -16; j < 16; ++j)
        for (int c = 0; c < 2; ++c) {
          const double a = std::abs(op.mu_plus.mode(node, j, c)), b = std::abs(op.mu_minus.mode(node, j, c));
          peak = std::max({peak, a, b});
          if (j != k + 1) leak_p = std::max(leak_p, a);
          if (j != k - 1) leak_m = std::max(leak_m, b);
        }
    EXPECT_LT(leak_p, 1e-10 * peak) << k;
    EXPECT_LT(leak_m, 1e-10 * peak) << k;
  }
}

TEST(Fiber, EtaPlusMatchesClosedForm) {
  Scene scene = make_scene(1, "0.2*x*y + 0.1*x", "0", {"0"}, {"0"}, {"0"});
  auto g = std::make_shared<const SpatialGrid>(64);
  SceneSamples ss(scene, g);
  const Expr a = parse_expression("x^2*y + sin(x) + i*y");
  ModeExpansion e(1);
  const int k = 2;
  e.modes[k] = {a};
  FiberGridFn u = FiberGridFn::sample(g, 32, CompiledModes(e));
  GKOperators op = gk_operators(ss, u);
  CompiledExpr ax(a.dx()), ay(a.dy()), A(a);
  double worst = 0;
  for (int node : g->disk_nodes()) {
    const double x = g->x(node), y = g->y(node);
    const MetricSample m = scene.metric(x, y);
    const cd dz = 0.5 * (ax(x, y) - cd(0, 1) * ay(x, y)), sz = 0.5 * (m.sx - cd(0, 1) * m.sy);
    const cd expect = std::exp(-m.sigma) * (dz - double(k) * sz * A(x, y));
    worst = std::max(worst, std::abs(op.eta_plus.mode(node, k + 1) - expect));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Fiber, BandLimitGuard) {
  auto g = std::make_shared<const SpatialGrid>(12);
  Scene scene = make_scene(1, "0", "0", {"0"}, {"0"}, {"0"});
  SceneSamples ss(scene, g);
  ModeExpansion e(1);
  e.modes[15] = {Expr(1.0)};
  FiberGridFn u = FiberGridFn::sample(g, 32, CompiledModes(e));
  EXPECT_THROW(gk_operators(ss, u), BandLimitExceeded);
}

TEST(Fiber, CommutatorIdentityConverges) {
  Scene scene = magnetic_scene();
  RandomFields rf(17);
  CompiledModes u(rf.modes(2, 4, 0.5));
  auto r32 = commutator_residual(scene, u, std::make_shared<const SpatialGrid>(32), 32);
  auto r64 = commutator_residual(scene, u, std::make_shared<const SpatialGrid>(64), 32);
  EXPECT_GT(r64.sup_rhs, 0.1);
  EXPECT_LT(r64.sup_residual, 1e-5);
  EXPECT_GE(std::log2(r32.sup_residual / r64.sup_residual), 3.5);
}
