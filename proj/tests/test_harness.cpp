#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "magray/harness.hpp"

using namespace magray;

namespace {

Scene euclid(const std::string& phi = "0") { return make_scene(1, "0", "0", {"0"}, {"0"}, {phi}); }

Scene higgs_scene() { return make_scene(1, "0.1*(x^2 + y^2)", "0.2", {"0"}, {"0"}, {"i*(0.5 + 0.2*x)"}); }

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST(Report, MetricRelations) {
  CheckResult r("x");
  r.below("a", 1e-6, 1e-5).above("b", 4.0, 3.5).info("c", std::nan(""));
  EXPECT_TRUE(r.finish().passed());
  r.below("d", 2.0, 1.0);
  EXPECT_FALSE(r.finish().passed());
  // NaN never satisfies a bound.
  CheckResult n("n");
  n.below("a", std::nan(""), 1.0);
  EXPECT_FALSE(n.finish().passed());
  // Info-only results cannot pass.
  CheckResult i("i");
  i.info("a", 1.0);
  EXPECT_FALSE(i.finish().passed());
}

TEST(Report, CombinePrefixesAndGatesOnParts) {
  CheckResult a("c"), b("c");
  a.below("res", 1e-4, 1e-3).finish();
  b.below("res", 5e-3, 1e-3).finish();
  CheckResult c = combine("c", {{"one", a}, {"two", b}});
  EXPECT_FALSE(c.passed());
  ASSERT_NE(c.metric("two/res"), nullptr);
  EXPECT_DOUBLE_EQ(worst_metric(c, "res"), 5e-3);
  EXPECT_DOUBLE_EQ(worst_metric(c, "res", false), 1e-4);
  CheckResult s = combine("c", {{"one", skipped("c", "why")}});
  EXPECT_EQ(s.status, Status::skipped);
}

TEST(Suite, EmptySelection) {
  SuiteReport r = run_suite(euclid(), {});
  EXPECT_TRUE(r.checks.empty());
  EXPECT_EQ(r.exit_code(), 0);
}

TEST(Suite, UnknownCheckIsInfrastructureError) { EXPECT_THROW(run_suite(euclid(), {"euclidean", "nonsense"}), std::invalid_argument); }

TEST(Suite, NonSimpleSceneGatesDependentChecks) {
  SuiteReport r = run_suite(make_scene(1, "0", "2", {}, {}, {}), {"simplicity", "fiber", "kernel", "pairing"});
  ASSERT_EQ(r.checks.size(), 4u);
  EXPECT_EQ(r.checks[0].status, Status::fail);
  EXPECT_EQ(r.checks[1].status, Status::pass);
  EXPECT_EQ(r.checks[2].status, Status::skipped);
  EXPECT_EQ(r.checks[3].status, Status::skipped);
  EXPECT_EQ(r.exit_code(), 1);
  // Gating applies even without the simplicity check in the selection.
  SuiteReport g = run_suite(make_scene(1, "0", "2", {}, {}, {}), {"kernel"});
  EXPECT_EQ(g.checks[0].status, Status::skipped);
  EXPECT_EQ(g.exit_code(), 0);
}

TEST(Suite, ReportsAreDeterministic) {
  const std::vector<std::string> sel{"simplicity", "euclidean", "fiber", "kernel", "transition"};
  SuiteReport a = run_suite(higgs_scene(), sel), b = run_suite(higgs_scene(), sel);
  EXPECT_EQ(a.exit_code(), 0);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.to_json()["seed"], SuiteOptions{}.seed);
  // Wall times stay out of the deterministic record.
  EXPECT_EQ(a.to_json().dump().find("seconds"), std::string::npos);
  const auto dir = std::filesystem::temp_directory_path() / "magray_report_test";
  std::filesystem::create_directories(dir);
  const auto files = a.write((dir / "rep.json").string());
  EXPECT_EQ(slurp((dir / "rep.json").string()), a.to_json().dump(2) + "\n");
  EXPECT_EQ(slurp((dir / "rep.csv").string()).rfind("check,status,metric", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "rep.timing.csv"));
  for (const auto& f : files) std::filesystem::remove(f);
}

TEST(Oracles, GaussianChordIntegralMatchesQuadrature) {
  const Gaussian g;
  for (double s : {0.0, 1.3, 4.0})
    for (double phi : {-1.2, 0.0, 0.7}) {
      const double tau = 2 * std::cos(phi), px = std::cos(s), py = std::sin(s), th = s + kPi + phi;
      const int K = 4000;
      const auto w = simpson_weights(K, tau / K);
      double q = 0;
      for (int i = 0; i <= K; ++i) {
        const double t = tau * i / K;
        q += w[static_cast<std::size_t>(i)] * g(px + t * std::cos(th), py + t * std::sin(th));
      }
      EXPECT_NEAR(gaussian_chord_integral(g, s, phi), q, 1e-10);
    }
}

TEST(RangeIdentity, ConstantDataGivesZeroOnBothSides) {
  // P kills constants, and the adjoints of constants are 2 pi and 0, which *d maps to 0.
  Scene s = euclid();
  BoundaryGrid g(32, 16);
  BoundaryOperators ops(s, g, 32, TableOptions{});
  BoundaryFn one = BoundaryFn::sample(g, 1, [](double, double) { return CVec::Ones(1); });
  BoundaryFn p = ops.P(one);
  EXPECT_LT(mu_norm(s, p), 1e-12);
  auto grid = std::make_shared<const SpatialGrid>(24);
  const auto nodes = extension_nodes(*grid, 1.5);
  TableOptions te;
  te.extension_radius = 1.5;
  const AdjointEvaluator ev(s, node_points(*grid, nodes), 16, te);
  const ExtensionMap ext(s, g, 1.5, te);
  const OuterBasis basis{1, 0, 0};
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(basis.size());
  c(0) = 1;
  const InflowFn w = basis.function(c);
  EXPECT_LT(mu_norm(s, ops.P(ext(w))), 1e-10);
  GridAdjoint ga = to_grid(ev.transform(w), grid, nodes);
  SceneSamples ss(s, grid);
  BoundaryFn rhs = ray_transform_function(ops.rays(), star_d_A_form(ss, ga.omega));
  rhs += ray_transform_one_form(s, ops.rays(), star_d_A_function(ss, ga.f));
  EXPECT_LT(mu_norm(s, rhs), 1e-8);
}

TEST(RangeIdentity, SelectsFactorOneOnHiggsScene) {
  RangeIdentityOptions o;
  o.count = 1;
  o.nx = {32};
  RangeIdentityStudy st = range_identity_study(euclid("0.7*i"), 5, o);
  ASSERT_TRUE(st.factor_defined);
  EXPECT_LT(std::abs(st.factor_fit - 1.0), 1e-2);
  EXPECT_GT(st.candidate_misfit[1], 0.5);
  EXPECT_LT(st.samples[0].residual[0], 1e-2);
}

TEST(Transition, TrivialTwistAndUnitTwistExample) {
  Scene s = euclid();
  TableOptions to;
  const ForwardRayTable base(s, BoundaryGrid(32, 16), to);
  RandomFields rf(3);
  EXPECT_LT(transition_residual(s, base, rf.modes(1, 1, 0.5), 0, to), 1e-14);
  // f' = mode-1 part of dx, f = f'' = 0.
  ModeExpansion dx = one_form_modes(s, OneFormExpr{{Expr(1.0)}, {Expr(0.0)}}).mode(1);
  EXPECT_LT(transition_residual(s, base, dx, 1, to), 1e-3);
}

TEST(Surjectivity, InstanceFamiliesHaveTheClaimedDefects) {
  Scene s = euclid();
  AdjointPairSolver solver(s);
  for (const PairInstance& p : pair_instances(s, 9, 2, 2)) {
    const double d = solver.compatibility(p.f, p.omega);
    if (p.compatible) EXPECT_LT(d, 1e-10);
    else EXPECT_GT(d, 0.5);
  }
  Scene h = higgs_scene();
  AdjointPairSolver hs(h);
  std::string note;
  auto inst = pair_instances(h, 9, 2, 2, &note);
  EXPECT_EQ(inst.size(), 2u);
  EXPECT_FALSE(note.empty());
  for (const PairInstance& p : inst) EXPECT_LT(hs.compatibility(p.f, p.omega), 1e-10);
}

TEST(RangeMembership, ZeroAndKernelInputs) {
  Scene s = higgs_scene();
  RangeReconstructor rec(s);
  RangeMembership z = rec(Field::zero(1), FormField::zero(1));
  EXPECT_EQ(z.report.u_norm, 0.0);
  double wz = 0;
  for (cd v : z.w.v) wz = std::max(wz, std::abs(v));
  EXPECT_LT(wz, 1e-14);
  // omega = d_A p with p|dM = 0 and f = Phi p lie in the kernel: u = 0 and the representation vanishes.
  const Expr p = parse_expression("(1 - x^2 - y^2)*(x + 0.5*y*y)");
  const Field f = Field::from_exprs(phi_times(s, {p}));
  RangeMembership k = rec(f, FormField::from_exprs(d_A(s, {p})));
  EXPECT_LT(k.report.u_norm, 1e-6);
  EXPECT_LT(mu_norm(s, k.reconstruction), 1e-3);
}

TEST(RangeMembership, ReconstructsRandomData) {
  CheckResult r = check_range_membership(higgs_scene(), 11, 1);
  EXPECT_TRUE(r.passed()) << worst_metric(r, "max_reconstruction_residual");
}

TEST(Injectivity, RecoversGaussianAndSkipsAttenuatedScenes) {
  EXPECT_TRUE(check_injectivity(euclid()).passed());
  EXPECT_EQ(check_injectivity(higgs_scene()).status, Status::skipped);
}
