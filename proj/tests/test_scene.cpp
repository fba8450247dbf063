#include <gtest/gtest.h>

#include "magray/scene.hpp"

using namespace magray;

TEST(Scene, LoadsMinimalJson) {
  auto j = nlohmann::json::parse(R"J({"n":1,"sigma":"0","lambda":"0","Ax":[["i*x"]],"Ay":[["0"]],"Phi":[["i"]]})J");
  Scene s = scene_from_json(j);
  EXPECT_EQ(s.rank(), 1);
  EXPECT_EQ(s.grid().nx, 64);
  EXPECT_EQ(s.grid().ntheta, 64);
  EXPECT_EQ(s.grid().ns, 64);
  EXPECT_EQ(s.grid().nphi, 32);
  CMat ax, ay, phi;
  s.attenuation().eval(0.5, 0.0, ax, ay, phi);
  EXPECT_EQ(ax(0, 0), cd(0, 0.5));
  EXPECT_EQ(phi(0, 0), cd(0, 1));
  EXPECT_FALSE(s.unattenuated());
  EXPECT_TRUE(s.flat());
}

TEST(Scene, ScalarShorthandAndDefaults) {
  auto j = nlohmann::json::parse(R"J({"n":1,"sigma":"0.1*(x^2+y^2)","Phi":"i*0.5","grid":{"nx":32,"ntheta":16}})J");
  Scene s = scene_from_json(j);
  EXPECT_EQ(s.grid().nx, 32);
  EXPECT_EQ(s.grid().ntheta, 16);
  MetricSample m = s.metric(0.5, 0.2);
  EXPECT_NEAR(m.sigma, 0.1 * 0.29, 1e-15);
  EXPECT_NEAR(m.sx, 0.1, 1e-15);
  EXPECT_NEAR(m.sy, 0.04, 1e-15);
  EXPECT_EQ(m.lambda, 0.0);
}

TEST(Scene, RejectsNonSkewHermitian) {
  auto j = nlohmann::json::parse(R"J({"n":1,"Ax":[["x"]]})J");
  try {
    scene_from_json(j);
    FAIL();
  } catch (const SkewHermitianViolation& e) {
    EXPECT_EQ(e.entry(), "Ax[0][0]");
    EXPECT_GT(e.norm(), 0.0);
  }
  auto j2 = nlohmann::json::parse(R"J({"n":2,"Phi":[["i","1"],["1","0"]]})J");
  EXPECT_THROW(scene_from_json(j2), SkewHermitianViolation);
  auto ok = nlohmann::json::parse(R"J({"n":2,"Phi":[["i","1"],["-1","0"]]})J");
  EXPECT_NO_THROW(scene_from_json(ok));
}

TEST(Scene, RankMismatch) {
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"n":2,"Ax":[["0"]]})J")), RankMismatch);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"n":2,"Ax":"i"})J")), RankMismatch);
}

TEST(Scene, GridValidation) {
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"grid":{"ntheta":7}})J")), InvalidScene);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"grid":{"ntheta":6}})J")), InvalidScene);
  EXPECT_NO_THROW(scene_from_json(nlohmann::json::parse(R"J({"grid":{"ntheta":8}})J")));
}

TEST(Scene, ParseErrorsSurface) {
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"sigma":"x +"})J")), SyntaxError);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"sigma":"q"})J")), UnknownIdentifier);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"sigma":"i*x"})J")), InvalidScene);
  EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"J({"sigma":"log(x)"})J")), InvalidScene);
}

TEST(Scene, JsonRoundTrip) {
  Scene s = make_scene(2, "0.1*x*y", "0.3", {"i*y", "0.2", "-0.2", "0"}, {"0", "0", "0", "-i*x"},
                       {"i", "0", "0", "0"});
  Scene t = scene_from_json(scene_to_json(s));
  CMat a1, a2, a3, b1, b2, b3;
  s.attenuation().eval(0.3, -0.4, a1, a2, a3);
  t.attenuation().eval(0.3, -0.4, b1, b2, b3);
  EXPECT_EQ((a1 - b1).norm() + (a2 - b2).norm() + (a3 - b3).norm(), 0.0);
  EXPECT_EQ(s.metric(0.3, 0.2).sigma, t.metric(0.3, 0.2).sigma);
}

TEST(Scene, SymbolicCurvatureMatchesDifferences) {
  Scene s = make_scene(2, "0", "0", {"i*y", "0.3*x", "-0.3*x", "0"}, {"0", "i*x*y", "i*x*y", "-i*x"},
                       {"0", "0", "0", "0"});
  auto& ea = dynamic_cast<const ExprAttenuation&>(s.attenuation());
  CMat sym = ea.curvature(0.2, 0.3);
  CMat fd = ea.Attenuation::curvature(0.2, 0.3);
  EXPECT_LT((sym - fd).cwiseAbs().maxCoeff(), 1e-10);
}
