#include <gtest/gtest.h>

#include <random>

#include "magray/expr.hpp"

using magray::CompiledExpr;
using magray::Expr;
using magray::parse_expression;

namespace {

// Random trees over the full grammar.
Expr random_tree(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 3 : 15);
  std::uniform_real_distribution<double> num(0.0, 5.0);
  using K = Expr::Kind;
  switch (pick(rng)) {
    case 0: return Expr(std::round(num(rng) * 100) / 100);
    case 1: return Expr::x();
    case 2: return Expr::y();
    case 3: return Expr::imag();
    case 4: return Expr::raw(K::Add, random_tree(rng, depth - 1), random_tree(rng, depth - 1));
    case 5: return Expr::raw(K::Sub, random_tree(rng, depth - 1), random_tree(rng, depth - 1));
    case 6: return Expr::raw(K::Mul, random_tree(rng, depth - 1), random_tree(rng, depth - 1));
    case 7: return Expr::raw(K::Div, random_tree(rng, depth - 1), random_tree(rng, depth - 1));
    case 8: return Expr::raw(K::Pow, random_tree(rng, depth - 1), random_tree(rng, depth - 1));
    case 9: return Expr::raw(K::Neg, random_tree(rng, depth - 1));
    case 10: return Expr::raw(K::Sin, random_tree(rng, depth - 1));
    case 11: return Expr::raw(K::Cos, random_tree(rng, depth - 1));
    case 12: return Expr::raw(K::Exp, random_tree(rng, depth - 1));
    case 13: return Expr::raw(K::Log, random_tree(rng, depth - 1));
    case 14: return Expr::raw(K::Sqrt, random_tree(rng, depth - 1));
    default: return Expr::raw(K::Tanh, random_tree(rng, depth - 1));
  }
}

}  // namespace

TEST(Parser, PrecedenceOfPowerOverUnaryMinus) {
  Expr e = parse_expression("-x^2");
  EXPECT_EQ(e.kind(), Expr::Kind::Neg);
  EXPECT_EQ(e.lhs().kind(), Expr::Kind::Pow);
  EXPECT_NEAR(e.evaluate(3.0, 0.0).real(), -9.0, 1e-15);
}

TEST(Parser, PowerIsRightAssociative) {
  EXPECT_NEAR(parse_expression("2^3^2").evaluate(0, 0).real(), 512.0, 1e-12);
  EXPECT_NEAR(parse_expression("2^-1").evaluate(0, 0).real(), 0.5, 1e-15);
}

TEST(Parser, ArithmeticIsLeftAssociative) {
  EXPECT_NEAR(parse_expression("8 / 4 / 2").evaluate(0, 0).real(), 1.0, 1e-15);
  EXPECT_NEAR(parse_expression("8 - 4 - 2").evaluate(0, 0).real(), 2.0, 1e-15);
  EXPECT_NEAR(parse_expression("1 + 2 * 3").evaluate(0, 0).real(), 7.0, 1e-15);
}

TEST(Parser, FunctionsAndImaginaryUnit) {
  auto v = parse_expression("i*x*exp(-y^2)").evaluate(0.5, 1.0);
  EXPECT_NEAR(v.real(), 0.0, 1e-15);
  EXPECT_NEAR(v.imag(), 0.5 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(parse_expression("sqrt(4) + log(exp(2)) + tanh(0) + sin(0) + cos(0)").evaluate(0, 0).real(), 5.0,
              1e-14);
  EXPECT_NEAR(parse_expression("1.5e-3 * 2E2").evaluate(0, 0).real(), 0.3, 1e-15);
}

TEST(Parser, SyntaxErrorReportsOffsetAndExpectation) {
  try {
    parse_expression("x + * y");
    FAIL() << "expected SyntaxError";
  } catch (const magray::SyntaxError& e) {
    EXPECT_EQ(e.offset(), 4u);
    EXPECT_FALSE(e.expected().empty());
  }
  try {
    parse_expression("(x + y");
    FAIL();
  } catch (const magray::SyntaxError& e) {
    EXPECT_EQ(e.offset(), 6u);
    EXPECT_NE(std::find(e.expected().begin(), e.expected().end(), ")"), e.expected().end());
  }
  EXPECT_THROW(parse_expression("sin x"), magray::SyntaxError);
  EXPECT_THROW(parse_expression("x y"), magray::SyntaxError);
  EXPECT_THROW(parse_expression(""), magray::SyntaxError);
}

TEST(Parser, UnknownIdentifier) {
  try {
    parse_expression("x + z");
    FAIL();
  } catch (const magray::UnknownIdentifier& e) {
    EXPECT_EQ(e.name(), "z");
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse_expression("pi"), magray::UnknownIdentifier);
  EXPECT_THROW(parse_expression("atan(x)"), magray::UnknownIdentifier);
}

TEST(Printer, RoundTripProperty) {
  std::mt19937_64 rng(20261017);
  for (int trial = 0; trial < 2000; ++trial) {
    Expr e = random_tree(rng, 5);
    std::string printed = e.to_string();
    Expr back = parse_expression(printed);
    ASSERT_TRUE(back == e) << printed << " reparsed as " << back.to_string();
    ASSERT_EQ(back.to_string(), printed);
  }
}

TEST(Printer, KnownForms) {
  EXPECT_EQ(parse_expression("(x+y)*(x-y)").to_string(), "(x + y) * (x - y)");
  EXPECT_EQ(parse_expression("x-(y-1)").to_string(), "x - (y - 1)");
  EXPECT_EQ(parse_expression("(-x)^2").to_string(), "(-x)^2");
  EXPECT_EQ(parse_expression("0.001").to_string(), "0.001");
}

TEST(Derivative, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  const char* cases[] = {"x^3*y - 2*x", "sin(x*y) + exp(-x^2-y^2)", "log(2 + x^2) / (1 + y^2)",
                         "sqrt(1 + x^2 + y^2) * tanh(x - y)", "(1 + x^2)^(y + 1)", "i*x*cos(3*y)"};
  for (const char* src : cases) {
    Expr e = parse_expression(src);
    Expr ex = e.dx(), ey = e.dy();
    for (int k = 0; k < 10; ++k) {
      std::uniform_real_distribution<double> u(-0.7, 0.7);
      double x = u(rng), y = u(rng), h = 1e-4;
      auto fdx = (e.evaluate(x + h, y) - e.evaluate(x - h, y)) / (2 * h);
      auto fdy = (e.evaluate(x, y + h) - e.evaluate(x, y - h)) / (2 * h);
      EXPECT_LT(std::abs(ex.evaluate(x, y) - fdx), 1e-6) << src;
      EXPECT_LT(std::abs(ey.evaluate(x, y) - fdy), 1e-6) << src;
    }
  }
}

TEST(Derivative, SimplifiesConstants) {
  EXPECT_TRUE(parse_expression("3*y").dx().is_number(0.0));
  EXPECT_TRUE(parse_expression("x").dx().is_number(1.0));
}

TEST(Compiled, AgreesWithTreeWalk) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int trial = 0; trial < 500; ++trial) {
    Expr e = random_tree(rng, 4);
    CompiledExpr c(e);
    double x = u(rng), y = u(rng);
    auto a = e.evaluate(x, y), b = c(x, y);
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) continue;
    EXPECT_LE(std::abs(a - b), 1e-9 * (1 + std::abs(a))) << e.to_string();
  }
}

TEST(Compiled, RealPathAndConstants) {
  CompiledExpr c(parse_expression("0.5*(x^2 + y^2)"));
  EXPECT_TRUE(c.is_real());
  EXPECT_DOUBLE_EQ(c.real(0.2, 0.4), 0.5 * (0.04 + 0.16));
  CompiledExpr k(parse_expression("2*3 + i"));
  EXPECT_TRUE(k.is_constant());
  EXPECT_EQ(k(0.1, 0.2), std::complex<double>(6.0, 1.0));
  EXPECT_TRUE(CompiledExpr(parse_expression("0*x")).is_constant() == false);
  EXPECT_TRUE(CompiledExpr(Expr(0.0)).is_zero());
  // Negative base with integer exponent stays real.
  EXPECT_EQ(CompiledExpr(parse_expression("(x - 2)^3")).real(0.0, 0.0), -8.0);
}
