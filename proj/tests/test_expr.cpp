#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <string>

#include "support.hpp"

using namespace reaffirm;

namespace {

double eval_with(const Expr& e, const std::map<std::string, double>& env) {
  return evaluate(e, [&](const std::string& n) { return env.at(n); });
}

/// Random well-typed numeric expression over x, y, z.
std::string random_numeric(CounterRng& rng, int depth) {
  if (depth == 0 || rng.uniform() < 0.25) {
    const auto pick = rng.next_u64() % 4;
    if (pick == 3) return format_number(std::round(rng.uniform(-5, 5) * 4) / 4);
    return std::string(1, "xyz"[pick]);
  }
  switch (rng.next_u64() % 8) {
    case 0: return "(" + random_numeric(rng, depth - 1) + " + " + random_numeric(rng, depth - 1) + ")";
    case 1: return random_numeric(rng, depth - 1) + " - " + random_numeric(rng, depth - 1);
    case 2: return random_numeric(rng, depth - 1) + " * " + random_numeric(rng, depth - 1);
    case 3: return "-" + random_numeric(rng, depth - 1);
    case 4: return "abs(" + random_numeric(rng, depth - 1) + ")";
    case 5: return "min(" + random_numeric(rng, depth - 1) + ", " + random_numeric(rng, depth - 1) + ")";
    case 6: return "sin(" + random_numeric(rng, depth - 1) + ")";
    default: return "max(" + random_numeric(rng, depth - 1) + ", " + random_numeric(rng, depth - 1) + ")";
  }
}

}  // namespace

TEST(Expr, PrecedenceFollowsConventionalGrammar) {
  EXPECT_EQ(to_string(parse_expr("a + b * c")), "(a + (b * c))");
  EXPECT_EQ(to_string(parse_expr("2*theta*ngps")), "((2 * theta) * ngps)");
  EXPECT_EQ(to_string(parse_expr("x > 1 && y < 2 || z > 3")), "(((x > 1) && (y < 2)) || (z > 3))");
  EXPECT_EQ(to_string(parse_expr("not (x > 1)")), "(!(x > 1))");
}

TEST(Expr, GuardFromPatternOneParses) {
  const Expr e = parse_expr("abs(ngps-nenc)>theta");
  ASSERT_EQ(e.kind(), ExprKind::Binary);
  EXPECT_EQ(e.binary_op(), BinaryOp::Gt);
  EXPECT_EQ(e.lhs().kind(), ExprKind::Unary);
  EXPECT_EQ(e.lhs().unary_op(), UnaryOp::Abs);
  EXPECT_EQ(e.rhs().name(), "theta");
  EXPECT_EQ(eval_with(e, {{"ngps", 3}, {"nenc", 1}, {"theta", 1.5}}), 1.0);
  EXPECT_EQ(eval_with(e, {{"ngps", 3}, {"nenc", 1}, {"theta", 2.5}}), 0.0);
}

TEST(Expr, SyntaxErrorsCarryPositions) {
  try {
    parse_expr("abs(ngps-nenc)>");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.column(), 16u);
  }
  EXPECT_THROW(parse_expr("x +* 2"), ParseError);
  EXPECT_THROW(parse_expr("foo(1)"), ParseError);
  EXPECT_THROW(parse_expr("(x"), ParseError);
  EXPECT_THROW(parse_expr("x $ 1"), ParseError);
}

TEST(Expr, TypeCheckingSeparatesBooleanAndNumeric) {
  EXPECT_EQ(type_of(parse_expr("x + 1")), ExprType::Numeric);
  EXPECT_EQ(type_of(parse_expr("x + 1 > y")), ExprType::Boolean);
  EXPECT_FALSE(type_of(parse_expr("(x > 1) + 2")).has_value());
  EXPECT_FALSE(type_of(parse_expr("x && y")).has_value());
  EXPECT_FALSE(type_of(parse_expr("!z")).has_value());
}

TEST(Expr, FunctionsEvaluate) {
  const std::map<std::string, double> env{{"x", -2.0}, {"y", 9.0}};
  EXPECT_EQ(eval_with(parse_expr("abs(x)"), env), 2.0);
  EXPECT_EQ(eval_with(parse_expr("sqrt(y)"), env), 3.0);
  EXPECT_EQ(eval_with(parse_expr("min(x, y)"), env), -2.0);
  EXPECT_EQ(eval_with(parse_expr("max(x, y)"), env), 9.0);
  EXPECT_DOUBLE_EQ(eval_with(parse_expr("sin(x) + cos(x)"), env), std::sin(-2.0) + std::cos(-2.0));
}

TEST(Expr, VariablesAndReferences) {
  const Expr e = parse_expr("v_l - v + min(v, e_v)");
  EXPECT_EQ(variables_of(e), (std::set<std::string>{"v_l", "v", "e_v"}));
  EXPECT_TRUE(references(e, "e_v"));
  EXPECT_FALSE(references(e, "e"));
}

TEST(ExprProperty, PrintedFormReparsesToSameTree) {
  CounterRng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Expr e = parse_expr(random_numeric(rng, 4));
    const Expr again = parse_expr(to_string(e));
    EXPECT_EQ(e, again) << to_string(e);
    EXPECT_EQ(to_string(again), to_string(e));
  }
}

TEST(ExprProperty, CompiledFormAgreesWithTreeWalk) {
  CounterRng rng(12);
  for (int i = 0; i < 500; ++i) {
    const Expr e = parse_expr(random_numeric(rng, 5));
    const std::map<std::string, int> slots{{"x", 0}, {"y", 1}, {"z", 2}};
    const CompiledExpr code(e, [&](const std::string& n) { return CompiledExpr::Binding{slots.at(n), 0.0}; });
    for (int k = 0; k < 5; ++k) {
      const double vals[3] = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
      const double tree = eval_with(e, {{"x", vals[0]}, {"y", vals[1]}, {"z", vals[2]}});
      EXPECT_EQ(code.eval(vals), tree) << to_string(e);
    }
  }
}

TEST(ExprProperty, ConstantBindingsFold) {
  const Expr e = parse_expr("2 * k + x");
  const CompiledExpr code(e, [](const std::string& n) {
    return n == "k" ? CompiledExpr::Binding{-1, 1.5} : CompiledExpr::Binding{0, 0.0};
  });
  const double x = 4.0;
  EXPECT_EQ(code.eval(&x), 7.0);
  const CompiledExpr constant(parse_expr("2 * k"), [](const std::string&) { return CompiledExpr::Binding{-1, 3.0}; });
  EXPECT_TRUE(constant.is_constant());
  EXPECT_EQ(constant.constant_value(), 6.0);
}

// eval(e[old := r], env) == eval(e, env[old := eval(r, env)])
TEST(ExprProperty, SubstitutionCommutesWithEvaluation) {
  CounterRng rng(13);
  for (int i = 0; i < 500; ++i) {
    const Expr e = parse_expr(random_numeric(rng, 4));
    const Expr r = parse_expr(random_numeric(rng, 2));
    const std::map<std::string, double> env{{"x", rng.uniform(-2, 2)}, {"y", rng.uniform(-2, 2)}, {"z", rng.uniform(-2, 2)}};
    int count = 0;
    const Expr sub = substitute(e, "x", r, count);
    auto bound = env;
    bound["x"] = eval_with(r, env);
    EXPECT_EQ(eval_with(sub, env), eval_with(e, bound)) << to_string(e) << " with x := " << to_string(r);
    EXPECT_EQ(count > 0, references(e, "x"));
  }
}
