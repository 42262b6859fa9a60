#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "support.hpp"

using namespace reaffirm;
namespace fx = reaffirm::testing;
using stl::Kind;

namespace {

Trace constant_trace(double value, double horizon, std::size_t n = 11) {
  Trace tr;
  tr.columns = {"x"};
  tr.n_integrated = 1;
  for (std::size_t k = 0; k < n; ++k) {
    tr.times.push_back(horizon * static_cast<double>(k) / static_cast<double>(n - 1));
    tr.modes.push_back(1);
    tr.data.push_back(value);
  }
  return tr;
}

stl::StlErrorKind stl_error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const stl::StlError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no StlError";
  return stl::StlErrorKind::EmptyTrace;
}

}  // namespace

TEST(StlParse, BundledSpecs) {
  const auto acc = stl::parse_stl(cases::kAccSpec);
  ASSERT_EQ(acc->kind(), Kind::Globally);
  EXPECT_EQ(acc->lower(), 0.0);
  EXPECT_TRUE(std::isinf(acc->upper()));
  EXPECT_EQ(acc->child().margin(), parse_expr("d - (5 + v)"));

  EXPECT_THROW(stl::parse_stl(cases::kSmibSpec), ParseError);
  const auto smib = stl::parse_stl(stl::substitute_constants(cases::kSmibSpec, {{"T", 10.0}}));
  ASSERT_EQ(smib->kind(), Kind::Globally);
  EXPECT_EQ(smib->upper(), 10.0);
  EXPECT_EQ(smib->child().kind(), Kind::And);
}

TEST(StlParse, OperatorsAndPrecedence) {
  const auto f = stl::parse_stl("x > 1 and y < 2 or not (x >= 0) => F[0,1] G[0.5,2] (x - y <= 3)");
  ASSERT_EQ(f->kind(), Kind::Implies);
  EXPECT_EQ(f->child(0).kind(), Kind::Or);
  EXPECT_EQ(f->child(0).child(0).kind(), Kind::And);
  EXPECT_EQ(f->child(0).child(1).kind(), Kind::Not);
  EXPECT_EQ(f->child(1).kind(), Kind::Eventually);
  EXPECT_EQ(f->child(1).child().kind(), Kind::Globally);
  EXPECT_EQ(f->child(1).child().lower(), 0.5);
  EXPECT_EQ(to_string(*stl::parse_stl("(x + 1) * 2 > y && !(y > 0)")),
            to_string(*stl::parse_stl("((x + 1) * 2 > y) and not (y > 0)")));
  EXPECT_EQ(to_string(*stl::parse_stl("a > 0 -> b > 0 -> c > 0")),
            "(((a - 0) > 0) => (((b - 0) > 0) => ((c - 0) > 0)))");
}

TEST(StlParse, ComparisonsBecomeSignedMargins) {
  EXPECT_EQ(stl::parse_stl("x > 2")->margin(), parse_expr("x - 2"));
  EXPECT_EQ(stl::parse_stl("x <= 2")->margin(), parse_expr("2 - x"));
  EXPECT_EQ(stl::parse_stl("x == 2")->margin(), parse_expr("-abs(x - 2)"));
  EXPECT_EQ(stl::parse_stl("x != 2")->margin(), parse_expr("abs(x - 2)"));
  // A bare term is read as its own margin.
  EXPECT_EQ(stl::parse_stl("x + 1")->margin(), parse_expr("x + 1"));
}

TEST(StlParse, RejectsMalformedText) {
  EXPECT_THROW(stl::parse_stl("G[0,T] (x > 1)"), ParseError);
  EXPECT_THROW(stl::parse_stl("G[2,1] (x > 1)"), ParseError);
  EXPECT_THROW(stl::parse_stl("x > 1 and"), ParseError);
  EXPECT_THROW(stl::parse_stl("(x > 1"), ParseError);
  EXPECT_THROW(stl::Formula::temporal(Kind::Globally, -1.0, 1.0, stl::parse_stl("x > 0")), std::invalid_argument);
}

TEST(StlParse, ConstantSubstitutionIsWholeWord) {
  EXPECT_EQ(stl::substitute_constants("G[0,T] (T2 > T)", {{"T", 10}}), "G[0,10] (T2 > 10)");
  EXPECT_EQ(stl::substitute_constants("x > 1e3", {{"e3", 5}}), "x > 1e3");
}

TEST(StlEval, ConstantSignals) {
  const auto r = stl::robustness(constant_trace(3.0, 2.0), *stl::parse_stl("G[0,1] (x > 1)"));
  EXPECT_EQ(r.value, 2.0);
  EXPECT_EQ(r.verdict, stl::Verdict::Satisfied);
  const auto z = stl::robustness(constant_trace(5.0, 2.0), *stl::parse_stl("G[0,1] (x < 5)"));
  EXPECT_EQ(z.value, 0.0);
  EXPECT_EQ(z.verdict, stl::Verdict::Violated);
}

TEST(StlEval, RampWindowsUseInterpolatedEndpoints) {
  // x(t) = t sampled at 0, 1, 2, 3; window [0.5, 1.5] sees 0.5 and 1.5.
  Trace tr;
  tr.columns = {"x"};
  tr.n_integrated = 1;
  for (int k = 0; k <= 3; ++k) {
    tr.times.push_back(k);
    tr.modes.push_back(1);
    tr.data.push_back(k);
  }
  EXPECT_DOUBLE_EQ(stl::robustness(tr, *stl::parse_stl("G[0.5,1.5] (x > 0)")).value, 0.5);
  EXPECT_DOUBLE_EQ(stl::robustness(tr, *stl::parse_stl("F[0.5,1.5] (x > 0)")).value, 1.5);
  const auto sig = stl::robustness_signal(tr, *stl::parse_stl("F[0,inf] (x < 1)"));
  EXPECT_EQ(sig, (std::vector<double>{1.0, 0.0, -1.0, -2.0}));
}

TEST(StlEval, ParamsActAsConstants) {
  Trace tr = constant_trace(3.0, 1.0);
  tr.params["theta"] = 2.5;
  EXPECT_DOUBLE_EQ(stl::robustness(tr, *stl::parse_stl("x > theta")).value, 0.5);
}

TEST(StlEval, ErrorsAreClassified) {
  const Trace tr = constant_trace(1.0, 2.0);
  EXPECT_EQ(stl_error_of([&] { stl::robustness(tr, *stl::parse_stl("G[0,3] (x > 0)")); }),
            stl::StlErrorKind::HorizonTooShort);
  EXPECT_EQ(stl_error_of([&] { stl::robustness(tr, *stl::parse_stl("G[0,1] F[0,1.5] (x > 0)")); }),
            stl::StlErrorKind::HorizonTooShort);
  EXPECT_NO_THROW(stl::robustness(tr, *stl::parse_stl("G[0,inf] (x > 0)")));
  EXPECT_EQ(stl_error_of([&] { stl::robustness(tr, *stl::parse_stl("y > 0")); }), stl::StlErrorKind::UnknownSignal);
  EXPECT_EQ(stl_error_of([&] { stl::robustness(Trace{}, *stl::parse_stl("x > 0")); }), stl::StlErrorKind::EmptyTrace);
}

TEST(StlEval, RequiredHorizon) {
  EXPECT_EQ(stl::required_horizon(*stl::parse_stl("G[0,1] F[0.5,2] (x > 0)")), 3.0);
  EXPECT_EQ(stl::required_horizon(*stl::parse_stl("G[1,inf] (x > 0) and F[0,2] (x > 0)")), 2.0);
}

// The sliding-window monitor agrees exactly with a point-by-point scan.
TEST(StlProperty, MatchesNaiveEvaluator) {
  CounterRng rng(41);
  for (int i = 0; i < 300; ++i) {
    const Trace tr = fx::random_trace(rng, 5 + rng.next_u64() % 40, 10.0);
    const auto f = fx::random_formula(rng, 1 + static_cast<int>(rng.next_u64() % 3), 10.0);
    EXPECT_EQ(stl::robustness_signal(tr, *f), fx::naive_robustness(tr, *f)) << to_string(*f);
  }
}

// Sampling the trace more finely only moves robustness by the
// interpolation error of the coarse grid.
TEST(StlProperty, DenseResamplingStaysWithinInterpolationBound) {
  CounterRng rng(42);
  for (int i = 0; i < 200; ++i) {
    const Trace tr = fx::random_trace(rng, 5 + rng.next_u64() % 30, 10.0);
    const auto f = fx::random_formula(rng, 1 + static_cast<int>(rng.next_u64() % 3), 10.0);
    const double coarse = stl::robustness(tr, *f).value;
    const double dense = fx::naive_robustness(fx::refine(tr, 10), *f).front();
    EXPECT_LE(std::abs(coarse - dense), fx::interpolation_bound(tr, *f, 10) + 1e-9) << to_string(*f);
  }
}

TEST(StlProperty, DeMorganIsExact) {
  CounterRng rng(43);
  for (int i = 0; i < 300; ++i) {
    const Trace tr = fx::random_trace(rng, 5 + rng.next_u64() % 30, 10.0);
    const auto phi = fx::random_formula(rng, static_cast<int>(rng.next_u64() % 3), 5.0);
    const double a = std::round(rng.uniform(0, 2) * 10) / 10;
    const double b = a + std::round(rng.uniform(0, 3) * 10) / 10;
    const auto lhs = stl::Formula::negation(stl::Formula::temporal(Kind::Globally, a, b, phi));
    const auto rhs = stl::Formula::temporal(Kind::Eventually, a, b, stl::Formula::negation(phi));
    EXPECT_EQ(stl::robustness_signal(tr, *lhs), stl::robustness_signal(tr, *rhs));
    const auto p = fx::random_formula(rng, 1, 5.0);
    const auto q = fx::random_formula(rng, 1, 5.0);
    EXPECT_EQ(stl::robustness_signal(tr, *stl::Formula::negation(stl::Formula::binary(Kind::And, p, q))),
              stl::robustness_signal(tr, *stl::Formula::binary(Kind::Or, stl::Formula::negation(p),
                                                                 stl::Formula::negation(q))));
  }
}

TEST(StlProperty, SignMatchesBooleanSemantics) {
  CounterRng rng(44);
  for (int i = 0; i < 300; ++i) {
    const Trace tr = fx::random_trace(rng, 5 + rng.next_u64() % 30, 10.0);
    const auto f = fx::random_formula(rng, 1 + static_cast<int>(rng.next_u64() % 3), 10.0);
    const auto r = stl::robustness(tr, *f);
    EXPECT_EQ(r.verdict == stl::Verdict::Satisfied, fx::naive_satisfied(tr, *f));
  }
}

// Stretching time and windows by the same factor leaves robustness unchanged.
TEST(StlProperty, TimeRescalingInvariance) {
  CounterRng rng(45);
  for (int i = 0; i < 100; ++i) {
    Trace tr = fx::random_trace(rng, 20, 4.0);
    const double a = std::round(rng.uniform(0, 1) * 4) / 4;
    const double b = a + std::round(rng.uniform(0, 2) * 4) / 4;
    const auto phi = fx::random_formula(rng, 0, 0);
    const auto f = stl::Formula::temporal(Kind::Globally, a, b, phi);
    const double before = stl::robustness(tr, *f).value;
    for (auto& t : tr.times) t *= 2.0;
    const double after = stl::robustness(tr, *stl::Formula::temporal(Kind::Globally, 2 * a, 2 * b, phi)).value;
    EXPECT_NEAR(before, after, 1e-12);
  }
}

// Scaling every atom margin by c > 0 scales robustness by c.
TEST(StlProperty, MarginScaling) {
  CounterRng rng(46);
  for (int i = 0; i < 100; ++i) {
    Trace tr = fx::random_trace(rng, 20, 4.0);
    const auto f = stl::parse_stl("G[0,1] (x > 0.25) or F[0.5,2] (y < -0.5)");
    const double before = stl::robustness(tr, *f).value;
    for (auto& v : tr.data) v *= 4.0;
    const auto g = stl::parse_stl("G[0,1] (x > 1) or F[0.5,2] (y < -2)");
    EXPECT_DOUBLE_EQ(stl::robustness(tr, *g).value, 4.0 * before);
  }
}

TEST(StlProperty, PrintedFormulaEvaluatesIdentically) {
  CounterRng rng(47);
  for (int i = 0; i < 200; ++i) {
    const Trace tr = fx::random_trace(rng, 20, 10.0);
    const auto f = fx::random_formula(rng, 2, 10.0);
    const auto again = stl::parse_stl(to_string(*f));
    EXPECT_EQ(stl::robustness_signal(tr, *again), stl::robustness_signal(tr, *f)) << to_string(*f);
  }
}
