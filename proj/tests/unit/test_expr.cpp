#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "obsym/expr.hpp"

using namespace obsym;

namespace {

Binding random_binding(const std::vector<SymbolId>& syms, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  Binding b;
  for (SymbolId s : syms) b.set(s, dist(rng));
  return b;
}

// central finite difference in one variable
double finite_difference(const Expr& e, const Binding& at, SymbolId v, double h = 1e-6) {
  Binding hi = at, lo = at;
  hi.set(v, *at.get(v) + h);
  lo.set(v, *at.get(v) - h);
  return (evaluate(e, hi) - evaluate(e, lo)) / (2 * h);
}

}  // namespace

TEST_CASE("power rule and chain rule basics") {
  Expr x = Expr::symbol("x"), k = Expr::symbol("k");
  Expr e = k * Expr::power(x, 2);
  Expr d = differentiate(e, x.symbol_id());
  CHECK(d == Expr::integer(2) * k * x);

  Expr rho = Expr::symbol("rho");
  Expr t = Expr::tanh(rho * x);
  Expr dt = differentiate(t, x.symbol_id());
  // rho * (1 - tanh(rho x)^2)
  Expr expected = rho * (Expr::integer(1) - Expr::power(Expr::tanh(rho * x), 2));
  CHECK(dt == expected);
}

TEST_CASE("derivative matches central finite differences on a corpus") {
  std::vector<std::string> corpus = {
      "k*x^2 + c*x*y - 3*y",
      "(a + b*x)/(m + x^2)",
      "tanh(100*z)*z",
      "x*(1 - (tanh(10*z)*z)^2*(g + b*tanh(10*x)))/u",
      "(x^2)^(1/4) + y/(x + 2)",
      "(q + 2*r)^3/(q - 5)",
  };
  std::mt19937_64 rng(7);
  for (const auto& text : corpus) {
    Expr e = parse_expression(text);
    auto vars = e.free_variables();
    for (int trial = 0; trial < 20; ++trial) {
      Binding b = random_binding(vars, rng);
      for (SymbolId v : vars) {
        double sym = evaluate(differentiate(e, v), b);
        double fd = finite_difference(e, b, v);
        double scale = std::max(1.0, std::abs(fd));
        CHECK(std::abs(sym - fd) <= 1e-5 * scale);
      }
    }
  }
}

TEST_CASE("derivative of the hysteresis rate at z=0 against finite differences") {
  // rate = xd0/uy * (1 - (tanh(rho z) z)^2 (gamma + beta tanh(rho xd0)))
  Expr rate = parse_expression(
      "xd0*(1 - (tanh(100*z)*z)^2*(0.8 + 0.75*tanh(100*xd0)))/uy");
  SymbolId z = intern_symbol("z");
  Binding at{{"xd0", 1.0}, {"uy", 40.0}, {"z", 0.0}};
  double sym = evaluate(differentiate(rate, z), at);
  double fd = finite_difference(rate, at, z);
  CHECK(std::abs(sym - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("linearity of differentiation") {
  Expr e1 = parse_expression("x^3 + tanh(2*x)*y");
  Expr e2 = parse_expression("y/(x + 3)");
  Expr a = Expr::rational(3, 2), b = Expr::integer(-4);
  SymbolId x = intern_symbol("x");
  Expr lhs = differentiate(a * e1 + b * e2, x);
  Expr rhs = a * differentiate(e1, x) + b * differentiate(e2, x);
  std::mt19937_64 rng(11);
  auto vars = lhs.free_variables();
  for (SymbolId v : rhs.free_variables()) vars.push_back(v);
  for (int t = 0; t < 20; ++t) {
    Binding bd = random_binding(vars, rng);
    CHECK(evaluate(lhs, bd) == doctest::Approx(evaluate(rhs, bd)).epsilon(1e-12));
  }
}

TEST_CASE("simplification identities") {
  Expr x = Expr::symbol("x");
  CHECK(x + Expr::integer(0) == x);
  CHECK(parse_expression("2*3*x") == Expr::integer(6) * x);
  CHECK(parse_expression("x - x").is_zero());
  CHECK(parse_expression("x*x") == Expr::power(x, 2));
  CHECK(parse_expression("x/1") == x);
  CHECK(parse_expression("0/x").is_zero());
}

TEST_CASE("quotient cancellation is a policy, off by default") {
  Expr kx_over_k = parse_expression("(k*x)/k");
  CHECK(kx_over_k.op() == ExprOp::Quotient);  // kept verbatim
  Expr cancelled = simplify(kx_over_k, {.cancel_quotients = true});
  CHECK(cancelled == Expr::symbol("x"));
}

TEST_CASE("simplify is idempotent and preserves semantics") {
  std::mt19937_64 rng(3);
  std::vector<std::string> corpus = {
      "(x + y)^2/(x*y) - tanh(x - y)",
      "((a*b)/(c*d))*(c/a)",
      "1/(1/(x + 1) + 1/(y + 1))",
  };
  for (const auto& text : corpus) {
    Expr e = parse_expression(text);
    for (bool cancel : {false, true}) {
      Expr s = simplify(e, {.cancel_quotients = cancel});
      CHECK(simplify(s, {.cancel_quotients = cancel}) == s);
      auto vars = e.free_variables();
      for (int t = 0; t < 100; ++t) {
        Binding b = random_binding(vars, rng);
        double ve = evaluate(e, b);
        double vs = evaluate(s, b);
        CHECK(std::abs(ve - vs) <= 1e-12 * (1 + std::abs(ve)));
      }
    }
  }
}

TEST_CASE("evaluation basics and errors") {
  CHECK(evaluate(parse_expression("x + y"), {{"x", 1.0}, {"y", 2.0}}) == 3.0);

  // steep tanh saturates
  double v = evaluate(parse_expression("tanh(rho*xd)"), {{"rho", 100.0}, {"xd", 1.0}});
  CHECK(v > 0.9999);

  // hysteresis rate at z = 0: the hysteresis term vanishes
  Expr rate = parse_expression("xd0*(1 - (tanh(100*z)*z)^2*(0.8 + 0.75*tanh(100*xd0)))/uy");
  double r = evaluate(rate, {{"xd0", 1.0}, {"uy", 40.0}, {"z", 0.0}});
  CHECK(r == doctest::Approx(0.025).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate(parse_expression("x + q17"), Binding{{"x", 1.0}}),
                  UnboundVariableError);
  CHECK_THROWS_AS(evaluate(parse_expression("x/y"), Binding{{"x", 1.0}, {"y", 0.0}}),
                  DivisionByZeroError);
}

TEST_CASE("parse/print round trips") {
  std::vector<std::string> corpus = {
      "x", "-x", "2*k1*x", "(k1 + k2)/k2", "x^2 - 2*x + 1", "tanh(100*z)*z",
      "1/2*x + 3/4", "x^(1/4)", "(x + y)^3/(x - y)", "a - b - c", "2.488e9*x",
      "-(k1 + dk1*x1)*x1 + k2*(x2 - x1) - c1*v1 + u",
  };
  for (const auto& text : corpus) {
    Expr e = parse_expression(text);
    Expr back = parse_expression(to_string(e));
    CHECK(back == e);
  }
}

TEST_CASE("parser rejects malformed input with location") {
  CHECK_THROWS_AS(parse_expression("x +"), SyntaxError);
  CHECK_THROWS_AS(parse_expression("foo(x)"), SyntaxError);
  CHECK_THROWS_AS(parse_expression("x ^ y"), SyntaxError);  // symbolic exponent
  CHECK_THROWS_AS(parse_expression("(x"), SyntaxError);
  try {
    parse_expression("x + \n⊥", 10);
    CHECK(false);
  } catch (const SyntaxError& e) {
    CHECK(e.line == 11);
  }
}

TEST_CASE("decimal literals are exact rationals") {
  Expr e = parse_expression("0.1");
  CHECK(e.constant_value() == Rational(1, 10));
  CHECK(parse_expression("2.488e9").constant_value() == Rational(2488000000));
  CHECK(parse_expression("1.25e-3").constant_value() == Rational(1, 800));
}

TEST_CASE("fractional powers stay unmerged and evaluate on the right branch") {
  Expr x = Expr::symbol("x");
  Expr e = Expr::power(Expr::power(x, 2), Rational(1, 4));
  CHECK(e.op() == ExprOp::Power);  // (x^2)^(1/4) must not collapse to sqrt(x)
  double v = evaluate(e, {{"x", -2.0}});
  CHECK(v == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("substitution rebuilds canonically") {
  Expr e = parse_expression("(k*x + c)/m");
  std::unordered_map<SymbolId, Expr> map{{intern_symbol("k"), Expr::integer(2)},
                                         {intern_symbol("m"), Expr::rational(1, 2)}};
  Expr s = substitute(e, map);
  CHECK(s == parse_expression("2*(2*x + c)"));
}

TEST_CASE("modular evaluator agrees with rational evaluation on exact points") {
  // In Z_p the expression (x+1)^2 - x^2 - 2x - 1 must be exactly zero.
  Expr zero_expr = parse_expression("(x + 1)^2 - x^2 - 2*x - 1");
  CHECK(zero_expr.is_zero());  // already canonical

  ModularEvaluator ev(1234);
  Expr e = parse_expression("(a + b)*(a - b)");
  Expr e2 = parse_expression("a^2 - b^2");
  CHECK(ev.eval(e) == ev.eval(e2));

  // tanh atoms are consistent across shared subtrees
  Expr t1 = parse_expression("tanh(3*x)*tanh(3*x)");
  Expr t2 = parse_expression("tanh(3*x)^2");
  CHECK(ev.eval(t1) == ev.eval(t2));
}
