#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "obsym/poly.hpp"

using namespace obsym;

namespace {

SparsePoly from_text(const std::string& text) {
  AtomTable atoms;
  auto f = expr_to_fraction(parse_expression(text), nullptr);
  REQUIRE(f.has_value());
  REQUIRE(f->den().is_constant());
  return f->num();
}

}  // namespace

TEST_CASE("exact division") {
  SparsePoly a = from_text("x^2 - y^2");
  SparsePoly b = from_text("x - y");
  auto q = SparsePoly::div_exact(a, b);
  REQUIRE(q.has_value());
  CHECK(*q == from_text("x + y"));

  CHECK_FALSE(SparsePoly::div_exact(from_text("x^2 + 1"), from_text("x - y")).has_value());
}

TEST_CASE("gcd recovers shared factors") {
  SparsePoly g = from_text("x + 2*y - 3");
  SparsePoly a = g * from_text("x^2 + y");
  SparsePoly b = g * from_text("x - 7*y^2 + 1");
  SparsePoly got = SparsePoly::gcd(a, b);
  CHECK(got == g.normalized_primitive());

  // coprime inputs
  CHECK(SparsePoly::gcd(from_text("x + 1"), from_text("y + 1")).is_constant());
  // monomial fast path
  CHECK(SparsePoly::gcd(from_text("6*x^2*y"), from_text("4*x*y^3")) == from_text("x*y"));
}

TEST_CASE("gcd randomized against construction") {
  std::mt19937_64 rng(21);
  auto rand_poly = [&](int terms) {
    SparsePoly p = SparsePoly::constant(Rational(static_cast<long>(rng() % 7) - 3));
    SymbolId xs[3] = {intern_symbol("x"), intern_symbol("y"), intern_symbol("z")};
    for (int t = 0; t < terms; ++t) {
      SparsePoly m = SparsePoly::constant(Rational(1 + static_cast<long>(rng() % 5)));
      for (int v = 0; v < 3; ++v) m = m * SparsePoly::variable(xs[v]).pow(rng() % 3);
      p = p + m;
    }
    return p;
  };
  for (int trial = 0; trial < 25; ++trial) {
    SparsePoly g = rand_poly(2);
    if (g.is_zero()) continue;
    SparsePoly a = g * rand_poly(2);
    SparsePoly b = g * rand_poly(2);
    if (a.is_zero() || b.is_zero()) continue;
    SparsePoly got = SparsePoly::gcd(a, b);
    // the computed gcd must divide both and be divisible by g
    CHECK(SparsePoly::div_exact(a, got).has_value());
    CHECK(SparsePoly::div_exact(b, got).has_value());
    CHECK(SparsePoly::div_exact(got, SparsePoly::gcd(got, g)).has_value());
    CHECK(SparsePoly::gcd(got, g) == g.normalized_primitive());
  }
}

TEST_CASE("fractions reduce to lowest terms") {
  AtomTable atoms;
  auto f = expr_to_fraction(parse_expression("(k1*k2 + k2^2)/(k2^2)"), &atoms);
  REQUIRE(f.has_value());
  Expr e = fraction_to_expr(*f, &atoms);
  CHECK(e == parse_expression("(k1 + k2)/k2"));
}

TEST_CASE("non-rational subtrees become consistent atoms") {
  AtomTable atoms;
  auto f = expr_to_fraction(parse_expression("(k*tanh(x))/tanh(x)"), &atoms);
  REQUIRE(f.has_value());
  CHECK(fraction_to_expr(*f, &atoms) == Expr::symbol("k"));
}

TEST_CASE("polynomial evaluation matches expression evaluation") {
  std::mt19937_64 rng(5);
  Expr e = parse_expression("x^3*y - 2*x*y^2 + 7/3");
  auto f = expr_to_fraction(e, nullptr);
  REQUIRE(f.has_value());
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  for (int t = 0; t < 10; ++t) {
    Binding b{{"x", dist(rng)}, {"y", dist(rng)}};
    CHECK(f->num().eval(b) / f->den().eval(b) ==
          doctest::Approx(evaluate(e, b)).epsilon(1e-12));
  }
}

TEST_CASE("exact rational evaluation") {
  SparsePoly p = from_text("x^2 + 3*x - 1/2");
  std::unordered_map<SymbolId, Rational> at{{intern_symbol("x"), Rational(3, 2)}};
  CHECK(p.eval_exact(at) == Rational(9, 4) + Rational(9, 2) - Rational(1, 2));
}
