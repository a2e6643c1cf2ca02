#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "obsym/model.hpp"
#include "obsym/structural.hpp"

using namespace obsym;

namespace {

const char* kSdof = R"(
# single oscillator with unknown stiffness
[states]
x
v
[params]
k
[constants]
k = 4
[dynamics]
x = v
v = -k*x
[outputs]
y = x
)";

bool same_model(const ModelDef& a, const ModelDef& b) {
  if (a.states != b.states || a.parameters != b.parameters) return false;
  if (a.measured_inputs != b.measured_inputs) return false;
  if (a.unmeasured_inputs != b.unmeasured_inputs) return false;
  if (a.constants != b.constants) return false;
  if (a.dynamics != b.dynamics || a.outputs != b.outputs || a.aux != b.aux) return false;
  return a.output_names == b.output_names && a.aux_names == b.aux_names;
}

Binding random_binding(const std::vector<SymbolId>& syms, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.5, 2.0);
  Binding b;
  for (SymbolId s : syms) b.set(s, dist(rng));
  return b;
}

}  // namespace

TEST_CASE("minimal model parses") {
  ModelDef m = parse_model(kSdof);
  CHECK(m.states.size() == 2);
  CHECK(m.parameters.size() == 1);
  CHECK(m.dynamics[0] == Expr::symbol("v"));
  CHECK(m.outputs[0] == Expr::symbol("x"));
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_model("[states]\nx\n[dynamics]\nx = k9*x\n[outputs]\ny = x\n"),
                  UndeclaredSymbolError);
  CHECK_THROWS_AS(parse_model("[states]\nx\nx\n[dynamics]\nx = x\n[outputs]\ny = x\n"),
                  DuplicateSymbolError);
  CHECK_THROWS_AS(parse_model("[states]\nx\nv\n[dynamics]\nx = v\n[outputs]\ny = x\n"),
                  ArityMismatchError);
  CHECK_THROWS_AS(parse_model("[states]\nx\n[dynamics]\nx = ((x\n[outputs]\ny = x\n"),
                  SyntaxError);
  CHECK_THROWS_AS(parse_model("bare line\n"), SyntaxError);
}

TEST_CASE("serialize/parse round trip is structurally identical") {
  for (auto kase : {BenchmarkCase::TwoDofExample, BenchmarkCase::IsolatedInerter,
                    BenchmarkCase::TopFloorNes, BenchmarkCase::ViscousWind}) {
    ModelDef m = build_benchmark(kase, kase == BenchmarkCase::TwoDofExample ? "acc:1,2"
                                 : kase == BenchmarkCase::IsolatedInerter  ? "acc:2"
                                                                           : "acc:all");
    ModelDef back = parse_model(serialize_model(m));
    CHECK(same_model(m, back));
    // and once more through the text form
    CHECK(serialize_model(back) == serialize_model(m));
  }
}

TEST_CASE("benchmark section builds the factory model") {
  ModelDef direct = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  ModelDef via_file = parse_model("[benchmark]\ncase = two-dof\nsensors = acc:1,2\n");
  CHECK(same_model(direct, via_file));
}

TEST_CASE("parameter augmentation") {
  ModelDef sdof = parse_model(kSdof);
  AugmentedModel am = augment_parameters(sdof, {intern_symbol("k")});
  REQUIRE(am.q.size() == 3);
  CHECK(am.dynamics[0] == Expr::symbol("v"));
  CHECK(am.dynamics[1] == Expr::negate(Expr::symbol("k") * Expr::symbol("x")));
  CHECK(am.dynamics[2].is_zero());

  // identity augmentation substitutes the nominal value
  AugmentedModel known = augment_parameters(sdof, {});
  CHECK(known.q.size() == 2);
  CHECK(known.dynamics[1] == Expr::integer(-4) * Expr::symbol("x"));

  // a known parameter without a value is an error
  ModelDef no_value = sdof;
  no_value.constants.clear();
  CHECK_THROWS_AS(augment_parameters(no_value, {}), MissingConstantError);
}

TEST_CASE("two-dof example dimensions match the benchmark study") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  CHECK(m.states.size() == 4);
  std::vector<SymbolId> un = {intern_symbol("k1"), intern_symbol("dk1"), intern_symbol("k2"),
                              intern_symbol("m")};
  AugmentedModel am = augment_parameters(m, un);
  CHECK(am.q.size() == 8);
  AugmentedModel chained = augment_unmeasured_inputs(am, 6);
  CHECK(chained.q.size() == 15);
  CHECK(chained.chain_terminators.size() == 1);
  CHECK(symbol_name(chained.chain_terminators[0]) == "w__d7");
}

TEST_CASE("input chain base case and error") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  AugmentedModel am = augment_parameters(m, {});
  AugmentedModel chained = augment_unmeasured_inputs(am, 0);
  CHECK(chained.q.size() == am.q.size() + 1);
  CHECK(chained.dynamics.back() == Expr::variable(derived_input_symbol(intern_symbol("w"), 1)));

  ModelDef sdof = parse_model(kSdof);
  AugmentedModel no_w = augment_parameters(sdof, {intern_symbol("k")});
  CHECK_THROWS_AS(augment_unmeasured_inputs(no_w, 2), NoUnmeasuredInputsError);
}

TEST_CASE("affine decomposition of the two-dof example") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  std::vector<SymbolId> un = {intern_symbol("k1"), intern_symbol("dk1"), intern_symbol("k2"),
                              intern_symbol("m")};
  AugmentedModel am = augment_parameters(m, un);
  AffineDecomposition d = decompose_affine(am);

  Expr inv_m = Expr::quotient(Expr::integer(1), Expr::symbol("m"));
  // measured force enters the first-story velocity row as 1/m
  REQUIRE(d.g_u.size() == 1);
  CHECK(d.g_u[0][2] == inv_m);
  for (std::size_t i : {0u, 1u, 3u, 4u, 5u, 6u, 7u}) CHECK(d.g_u[0][i].is_zero());
  // unmeasured force: second-story velocity row
  REQUIRE(d.g_w.size() == 1);
  CHECK(d.g_w[0][3] == inv_m);
  // output coefficients
  CHECK(d.h_w[0][0].is_zero());
  CHECK(d.h_w[0][1] == inv_m);
  CHECK(d.h_u[0][0] == inv_m);
  CHECK(d.h_u[0][1].is_zero());
}

TEST_CASE("affine recomposition identity at random bindings") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  std::vector<SymbolId> un = {intern_symbol("k1"), intern_symbol("dk1"), intern_symbol("k2"),
                              intern_symbol("m")};
  AugmentedModel am = augment_parameters(m, un);
  AffineDecomposition d = decompose_affine(am);
  std::mt19937_64 rng(17);

  std::vector<SymbolId> all = am.q;
  for (SymbolId s : am.measured_inputs) all.push_back(s);
  for (SymbolId s : am.free_unmeasured) all.push_back(s);

  for (int trial = 0; trial < 50; ++trial) {
    Binding b = random_binding(all, rng);
    for (std::size_t row = 0; row < am.dynamics.size(); ++row) {
      double recomposed = evaluate(d.f_a[row], b);
      for (std::size_t j = 0; j < am.measured_inputs.size(); ++j) {
        recomposed += evaluate(d.g_u[j][row], b) * *b.get(am.measured_inputs[j]);
      }
      for (std::size_t j = 0; j < am.free_unmeasured.size(); ++j) {
        recomposed += evaluate(d.g_w[j][row], b) * *b.get(am.free_unmeasured[j]);
      }
      double direct = evaluate(am.dynamics[row], b);
      CHECK(std::abs(recomposed - direct) <= 1e-10 * (1 + std::abs(direct)));
    }
    for (std::size_t row = 0; row < am.outputs.size(); ++row) {
      double recomposed = evaluate(d.h_0[row], b);
      for (std::size_t j = 0; j < am.measured_inputs.size(); ++j) {
        recomposed += evaluate(d.h_u[j][row], b) * *b.get(am.measured_inputs[j]);
      }
      for (std::size_t j = 0; j < am.free_unmeasured.size(); ++j) {
        recomposed += evaluate(d.h_w[j][row], b) * *b.get(am.free_unmeasured[j]);
      }
      double direct = evaluate(am.outputs[row], b);
      CHECK(std::abs(recomposed - direct) <= 1e-10 * (1 + std::abs(direct)));
    }
  }
}

TEST_CASE("selector columns of the chained model are unit vectors") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  AugmentedModel am = augment_parameters(m, {intern_symbol("k1")});
  AugmentedModel chained = augment_unmeasured_inputs(am, 2);
  AffineDecomposition d = decompose_affine(chained);
  REQUIRE(d.selectors.size() == 1);
  const auto& s = d.selectors[0];
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 == s.size()) {
      CHECK(s[i].is_one());
    } else {
      CHECK(s[i].is_zero());
    }
  }
}

TEST_CASE("nonlinear input dependence is rejected") {
  ModelDef m = parse_model(R"(
[states]
x
[inputs_measured]
u
[dynamics]
x = x + u^2
[outputs]
y = x
)");
  AugmentedModel am = augment_parameters(m, {});
  CHECK_THROWS_AS(decompose_affine(am), NotAffineInInputsError);
}
