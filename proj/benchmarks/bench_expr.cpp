#include <benchmark/benchmark.h>

#include "obsym/expr.hpp"

using namespace obsym;

static void BM_Differentiate(benchmark::State& state) {
  Expr e = parse_expression(
      "x*(1 - (tanh(100*z)*z)^2*(0.8 + 0.75*tanh(100*x)))/uy + k*(y - x)/m");
  SymbolId z = intern_symbol("z");
  for (auto _ : state) {
    benchmark::DoNotOptimize(differentiate(e, z));
  }
}
BENCHMARK(BM_Differentiate);

static void BM_Evaluate(benchmark::State& state) {
  Expr e = parse_expression(
      "x*(1 - (tanh(100*z)*z)^2*(0.8 + 0.75*tanh(100*x)))/uy + k*(y - x)/m");
  Binding b{{"x", 0.3}, {"z", 0.02}, {"uy", 0.04}, {"k", 2.0}, {"y", 0.1}, {"m", 1.5}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate(e, b));
  }
}
BENCHMARK(BM_Evaluate);

static void BM_ModularEvaluate(benchmark::State& state) {
  Expr e = parse_expression("(a + b)^4*(a - b)^3/(a^2 + b^2 + 1) + tanh(a)*b");
  for (auto _ : state) {
    ModularEvaluator ev(state.iterations());
    benchmark::DoNotOptimize(ev.eval(e));
  }
}
BENCHMARK(BM_ModularEvaluate);

BENCHMARK_MAIN();
