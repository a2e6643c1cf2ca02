#include <benchmark/benchmark.h>

#include "obsym/lie.hpp"
#include "obsym/observability.hpp"
#include "obsym/structural.hpp"

using namespace obsym;

namespace {

AugmentedModel two_dof() {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  return augment_parameters(m, {intern_symbol("k1"), intern_symbol("dk1"),
                                intern_symbol("k2"), intern_symbol("m")});
}

}  // namespace

static void BM_BuildChainOrder6(benchmark::State& state) {
  AugmentedModel am = two_dof();
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_chain(am, DerivativeDefinition::AffineWithInputs, 6));
  }
}
BENCHMARK(BM_BuildChainOrder6);

static void BM_ProbabilisticRank(benchmark::State& state) {
  AugmentedModel am = two_dof();
  LieChain chain = build_chain(am, DerivativeDefinition::AffineWithInputs, 6);
  auto jac = stacked_jacobian(chain);
  RankOptions opts;
  opts.seed = 17;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rank_of(jac, opts));
  }
}
BENCHMARK(BM_ProbabilisticRank);

BENCHMARK_MAIN();
