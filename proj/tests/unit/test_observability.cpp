#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>
#include <random>

#include "obsym/observability.hpp"
#include "obsym/structural.hpp"

using namespace obsym;

namespace {

std::vector<SymbolId> two_dof_unknowns() {
  return {intern_symbol("k1"), intern_symbol("dk1"), intern_symbol("k2"), intern_symbol("m")};
}

}  // namespace

TEST_CASE("rank of small matrices, both methods") {
  Expr k = Expr::symbol("k"), c = Expr::symbol("c");
  std::vector<std::vector<Expr>> j = {
      {Expr::integer(1), Expr()},
      {Expr(), Expr::integer(1)},
      {Expr::negate(k), Expr::negate(c)},
  };
  RankOptions prob;
  prob.seed = 1;
  CHECK(rank_of(j, prob).rank == 2);
  RankOptions sym;
  sym.method = RankMethod::Symbolic;
  CHECK(rank_of(j, sym).rank == 2);

  std::vector<std::vector<Expr>> zero(3, std::vector<Expr>(3));
  CHECK(rank_of(zero, prob).rank == 0);
  CHECK(rank_of(zero, sym).rank == 0);
}

TEST_CASE("probabilistic rank equals symbolic rank on the small corpus") {
  std::vector<const char*> entries = {
      "x*y", "x + y", "x^2", "x*y + 1", "tanh(x)", "x/(y + 2)",
  };
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<Expr>> j(3, std::vector<Expr>(3));
    for (auto& row : j) {
      for (auto& e : row) e = parse_expression(entries[rng() % entries.size()]);
    }
    RankOptions prob;
    prob.seed = rng();
    RankOptions sym;
    sym.method = RankMethod::Symbolic;
    CHECK(rank_of(j, prob).rank == rank_of(j, sym).rank);
  }
}

TEST_CASE("two-dof example: order-6 rank deficiency is exactly one") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  AugmentedModel am = augment_parameters(m, two_dof_unknowns());
  LieChain chain = build_chain(am, DerivativeDefinition::AffineWithInputs, 6);
  RankOptions prob;
  prob.seed = 42;
  RankResult r = rank_of(stacked_jacobian(chain), prob);
  CHECK(r.target == 15);
  CHECK(r.rank == 14);
}

TEST_CASE("two-dof analyze: per-state verdicts match the known unobservable set") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  AugmentedModel am = augment_parameters(m, two_dof_unknowns());
  AnalyzeOptions opts;
  opts.rank.seed = 42;
  opts.k_max = 6;
  ObservabilityReport rep = analyze(am, DerivativeDefinition::AffineWithInputs, opts);
  CHECK_FALSE(rep.observable);
  CHECK(rep.deficiency == 1);
  std::vector<std::string> unobs;
  for (SymbolId s : rep.unobservable_states()) unobs.push_back(symbol_name(s));
  CHECK(unobs == std::vector<std::string>{"xt1", "xt2", "k1", "w"});
  // rank monotonicity along the analyzed chain
  for (std::size_t i = 1; i < rep.per_order_rank.size(); ++i) {
    CHECK(rep.per_order_rank[i] >= rep.per_order_rank[i - 1]);
  }

  // with k1 known the mapping becomes observable
  AugmentedModel known =
      augment_parameters(m, {intern_symbol("dk1"), intern_symbol("k2"), intern_symbol("m")});
  ObservabilityReport rep2 = analyze(known, DerivativeDefinition::AffineWithInputs, opts);
  CHECK(rep2.observable);
  CHECK(rep2.state_observable == std::vector<bool>(rep2.z.size(), true));
}

TEST_CASE("deficiency equals the null-space dimension") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  AugmentedModel am = augment_parameters(m, two_dof_unknowns());
  LieChain chain = build_chain(am, DerivativeDefinition::AffineWithInputs, 6);
  RankOptions prob;
  prob.seed = 42;
  RankResult r = rank_of(stacked_jacobian(chain), prob);
  CHECK(r.target - r.rank == 1);
}

TEST_CASE("linear observability matrix") {
  Eigen::MatrixXd A(2, 2);
  A << 0, 1, 0, 0;
  Eigen::MatrixXd C1(1, 2);
  C1 << 1, 0;
  LinearObservability o1 = linear_observability_matrix(A, C1);
  CHECK(o1.rank == 2);
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 0, 0, 1;
  CHECK((o1.matrix - expected).norm() == 0.0);

  Eigen::MatrixXd C2(1, 2);
  C2 << 0, 1;  // velocity sensing cannot see position
  CHECK(linear_observability_matrix(A, C2).rank == 1);

  Eigen::MatrixXd bad(1, 3);
  CHECK_THROWS_AS(linear_observability_matrix(A, bad), DimensionMismatchError);
}

TEST_CASE("definition (1) chain rank equals the linear observability rank") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd A(n, n);
    Eigen::MatrixXd C(1, n);
    for (int i = 0; i < n; ++i) {
      C(0, i) = std::round(dist(rng) * 4) / 4.0;
      for (int j = 0; j < n; ++j) A(i, j) = std::round(dist(rng) * 4) / 4.0;
    }
    if (C.cwiseAbs().maxCoeff() == 0) C(0, 0) = 1;

    ModelDef m;
    for (int i = 0; i < n; ++i) m.states.push_back(intern_symbol("q" + std::to_string(i)));
    for (int i = 0; i < n; ++i) {
      std::vector<Expr> terms;
      for (int j = 0; j < n; ++j) {
        if (A(i, j) != 0) {
          terms.push_back(Expr::constant(Rational(A(i, j))) * Expr::variable(m.states[j]));
        }
      }
      m.dynamics.push_back(Expr::sum(terms));
    }
    std::vector<Expr> cterms;
    for (int j = 0; j < n; ++j) {
      if (C(0, j) != 0) cterms.push_back(Expr::constant(Rational(C(0, j))) * Expr::variable(m.states[j]));
    }
    m.output_names.push_back("y");
    m.outputs.push_back(Expr::sum(cterms));

    AugmentedModel am = augment_parameters(m, {});
    AnalyzeOptions opts;
    opts.rank.seed = rng();
    opts.k_max = n;
    opts.partial = false;
    opts.saturation_window = 0;
    ObservabilityReport rep = analyze(am, DerivativeDefinition::AffineNoInput, opts);
    LinearObservability lo = linear_observability_matrix(A, C);
    CHECK(rep.final_rank.rank == lo.rank);
  }
}

TEST_CASE("discrete-time observability rank matches the continuous one") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(-1, 1);
  const double dt = 0.01;
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = dist(rng);
    }
    A -= (A.eigenvalues().real().maxCoeff() + 0.5) * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd C(1, n);
    for (int j = 0; j < n; ++j) C(0, j) = dist(rng);
    Eigen::MatrixXd Ad = (A * dt).exp();
    CHECK(linear_observability_matrix(A, C).rank == linear_observability_matrix(Ad, C).rank);
  }
}

TEST_CASE("report serialization carries the study metadata") {
  ModelDef m = build_benchmark(BenchmarkCase::TwoDofExample, "acc:1,2");
  AugmentedModel am = augment_parameters(m, two_dof_unknowns());
  AnalyzeOptions opts;
  opts.rank.seed = 4;
  opts.k_max = 4;
  ObservabilityReport rep = analyze(am, DerivativeDefinition::AffineWithInputs, opts);
  std::string json = rep.to_json();
  CHECK(json.find("\"definition\"") != std::string::npos);
  CHECK(json.find("\"per_order_rank\"") != std::string::npos);
  std::string csv = rep.rank_csv();
  CHECK(csv.rfind("order,target_rank,rank", 0) == 0);
}
