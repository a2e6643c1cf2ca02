#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "obsym/lie.hpp"

namespace obsym {

struct DegenerateEvaluationError : ModelError {
  using ModelError::ModelError;
};

enum class RankMethod { Symbolic, Probabilistic };

struct RankResult {
  int rank = 0;
  int target = 0;
  RankMethod method = RankMethod::Probabilistic;
  int trials = 0;
  std::uint64_t seed = 0;

  bool full() const { return rank == target; }
};

struct RankOptions {
  RankMethod method = RankMethod::Probabilistic;
  int trials = 5;
  std::uint64_t seed = 0;
  /// Relative pivot threshold after row equilibration.
  double pivot_tol = 1e-9;
};

/// Rank of a symbolic matrix. Probabilistic: evaluates at `trials` random
/// bindings (each free symbol uniform on [1,2], fresh per trial), numeric
/// row reduction with the relative pivot threshold, maximum rank across
/// trials; this can only underestimate the generic rank. Symbolic: exact
/// elimination over the rational-function field.
RankResult rank_of(const std::vector<std::vector<Expr>>& jacobian, const RankOptions& opts);

/// Numeric rank of an already-evaluated matrix (row-equilibrated Gaussian
/// elimination with complete pivoting).
int numeric_rank(Eigen::MatrixXd m, double pivot_tol = 1e-9);

struct ObservabilityReport {
  DerivativeDefinition definition = DerivativeDefinition::GeneralExtended;
  std::vector<SymbolId> z;
  std::vector<int> per_order_rank;
  std::vector<int> per_order_target;
  RankResult final_rank;
  bool observable = false;
  int deficiency = 0;
  std::vector<bool> state_observable;  // parallel to z
  bool practically_observable = false;
  int final_order = 0;

  std::vector<SymbolId> unobservable_states() const;
  std::string to_json() const;
  std::string rank_csv() const;
};

struct AnalyzeOptions {
  int k_max = -1;  // -1: dim(z) of the starting chain
  RankOptions rank;
  /// Stop once the deficiency has been stable for this many consecutive
  /// orders (the w-ladder growth is accounted for in the target); 0 disables.
  int saturation_window = 2;
  bool partial = true;  // run the per-state column-removal test
};

/// Runs the chain order by order, recording rank against the growing target,
/// and fills the per-state observability flags on the final chain.
ObservabilityReport analyze(const AugmentedModel& m, DerivativeDefinition d,
                            const AnalyzeOptions& opts);

/// Chain-reusing variant; returns the final chain too.
ObservabilityReport analyze_chain(LieChain& chain, const AnalyzeOptions& opts);

/// Column-removal test: state m is observable iff dropping column m lowers
/// the rank by exactly one.
std::vector<bool> partial_observability(const LieChain& chain, const RankOptions& opts);

struct LinearObservability {
  Eigen::MatrixXd matrix;  // stacked [C; CA; ...; CA^(N-1)]
  int rank = 0;
};

LinearObservability linear_observability_matrix(const Eigen::MatrixXd& A,
                                                const Eigen::MatrixXd& C);

}  // namespace obsym
