#pragma once

#include <Eigen/Dense>

#include "obsym/observability.hpp"

namespace obsym {

/// Null-space basis of the stacked Lie-derivative Jacobian. The symbolic
/// path yields exact rational-function vectors normalized so the first
/// structurally nonzero entry is 1. On systems too large for symbolic
/// elimination only numeric null vectors at random specializations are
/// available, together with the recovered zero/nonzero pattern.
struct InfinitesimalBasis {
  std::vector<SymbolId> z;
  int r = 0;
  bool symbolic = false;
  std::vector<std::vector<Expr>> vectors;          // r vectors of |z| entries
  std::vector<std::vector<bool>> nonzero_pattern;  // per vector

  struct NumericSample {
    Binding binding;
    Eigen::MatrixXd basis;  // |z| x r, columns are null vectors
  };
  std::vector<NumericSample> samples;

  /// Union of per-vector supports: the states any symmetry acts on.
  std::vector<bool> acted_on() const;
};

struct SymmetryOptions {
  RankOptions rank;
  /// Above this dimension the symbolic elimination path is skipped.
  std::size_t symbolic_dim_limit = 20;
  int numeric_samples = 5;
};

InfinitesimalBasis infinitesimal_basis(const LieChain& chain, const SymmetryOptions& opts = {});

/// Truncated Lie-series reconstruction of the one-parameter flow:
/// coefficients c_0 = z, c_{m+1} = (dc_m/dz) xi / (m+1). Exact termination is
/// flagged when the next coefficient vanishes identically.
struct SymmetryFlow {
  std::vector<SymbolId> z;
  int order = 0;
  bool exact_termination = false;
  std::vector<std::vector<Expr>> coefficients;  // [m][component], m = 0..order

  /// phi(q, eps) by Horner evaluation of the series.
  std::vector<double> evaluate(const Binding& b, double eps) const;
  /// Symbolic component j as an expression in z and `eps_symbol`.
  Expr component(std::size_t j, SymbolId eps_symbol) const;
};

SymmetryFlow lie_series_flow(std::span<const Expr> xi, std::span<const SymbolId> z, int order);

/// Scheme "add a measurement": contraction dh_new/dz . xi per symmetry;
/// the symmetry is destroyed iff the contraction is not identically zero.
std::vector<Expr> measurement_contractions(const InfinitesimalBasis& basis, const Expr& h_new);
std::vector<bool> destroys_by_measurement(const InfinitesimalBasis& basis, const Expr& h_new);

/// Scheme "transform the state vector": contraction dT/dz . xi; the symmetry
/// is destroyed in the new coordinates iff every component contracts to zero
/// (T is an invariant of the group).
std::vector<std::vector<Expr>> transformation_contractions(const InfinitesimalBasis& basis,
                                                           std::span<const Expr> transform);
std::vector<bool> destroys_by_transformation(const InfinitesimalBasis& basis,
                                             std::span<const Expr> transform);

/// True when e is identically zero: exact when structural/cancellation
/// simplification settles it, else 20 random specializations at 1e-10.
bool identically_zero(const Expr& e, std::uint64_t seed = 12345);

}  // namespace obsym
