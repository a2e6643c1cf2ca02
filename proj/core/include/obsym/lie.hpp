#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "obsym/model.hpp"

namespace obsym {

struct DefinitionNotApplicableError : ModelError {
  using ModelError::ModelError;
};

struct DimensionMismatchError : ModelError {
  using ModelError::ModelError;
};

/// The three Lie-derivative recursions for the output function. Which one
/// applies depends on the model shape:
///   AffineNoInput    — dynamics affine in measured inputs, no unmeasured
///                      inputs, outputs free of inputs; branches the chain
///                      over {drift, g_u1, ...}.
///   AffineWithInputs — dynamics and outputs affine in measured and
///                      unmeasured inputs; the engine grows the w-derivative
///                      ladder one level per order.
///   GeneralExtended  — plain total time derivatives; always applicable.
///                      Derivatives of measured inputs enter as fresh
///                      symbols, derivatives of unmeasured inputs extend z.
enum class DerivativeDefinition { AffineNoInput, AffineWithInputs, GeneralExtended };

const char* derivative_definition_name(DerivativeDefinition d);
DerivativeDefinition derivative_definition_from_name(const std::string& name);

/// Stacked Lie-derivative chain together with its Jacobian blocks. Row block
/// j keeps the z-width it was created with; the stacked Jacobian pads older
/// blocks with zero columns as z grows.
struct LieChain {
  DerivativeDefinition definition;
  AugmentedModel model;

  std::vector<SymbolId> z;

  struct Block {
    std::vector<Expr> omega;
    std::vector<std::vector<Expr>> jacobian;  // |omega| rows, z_width columns
    std::size_t z_width = 0;
  };
  std::vector<Block> blocks;

  int order() const { return static_cast<int>(blocks.size()) - 1; }
  std::size_t total_rows() const;

  // engine bookkeeping
  std::vector<Expr> drift;                    // affine definitions: current drift field
  std::vector<std::vector<Expr>> g_u_fields;  // affine definitions: measured-input fields
  std::vector<std::vector<Expr>> g_w_columns; // base-level w columns (definition 2)
  std::unordered_map<SymbolId, Expr> rates;   // definition 3: symbol -> d/dt
  std::vector<SymbolId> u_rate_symbols;       // definition 3: minted input derivatives
  std::unordered_map<ExprId, bool> seen_entries;  // chain-wide duplicate pruning
  std::size_t pruned_entries = 0;
};

/// (dOmega/dz) * field, entrywise simplified.
std::vector<Expr> lie_derivative_along(std::span<const Expr> omega, std::span<const Expr> field,
                                       std::span<const SymbolId> z);

/// Order-0 chain; throws DefinitionNotApplicableError when the model shape
/// does not fit the requested definition.
LieChain start_chain(const AugmentedModel& m, DerivativeDefinition d);

/// Chain extended by one order.
LieChain extend_chain(const LieChain& c);

LieChain build_chain(const AugmentedModel& m, DerivativeDefinition d, int k_max);

/// Stacked Jacobian with zero padding to the current z width.
std::vector<std::vector<Expr>> stacked_jacobian(const LieChain& c);

/// Index of the first z entry that is a derived unmeasured-input symbol of
/// order >= 1 (z.size() when none).
std::size_t first_higher_chain_index(const LieChain& c);

}  // namespace obsym
