#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "obsym/expr.hpp"

namespace obsym {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UndeclaredSymbolError : ModelError {
  explicit UndeclaredSymbolError(const std::string& sym, const std::string& where)
      : ModelError("undeclared symbol '" + sym + "' in " + where), symbol(sym) {}
  std::string symbol;
};

struct DuplicateSymbolError : ModelError {
  explicit DuplicateSymbolError(const std::string& sym)
      : ModelError("duplicate symbol declaration '" + sym + "'"), symbol(sym) {}
  std::string symbol;
};

struct ArityMismatchError : ModelError {
  using ModelError::ModelError;
};

struct MissingConstantError : ModelError {
  explicit MissingConstantError(const std::string& sym)
      : ModelError("known parameter '" + sym + "' has no constants value"), symbol(sym) {}
  std::string symbol;
};

struct NoUnmeasuredInputsError : ModelError {
  NoUnmeasuredInputsError() : ModelError("model declares no unmeasured inputs") {}
};

struct NotAffineInInputsError : ModelError {
  explicit NotAffineInInputsError(const std::string& what, const Expr& offender)
      : ModelError("not affine in inputs: " + what), offending(offender) {}
  Expr offending;
};

/// A state-space input-output model: states x, parameters, measured inputs u,
/// unmeasured inputs w, dynamics xdot = f(x, theta, u, w) and outputs
/// y = h(x, theta, u, w). Constants carry known numeric values (including
/// nominal values for parameters, used when a parameter is treated as known
/// and as simulation truth).
struct ModelDef {
  std::vector<SymbolId> states;
  std::vector<SymbolId> parameters;
  std::vector<SymbolId> measured_inputs;
  std::vector<SymbolId> unmeasured_inputs;
  std::unordered_map<SymbolId, Rational> constants;
  std::vector<Expr> dynamics;  // one per state, same order
  std::vector<std::string> output_names;
  std::vector<Expr> outputs;
  std::vector<std::string> aux_names;  // named derived quantities (device forces, ...)
  std::vector<Expr> aux;

  Binding constants_binding() const;
  bool is_state(SymbolId s) const;
  /// Throws if declarations are inconsistent or expressions reference
  /// undeclared symbols.
  void validate() const;
};

/// Model with unknown parameters appended as constant states and optionally
/// the unmeasured-input derivative chain appended. Parameter rows of the
/// dynamics are literal zero; chain rows walk w^(i) -> w^(i+1), and the top
/// row references the fresh terminator symbol w^(n+1), which acts as a free
/// input from then on.
struct AugmentedModel {
  ModelDef base;
  std::vector<SymbolId> q;  // states ++ unknown parameters ++ w-chain
  std::vector<SymbolId> unknown_parameters;
  int input_chain_order = -1;  // -1: no unmeasured-input augmentation
  std::vector<Expr> dynamics;  // one per q entry
  std::vector<Expr> outputs;   // known parameters substituted
  std::vector<Expr> aux;
  std::vector<SymbolId> measured_inputs;
  std::vector<SymbolId> free_unmeasured;  // w symbols still acting as inputs
  std::vector<SymbolId> chain_terminators;

  std::size_t dim() const { return q.size(); }
  /// View usable by the simulator: q as states, remaining inputs as inputs.
  ModelDef as_model() const;
};

struct AffineDecomposition {
  std::vector<Expr> f_a;
  std::vector<std::vector<Expr>> g_u;        // one column per measured input
  std::vector<std::vector<Expr>> g_w;        // one column per free unmeasured input
  std::vector<std::vector<Expr>> selectors;  // unit columns for chain terminators
  std::vector<Expr> h_0;
  std::vector<std::vector<Expr>> h_u;
  std::vector<std::vector<Expr>> h_w;
};

ModelDef parse_model(const std::string& text);
std::string serialize_model(const ModelDef& m);

/// Derived-input symbol for order k >= 1 (e.g. w -> w__d1). Order 0 is the
/// base symbol itself.
SymbolId derived_input_symbol(SymbolId base, int k);
std::string derived_input_display(SymbolId base, int k);

AugmentedModel augment_parameters(const ModelDef& m, const std::vector<SymbolId>& unknowns);

AugmentedModel augment_unmeasured_inputs(const AugmentedModel& m, int order);

AffineDecomposition decompose_affine(const AugmentedModel& m);

}  // namespace obsym
