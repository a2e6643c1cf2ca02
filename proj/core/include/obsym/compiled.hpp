#pragma once

#include <span>
#include <vector>

#include "obsym/expr.hpp"

namespace obsym {

/// Expression batch flattened into a register tape for fast repeated
/// evaluation (the integrator and the filter call dynamics millions of
/// times; walking the DAG each time is too slow).
class CompiledFunction {
 public:
  CompiledFunction() = default;

  /// `inputs` fixes the argument order; every free variable of every output
  /// must appear in it.
  static CompiledFunction compile(std::span<const Expr> outputs,
                                  std::span<const SymbolId> inputs);

  std::size_t input_count() const { return n_inputs_; }
  std::size_t output_count() const { return out_regs_.size(); }
  std::size_t register_count() const { return n_regs_; }

  /// scratch must have register_count() entries; reused across calls.
  void eval(std::span<const double> inputs, std::span<double> outputs,
            std::span<double> scratch) const;

  std::vector<double> eval(std::span<const double> inputs) const;

 private:
  enum class Op : std::uint8_t { Const, Input, Add, Mul, Div, PowInt, PowReal, Tanh };
  struct Instr {
    Op op;
    std::uint32_t dst;
    std::uint32_t a;
    std::uint32_t b;  // PowInt: exponent; PowReal/Const: constant index
  };
  std::vector<Instr> tape_;
  std::vector<double> consts_;
  std::vector<std::uint32_t> out_regs_;
  std::size_t n_regs_ = 0;
  std::size_t n_inputs_ = 0;
};

}  // namespace obsym
