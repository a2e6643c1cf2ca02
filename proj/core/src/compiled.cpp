#include "obsym/compiled.hpp"

#include <cmath>
#include <unordered_map>

namespace obsym {

CompiledFunction CompiledFunction::compile(std::span<const Expr> outputs,
                                           std::span<const SymbolId> inputs) {
  CompiledFunction cf;
  cf.n_inputs_ = inputs.size();

  std::unordered_map<SymbolId, std::uint32_t> input_slot;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    input_slot.emplace(inputs[i], static_cast<std::uint32_t>(i));
  }

  std::unordered_map<ExprId, std::uint32_t> reg_of;
  std::uint32_t next_reg = 0;
  auto alloc = [&next_reg]() { return next_reg++; };

  auto add_const = [&cf](double v) {
    cf.consts_.push_back(v);
    return static_cast<std::uint32_t>(cf.consts_.size() - 1);
  };

  // iterative post-order
  struct Frame {
    Expr e;
    bool expanded;
  };
  auto emit = [&](const Expr& e) -> std::uint32_t { return reg_of.at(e.id()); };

  for (const Expr& root : outputs) {
    std::vector<Frame> stack{{root, false}};
    while (!stack.empty()) {
      auto [e, expanded] = stack.back();
      stack.pop_back();
      if (reg_of.count(e.id())) continue;
      if (!expanded) {
        stack.push_back({e, true});
        for (std::size_t i = 0; i < e.child_count(); ++i) {
          Expr k = e.child(i);
          if (!reg_of.count(k.id())) stack.push_back({k, false});
        }
        continue;
      }
      std::uint32_t dst = alloc();
      switch (e.op()) {
        case ExprOp::Constant:
          cf.tape_.push_back({Op::Const, dst, 0, add_const(static_cast<double>(e.constant_value()))});
          break;
        case ExprOp::Variable: {
          auto it = input_slot.find(e.symbol_id());
          if (it == input_slot.end()) {
            throw ExprError("compile: unbound symbol '" + symbol_name(e.symbol_id()) + "'");
          }
          cf.tape_.push_back({Op::Input, dst, it->second, 0});
          break;
        }
        case ExprOp::Sum:
        case ExprOp::Product: {
          Op op = e.op() == ExprOp::Sum ? Op::Add : Op::Mul;
          std::uint32_t acc = emit(e.child(0));
          for (std::size_t i = 1; i < e.child_count(); ++i) {
            std::uint32_t r = i + 1 == e.child_count() ? dst : alloc();
            cf.tape_.push_back({op, r, acc, emit(e.child(i))});
            acc = r;
          }
          break;
        }
        case ExprOp::Quotient:
          cf.tape_.push_back({Op::Div, dst, emit(e.child(0)), emit(e.child(1))});
          break;
        case ExprOp::Power: {
          const Rational& ex = e.exponent();
          if (denominator(ex) == 1 && numerator(ex) > 0 && numerator(ex) < 64) {
            cf.tape_.push_back({Op::PowInt, dst, emit(e.child(0)),
                                static_cast<std::uint32_t>(numerator(ex))});
          } else {
            cf.tape_.push_back({Op::PowReal, dst, emit(e.child(0)),
                                add_const(static_cast<double>(ex))});
          }
          break;
        }
        case ExprOp::Tanh:
          cf.tape_.push_back({Op::Tanh, dst, emit(e.child(0)), 0});
          break;
      }
      reg_of.emplace(e.id(), dst);
    }
    cf.out_regs_.push_back(reg_of.at(root.id()));
  }
  cf.n_regs_ = next_reg;
  return cf;
}

void CompiledFunction::eval(std::span<const double> inputs, std::span<double> outputs,
                            std::span<double> scratch) const {
  double* r = scratch.data();
  for (const Instr& in : tape_) {
    switch (in.op) {
      case Op::Const:
        r[in.dst] = consts_[in.b];
        break;
      case Op::Input:
        r[in.dst] = inputs[in.a];
        break;
      case Op::Add:
        r[in.dst] = r[in.a] + r[in.b];
        break;
      case Op::Mul:
        r[in.dst] = r[in.a] * r[in.b];
        break;
      case Op::Div:
        r[in.dst] = r[in.a] / r[in.b];
        break;
      case Op::PowInt: {
        double base = r[in.a];
        double acc = 1.0;
        std::uint32_t k = in.b;
        while (k) {
          if (k & 1) acc *= base;
          base *= base;
          k >>= 1;
        }
        r[in.dst] = acc;
        break;
      }
      case Op::PowReal:
        r[in.dst] = std::pow(r[in.a], consts_[in.b]);
        break;
      case Op::Tanh:
        r[in.dst] = std::tanh(r[in.a]);
        break;
    }
  }
  for (std::size_t i = 0; i < out_regs_.size(); ++i) outputs[i] = r[out_regs_[i]];
}

std::vector<double> CompiledFunction::eval(std::span<const double> inputs) const {
  std::vector<double> scratch(n_regs_);
  std::vector<double> out(out_regs_.size());
  eval(inputs, out, scratch);
  return out;
}

}  // namespace obsym
