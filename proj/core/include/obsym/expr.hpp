#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace obsym {

/// Exact rational scalar used for all symbolic constants.
using Rational = boost::multiprecision::cpp_rational;

using SymbolId = std::uint32_t;
using ExprId = std::uint32_t;

enum class ExprOp : std::uint8_t {
  Constant,
  Variable,
  Sum,
  Product,
  Power,
  Quotient,
  Tanh,
};

struct ExprError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnboundVariableError : ExprError {
  explicit UnboundVariableError(const std::string& name)
      : ExprError("unbound variable: " + name) {}
};

struct DivisionByZeroError : ExprError {
  DivisionByZeroError() : ExprError("division by zero") {}
  explicit DivisionByZeroError(const std::string& what) : ExprError(what) {}
};

struct SyntaxError : ExprError {
  SyntaxError(std::string msg, int line_, int col_)
      : ExprError("syntax error at " + std::to_string(line_) + ":" +
                  std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
  int line;
  int col;
};

/// Global symbol interning. Variables are integer ids backed by a string
/// table, so structural comparisons never touch strings.
SymbolId intern_symbol(std::string_view name);
std::optional<SymbolId> find_symbol(std::string_view name);
const std::string& symbol_name(SymbolId id);

/// Immutable symbolic expression handle. All expressions live in a global
/// hash-consed pool: structurally equal expressions share one id, so
/// equality is O(1) and common subexpressions are stored once. Nodes are
/// normalized on construction (constants folded, identities removed,
/// sums/products flattened and sorted, like terms merged), which keeps
/// repeated differentiation from ballooning.
class Expr {
 public:
  Expr() : id_(0) {}  // the literal zero

  static Expr constant(const Rational& value);
  static Expr integer(long long value);
  static Expr rational(long long num, long long den);
  static Expr variable(SymbolId symbol);
  static Expr symbol(std::string_view name) { return variable(intern_symbol(name)); }

  static Expr sum(std::span<const Expr> terms);
  static Expr sum(std::initializer_list<Expr> terms);
  static Expr product(std::span<const Expr> factors);
  static Expr product(std::initializer_list<Expr> factors);
  static Expr power(const Expr& base, const Rational& exponent);
  static Expr quotient(const Expr& num, const Expr& den);
  static Expr tanh(const Expr& arg);
  static Expr negate(const Expr& e);

  ExprId id() const { return id_; }
  ExprOp op() const;
  std::span<const ExprId> children() const;
  Expr child(std::size_t i) const;
  std::size_t child_count() const;

  /// Valid only for Constant nodes.
  const Rational& constant_value() const;
  /// Valid only for Variable nodes.
  SymbolId symbol_id() const;
  /// Valid only for Power nodes.
  const Rational& exponent() const;

  bool is_constant() const { return op() == ExprOp::Constant; }
  bool is_zero() const { return id_ == 0; }
  bool is_one() const;
  bool is_variable() const { return op() == ExprOp::Variable; }

  /// May report false positives never false negatives; exact check is
  /// free_variables().
  bool may_depend_on(SymbolId symbol) const;

  std::vector<SymbolId> free_variables() const;

  friend bool operator==(const Expr& a, const Expr& b) { return a.id_ == b.id_; }
  friend bool operator!=(const Expr& a, const Expr& b) { return a.id_ != b.id_; }

  static Expr from_id(ExprId id) { return Expr(id); }

 private:
  explicit Expr(ExprId id) : id_(id) {}
  ExprId id_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);

/// Map from symbol to numeric value used by evaluate().
struct Binding {
  std::unordered_map<SymbolId, double> values;

  Binding() = default;
  Binding(std::initializer_list<std::pair<std::string_view, double>> init) {
    for (const auto& [name, v] : init) set(name, v);
  }

  void set(SymbolId s, double v) { values[s] = v; }
  void set(std::string_view name, double v) { values[intern_symbol(name)] = v; }
  std::optional<double> get(SymbolId s) const {
    auto it = values.find(s);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  bool contains(SymbolId s) const { return values.count(s) != 0; }
  void merge(const Binding& other) {
    for (const auto& [k, v] : other.values) values[k] = v;
  }
};

/// Exact partial derivative; results are canonical simplified expressions.
Expr differentiate(const Expr& e, SymbolId v);

struct SimplifyOptions {
  /// Attempt polynomial cancellation inside quotients. Off by default:
  /// rank analysis relies on numeric specialization, so cancellation is
  /// cosmetic only.
  bool cancel_quotients = false;
};

/// Nodes are normalized at construction, so the default pass is a cheap
/// bottom-up re-normalization; with cancel_quotients it additionally
/// reduces rational quotients to lowest terms.
Expr simplify(const Expr& e, const SimplifyOptions& opts = {});

double evaluate(const Expr& e, const Binding& binding);

/// Evaluate several expressions against one binding, sharing subexpression
/// work across the batch.
std::vector<double> evaluate_all(std::span<const Expr> exprs, const Binding& binding);

/// Incremental evaluator: keeps the subexpression memo alive across calls.
/// Binding new symbols is allowed (the memo stays valid because previously
/// seen nodes cannot reference them); rebinding an existing symbol resets
/// the memo.
class CachedEvaluator {
 public:
  CachedEvaluator() = default;
  explicit CachedEvaluator(Binding b) : binding_(std::move(b)) {}

  void bind(SymbolId s, double v);
  bool bound(SymbolId s) const { return binding_.contains(s); }
  const Binding& binding() const { return binding_; }
  double eval(const Expr& e);

 private:
  Binding binding_;
  std::unordered_map<ExprId, double> memo_;
};

/// Exact evaluation in Z_p (p = 2^61 - 1) at a random point. Rank decisions
/// made on these values are exact: no pivot thresholds, immune to the mixed
/// magnitudes of physical constants. Symbols unseen so far are bound to
/// fresh random residues; tanh nodes (transcendental over the rational
/// functions) become independent random atoms; fractional powers with
/// dyadic exponents are sampled on-branch via iterated modular square
/// roots. Throws DivisionByZeroError when the point hits a pole (callers
/// resample).
class ModularEvaluator {
 public:
  static constexpr std::uint64_t kPrime = (1ull << 61) - 1;

  explicit ModularEvaluator(std::uint64_t seed);

  std::uint64_t eval(const Expr& e);
  void reseed(std::uint64_t seed);  // fresh point, memo cleared

 private:
  std::uint64_t fresh();
  std::uint64_t value_of(SymbolId s);

  std::uint64_t compute(const Expr& e);

  std::uint64_t rng_;
  std::unordered_map<SymbolId, std::uint64_t> binding_;
  std::unordered_map<ExprId, std::uint64_t> memo_;
  std::unordered_map<ExprId, std::uint64_t> tanh_atom_;
  std::unordered_map<ExprId, std::vector<std::uint64_t>> root_chain_;
};

/// Replace variables by expressions (used e.g. to pin known parameters).
Expr substitute(const Expr& e, const std::unordered_map<SymbolId, Expr>& map);

std::string to_string(const Expr& e);

/// Parses the infix grammar: `+ - * / ^`, tanh(...), identifiers
/// [A-Za-z_][A-Za-z0-9_]*, decimal/rational literals (scientific notation
/// accepted; decimals convert exactly to rationals).
/// `line_offset` only shifts reported error locations.
Expr parse_expression(std::string_view text, int line_offset = 1);

/// Number of live nodes in the global pool (diagnostic).
std::size_t expression_pool_size();

}  // namespace obsym
