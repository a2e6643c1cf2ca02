#pragma once

#include <map>
#include <optional>
#include <vector>

#include "obsym/expr.hpp"

namespace obsym {

/// Sparse multivariate polynomial over exact rationals. Monomials are kept
/// in graded-lex order so leading terms (needed by the exact-division and
/// pseudo-remainder routines) are well defined.
class SparsePoly {
 public:
  // exponents sorted by symbol id, all > 0
  using Monomial = std::vector<std::pair<SymbolId, unsigned>>;

  struct MonomialLess {
    bool operator()(const Monomial& a, const Monomial& b) const;
  };
  using TermMap = std::map<Monomial, Rational, MonomialLess>;

  SparsePoly() = default;
  static SparsePoly constant(const Rational& c);
  static SparsePoly variable(SymbolId s);

  bool is_zero() const { return terms_.empty(); }
  bool is_constant() const;
  const Rational& constant_value() const;  // pre: is_constant() && !is_zero()

  SparsePoly operator+(const SparsePoly& o) const;
  SparsePoly operator-(const SparsePoly& o) const;
  SparsePoly operator-() const;
  SparsePoly operator*(const SparsePoly& o) const;
  SparsePoly pow(unsigned e) const;

  bool operator==(const SparsePoly& o) const { return terms_ == o.terms_; }

  /// Exact division; nullopt when b does not divide a.
  static std::optional<SparsePoly> div_exact(const SparsePoly& a, const SparsePoly& b);

  /// GCD up to sign, normalized integer-primitive with positive leading
  /// coefficient. gcd(0,0) = 0.
  static SparsePoly gcd(const SparsePoly& a, const SparsePoly& b);
  /// PRS core behind gcd(), without the monomial and coprimality fast paths.
  static SparsePoly gcd_primitive(const SparsePoly& a, const SparsePoly& b);

  std::vector<SymbolId> variables() const;
  unsigned degree(SymbolId v) const;
  unsigned total_degree() const;
  std::size_t term_count() const { return terms_.size(); }

  /// Scales so integer coefficients are coprime and the leading coefficient
  /// is positive. Zero stays zero.
  SparsePoly normalized_primitive() const;

  Expr to_expr() const;
  double eval(const Binding& b) const;
  Rational eval_exact(const std::unordered_map<SymbolId, Rational>& b) const;

  const TermMap& terms() const { return terms_; }

 private:
  void add_term(Monomial m, const Rational& c);
  TermMap terms_;
  friend class PolyFraction;
};

/// Ratio of two polynomials kept in lowest terms with an integer-primitive,
/// positive-leading denominator.
class PolyFraction {
 public:
  PolyFraction() : num_(), den_(SparsePoly::constant(Rational(1))) {}
  PolyFraction(SparsePoly num, SparsePoly den);

  static PolyFraction constant(const Rational& c);
  static PolyFraction variable(SymbolId s);

  const SparsePoly& num() const { return num_; }
  const SparsePoly& den() const { return den_; }
  bool is_zero() const { return num_.is_zero(); }

  PolyFraction operator+(const PolyFraction& o) const;
  PolyFraction operator-(const PolyFraction& o) const;
  PolyFraction operator*(const PolyFraction& o) const;
  PolyFraction operator/(const PolyFraction& o) const;
  PolyFraction pow(long e) const;

  Expr to_expr() const;

 private:
  SparsePoly num_, den_;
};

/// Converts an expression into a reduced polynomial fraction. Non-rational
/// subtrees (tanh, fractional powers) are replaced by opaque atoms recorded
/// in `atoms`, so rational structure around them still cancels; pass nullptr
/// to fail (nullopt) on any non-rational subtree instead.
struct AtomTable {
  std::unordered_map<ExprId, SymbolId> atom_of;     // subtree -> synthetic symbol
  std::unordered_map<SymbolId, Expr> expr_of;       // synthetic symbol -> subtree
};

std::optional<PolyFraction> expr_to_fraction(const Expr& e, AtomTable* atoms);

/// Rebuild an expression, resolving any synthetic atoms back to their
/// subtrees.
Expr fraction_to_expr(const PolyFraction& f, const AtomTable* atoms);

}  // namespace obsym
