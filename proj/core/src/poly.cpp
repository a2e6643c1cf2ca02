#include "obsym/poly.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace obsym {

namespace {

using cpp_int = boost::multiprecision::cpp_int;

unsigned monomial_degree(const SparsePoly::Monomial& m) {
  unsigned d = 0;
  for (const auto& [s, e] : m) d += e;
  return d;
}

// Lexicographic on exponents taken variable-by-variable in increasing symbol
// id; larger exponent on the first differing variable wins. Combined with the
// total-degree primary key this is a proper monomial order (multiplicative,
// 1 minimal).
int lex_cmp(const SparsePoly::Monomial& a, const SparsePoly::Monomial& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first == b[j].first) {
      if (a[i].second != b[j].second) return a[i].second > b[j].second ? 1 : -1;
      ++i;
      ++j;
    } else if (a[i].first < b[j].first) {
      return 1;  // a has a positive power on an earlier variable
    } else {
      return -1;
    }
  }
  if (i < a.size()) return 1;
  if (j < b.size()) return -1;
  return 0;
}

bool monomial_divides(const SparsePoly::Monomial& den, const SparsePoly::Monomial& num) {
  std::size_t i = 0;
  for (const auto& [s, e] : den) {
    while (i < num.size() && num[i].first < s) ++i;
    if (i >= num.size() || num[i].first != s || num[i].second < e) return false;
  }
  return true;
}

SparsePoly::Monomial monomial_mul(const SparsePoly::Monomial& a, const SparsePoly::Monomial& b) {
  SparsePoly::Monomial out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j >= b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.push_back(a[i++]);
    } else if (i >= a.size() || b[j].first < a[i].first) {
      out.push_back(b[j++]);
    } else {
      out.emplace_back(a[i].first, a[i].second + b[j].second);
      ++i;
      ++j;
    }
  }
  return out;
}

SparsePoly::Monomial monomial_div(const SparsePoly::Monomial& num, const SparsePoly::Monomial& den) {
  SparsePoly::Monomial out;
  std::size_t j = 0;
  for (const auto& [s, e] : num) {
    unsigned sub = 0;
    if (j < den.size() && den[j].first == s) {
      sub = den[j].second;
      ++j;
    }
    if (e > sub) out.emplace_back(s, e - sub);
  }
  return out;
}

}  // namespace

bool SparsePoly::MonomialLess::operator()(const Monomial& a, const Monomial& b) const {
  unsigned da = monomial_degree(a), db = monomial_degree(b);
  if (da != db) return da < db;
  return lex_cmp(a, b) < 0;
}

SparsePoly SparsePoly::constant(const Rational& c) {
  SparsePoly p;
  if (c != 0) p.terms_.emplace(Monomial{}, c);
  return p;
}

SparsePoly SparsePoly::variable(SymbolId s) {
  SparsePoly p;
  p.terms_.emplace(Monomial{{s, 1u}}, Rational(1));
  return p;
}

bool SparsePoly::is_constant() const {
  return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.empty());
}

const Rational& SparsePoly::constant_value() const {
  assert(is_constant() && !is_zero());
  return terms_.begin()->second;
}

void SparsePoly::add_term(Monomial m, const Rational& c) {
  if (c == 0) return;
  auto [it, inserted] = terms_.emplace(std::move(m), c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) terms_.erase(it);
  }
}

SparsePoly SparsePoly::operator+(const SparsePoly& o) const {
  SparsePoly out = *this;
  for (const auto& [m, c] : o.terms_) out.add_term(m, c);
  return out;
}

SparsePoly SparsePoly::operator-(const SparsePoly& o) const {
  SparsePoly out = *this;
  for (const auto& [m, c] : o.terms_) out.add_term(m, -c);
  return out;
}

SparsePoly SparsePoly::operator-() const {
  SparsePoly out;
  for (const auto& [m, c] : terms_) out.terms_.emplace(m, -c);
  return out;
}

SparsePoly SparsePoly::operator*(const SparsePoly& o) const {
  SparsePoly out;
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : o.terms_) {
      out.add_term(monomial_mul(ma, mb), ca * cb);
    }
  }
  return out;
}

SparsePoly SparsePoly::pow(unsigned e) const {
  SparsePoly acc = constant(Rational(1));
  SparsePoly base = *this;
  while (e > 0) {
    if (e & 1) acc = acc * base;
    base = (e >>= 1) ? base * base : base;
  }
  return acc;
}

std::optional<SparsePoly> SparsePoly::div_exact(const SparsePoly& a, const SparsePoly& b) {
  if (b.is_zero()) return std::nullopt;
  SparsePoly rem = a;
  SparsePoly quot;
  const auto& blead = *b.terms_.rbegin();
  while (!rem.is_zero()) {
    const auto& rlead = *rem.terms_.rbegin();
    if (!monomial_divides(blead.first, rlead.first)) return std::nullopt;
    Monomial qm = monomial_div(rlead.first, blead.first);
    Rational qc = rlead.second / blead.second;
    quot.add_term(qm, qc);
    for (const auto& [m, c] : b.terms_) {
      rem.add_term(monomial_mul(m, qm), -c * qc);
    }
  }
  return quot;
}

std::vector<SymbolId> SparsePoly::variables() const {
  std::vector<SymbolId> out;
  for (const auto& [m, c] : terms_) {
    for (const auto& [s, e] : m) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

unsigned SparsePoly::degree(SymbolId v) const {
  unsigned d = 0;
  for (const auto& [m, c] : terms_) {
    for (const auto& [s, e] : m) {
      if (s == v) d = std::max(d, e);
    }
  }
  return d;
}

unsigned SparsePoly::total_degree() const {
  unsigned d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, monomial_degree(m));
  return d;
}

SparsePoly SparsePoly::normalized_primitive() const {
  if (is_zero()) return *this;
  cpp_int den_lcm = 1;
  for (const auto& [m, c] : terms_) {
    den_lcm = boost::multiprecision::lcm(den_lcm, denominator(c));
  }
  cpp_int num_gcd = 0;
  for (const auto& [m, c] : terms_) {
    num_gcd = boost::multiprecision::gcd(num_gcd, cpp_int(numerator(c) * (den_lcm / denominator(c))));
  }
  Rational scale(den_lcm, num_gcd);
  if (terms_.rbegin()->second * scale < 0) scale = -scale;
  SparsePoly out;
  for (const auto& [m, c] : terms_) out.terms_.emplace(m, c * scale);
  return out;
}

namespace {

// Univariate view in a main variable with SparsePoly coefficients.
using UniPoly = std::vector<SparsePoly>;  // index = power of the main variable

UniPoly to_univariate(const SparsePoly& p, SymbolId v) {
  UniPoly out(p.degree(v) + 1);
  for (const auto& [m, c] : p.terms()) {
    unsigned e = 0;
    SparsePoly::Monomial rest;
    for (const auto& [s, k] : m) {
      if (s == v) {
        e = k;
      } else {
        rest.emplace_back(s, k);
      }
    }
    SparsePoly t;
    t = SparsePoly::constant(c);
    SparsePoly mono;
    {
      // rebuild the residual monomial as a poly
      SparsePoly acc = SparsePoly::constant(Rational(1));
      for (const auto& [s, k] : rest) acc = acc * SparsePoly::variable(s).pow(k);
      mono = acc;
    }
    out[e] = out[e] + t * mono;
  }
  while (out.size() > 1 && out.back().is_zero()) out.pop_back();
  return out;
}

SparsePoly from_univariate(const UniPoly& u, SymbolId v) {
  SparsePoly out;
  SparsePoly x = SparsePoly::variable(v);
  for (std::size_t e = 0; e < u.size(); ++e) {
    if (u[e].is_zero()) continue;
    out = out + u[e] * x.pow(static_cast<unsigned>(e));
  }
  return out;
}

int uni_degree(const UniPoly& u) {
  for (int i = static_cast<int>(u.size()) - 1; i >= 0; --i) {
    if (!u[i].is_zero()) return i;
  }
  return -1;
}

UniPoly uni_scale(const UniPoly& u, const SparsePoly& s) {
  UniPoly out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] * s;
  return out;
}

// Pseudo-remainder of a by b in the main variable.
UniPoly uni_prem(UniPoly a, const UniPoly& b) {
  int db = uni_degree(b);
  assert(db >= 0);
  const SparsePoly& lb = b[db];
  int da = uni_degree(a);
  while (da >= db) {
    const SparsePoly lead = a[da];
    // a = a*lb - lead * x^(da-db) * b
    a = uni_scale(a, lb);
    for (int i = 0; i <= db; ++i) {
      a[i + da - db] = a[i + da - db] - lead * b[i];
    }
    int nda = -1;
    for (int i = da; i >= 0; --i) {
      if (!a[i].is_zero()) {
        nda = i;
        break;
      }
    }
    da = nda;
    if (da < 0) break;
  }
  a.resize(da + 1 > 0 ? da + 1 : 0);
  return a;
}

SparsePoly poly_content(const UniPoly& u) {
  SparsePoly g;  // zero
  for (const auto& c : u) {
    if (c.is_zero()) continue;
    g = SparsePoly::gcd(g, c);
    if (g.is_constant() && !g.is_zero()) break;
  }
  return g;
}

UniPoly uni_div_content(const UniPoly& u, const SparsePoly& content) {
  UniPoly out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i].is_zero()) {
      out[i] = SparsePoly();
    } else {
      auto q = SparsePoly::div_exact(u[i], content);
      assert(q);
      out[i] = *q;
    }
  }
  return out;
}

}  // namespace

namespace {

// gcd of the monomials of all terms: the largest monomial dividing p
SparsePoly::Monomial monomial_content(const SparsePoly& p) {
  SparsePoly::Monomial acc;
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    if (first) {
      acc = m;
      first = false;
      continue;
    }
    SparsePoly::Monomial next;
    std::size_t i = 0, j = 0;
    while (i < acc.size() && j < m.size()) {
      if (acc[i].first == m[j].first) {
        next.emplace_back(acc[i].first, std::min(acc[i].second, m[j].second));
        ++i;
        ++j;
      } else if (acc[i].first < m[j].first) {
        ++i;
      } else {
        ++j;
      }
    }
    acc = std::move(next);
    if (acc.empty()) break;
  }
  return acc;
}

SparsePoly monomial_to_poly(const SparsePoly::Monomial& m) {
  SparsePoly out = SparsePoly::constant(Rational(1));
  for (const auto& [s, e] : m) out = out * SparsePoly::variable(s).pow(e);
  return out;
}

// -- modular univariate coprimality probe ------------------------------------

constexpr std::uint64_t kPrime = (1ull << 61) - 1;

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % kPrime);
}

std::uint64_t powmod(std::uint64_t a, std::uint64_t e) {
  std::uint64_t acc = 1;
  while (e) {
    if (e & 1) acc = mulmod(acc, a);
    a = mulmod(a, a);
    e >>= 1;
  }
  return acc;
}

std::uint64_t invmod(std::uint64_t a) { return powmod(a % kPrime, kPrime - 2); }

std::uint64_t rational_mod(const Rational& r) {
  cpp_int num = numerator(r) % kPrime;
  if (num < 0) num += kPrime;
  cpp_int den = denominator(r) % kPrime;
  std::uint64_t n = static_cast<std::uint64_t>(num);
  std::uint64_t d = static_cast<std::uint64_t>(den);
  if (d == 0) throw std::overflow_error("prime divides denominator");
  return mulmod(n, invmod(d));
}

// Univariate image of p in `main` with the other variables fixed by `point`.
std::vector<std::uint64_t> univariate_image(const SparsePoly& p, SymbolId main,
                                            const std::unordered_map<SymbolId, std::uint64_t>& point) {
  std::vector<std::uint64_t> coeff(p.degree(main) + 1, 0);
  for (const auto& [m, c] : p.terms()) {
    std::uint64_t v = rational_mod(c);
    unsigned e_main = 0;
    for (const auto& [s, e] : m) {
      if (s == main) {
        e_main = e;
      } else {
        v = mulmod(v, powmod(point.at(s), e));
      }
    }
    coeff[e_main] = (coeff[e_main] + v) % kPrime;
  }
  while (coeff.size() > 1 && coeff.back() == 0) coeff.pop_back();
  return coeff;
}

int modular_gcd_degree(std::vector<std::uint64_t> a, std::vector<std::uint64_t> b) {
  auto deg = [](const std::vector<std::uint64_t>& p) {
    for (int i = static_cast<int>(p.size()) - 1; i >= 0; --i) {
      if (p[i] != 0) return i;
    }
    return -1;
  };
  int da = deg(a), db = deg(b);
  if (da < 0) return db;
  if (db < 0) return da;
  while (true) {
    if (da < db) {
      std::swap(a, b);
      std::swap(da, db);
    }
    if (db < 0) return da;
    // a -= lc(a)/lc(b) x^(da-db) b
    std::uint64_t f = mulmod(a[da], invmod(b[db]));
    for (int i = 0; i <= db; ++i) {
      std::uint64_t sub = mulmod(f, b[i]);
      a[i + da - db] = (a[i + da - db] + kPrime - sub % kPrime) % kPrime;
    }
    int nda = -1;
    for (int i = da; i >= 0; --i) {
      if (a[i] != 0) {
        nda = i;
        break;
      }
    }
    da = nda;
    if (da < 0) return db;
  }
}

}  // namespace

SparsePoly SparsePoly::gcd(const SparsePoly& a, const SparsePoly& b) {
  if (a.is_zero()) return b.normalized_primitive();
  if (b.is_zero()) return a.normalized_primitive();
  if (a.is_constant() || b.is_constant()) return constant(Rational(1));

  // monomial fast paths
  const SparsePoly::Monomial ma = monomial_content(a);
  const SparsePoly::Monomial mb = monomial_content(b);
  if (a.term_count() == 1 || b.term_count() == 1) {
    SparsePoly::Monomial g;
    std::size_t i = 0, j = 0;
    while (i < ma.size() && j < mb.size()) {
      if (ma[i].first == mb[j].first) {
        g.emplace_back(ma[i].first, std::min(ma[i].second, mb[j].second));
        ++i;
        ++j;
      } else if (ma[i].first < mb[j].first) {
        ++i;
      } else {
        ++j;
      }
    }
    return monomial_to_poly(g);
  }
  // strip per-operand monomial content and reattach the shared part
  if (!ma.empty() || !mb.empty()) {
    SparsePoly::Monomial shared;
    std::size_t i = 0, j = 0;
    while (i < ma.size() && j < mb.size()) {
      if (ma[i].first == mb[j].first) {
        shared.emplace_back(ma[i].first, std::min(ma[i].second, mb[j].second));
        ++i;
        ++j;
      } else if (ma[i].first < mb[j].first) {
        ++i;
      } else {
        ++j;
      }
    }
    SparsePoly ap = ma.empty() ? a : *div_exact(a, monomial_to_poly(ma));
    SparsePoly bp = mb.empty() ? b : *div_exact(b, monomial_to_poly(mb));
    SparsePoly inner = gcd_primitive(ap, bp);
    return (inner * monomial_to_poly(shared)).normalized_primitive();
  }
  return gcd_primitive(a, b);
}

SparsePoly SparsePoly::gcd_primitive(const SparsePoly& a, const SparsePoly& b) {
  if (a.is_zero()) return b.normalized_primitive();
  if (b.is_zero()) return a.normalized_primitive();
  if (a.is_constant() || b.is_constant()) return constant(Rational(1));

  // pick a main variable common to both, favoring low degree
  std::vector<SymbolId> va = a.variables(), vb = b.variables();
  SymbolId main = 0;
  bool found = false;
  unsigned best = 0;
  for (SymbolId s : va) {
    if (!std::binary_search(vb.begin(), vb.end(), s)) continue;
    unsigned d = std::min(a.degree(s), b.degree(s));
    if (!found || d < best) {
      main = s;
      best = d;
      found = true;
    }
  }
  if (!found) return constant(Rational(1));

  // modular coprimality probe: a univariate image with constant gcd proves
  // the polynomials coprime (a degenerate point can only overestimate)
  {
    std::uint64_t salt = 0x9E3779B97F4A7C15ull;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::unordered_map<SymbolId, std::uint64_t> point;
      for (SymbolId s : va) {
        if (s != main) point.emplace(s, 2 + ((s * 0x9E3779B97F4A7C15ull + salt) >> 40) % 1000003);
      }
      for (SymbolId s : vb) {
        if (s != main && !point.count(s)) {
          point.emplace(s, 2 + ((s * 0xBF58476D1CE4E5B9ull + salt) >> 40) % 1000003);
        }
      }
      try {
        auto ia = univariate_image(a, main, point);
        auto ib = univariate_image(b, main, point);
        // degenerate if a leading coefficient vanished
        if (static_cast<int>(ia.size()) - 1 == static_cast<int>(a.degree(main)) &&
            static_cast<int>(ib.size()) - 1 == static_cast<int>(b.degree(main)) &&
            !(ia.size() == 1 && ia[0] == 0) && !(ib.size() == 1 && ib[0] == 0)) {
          if (modular_gcd_degree(ia, ib) == 0) return constant(Rational(1));
          break;  // a nontrivial gcd is likely: do the real work
        }
      } catch (const std::overflow_error&) {
        // prime hit a denominator; retry with a different point
      }
      salt *= 0x2545F4914F6CDD1Dull;
    }
  }

  UniPoly ua = to_univariate(a, main);
  UniPoly ub = to_univariate(b, main);
  SparsePoly ca = poly_content(ua);
  SparsePoly cb = poly_content(ub);
  UniPoly pa = uni_div_content(ua, ca);
  UniPoly pb = uni_div_content(ub, cb);

  // primitive PRS
  if (uni_degree(pa) < uni_degree(pb)) std::swap(pa, pb);
  while (true) {
    int db = uni_degree(pb);
    if (db < 0) break;
    UniPoly r = uni_prem(pa, pb);
    if (uni_degree(r) < 0) {
      pa = pb;
      pb = r;
      break;
    }
    SparsePoly cr = poly_content(r);
    r = uni_div_content(r, cr);
    pa = pb;
    pb = r;
  }
  SparsePoly gp;
  if (uni_degree(pb) < 0) {
    gp = from_univariate(pa, main);
  } else {
    gp = from_univariate(pb, main);
  }
  if (uni_degree(pb) >= 0) gp = constant(Rational(1));  // coprime primitive parts

  SparsePoly cg = gcd(ca, cb);
  return (gp * cg).normalized_primitive();
}

Expr SparsePoly::to_expr() const {
  std::vector<Expr> terms;
  // emit high-order first so printed forms read naturally
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const auto& [m, c] = *it;
    std::vector<Expr> factors;
    factors.push_back(Expr::constant(c));
    for (const auto& [s, e] : m) {
      factors.push_back(Expr::power(Expr::variable(s), Rational(e)));
    }
    terms.push_back(Expr::product(factors));
  }
  return Expr::sum(terms);
}

Rational SparsePoly::eval_exact(const std::unordered_map<SymbolId, Rational>& b) const {
  Rational acc(0);
  for (const auto& [m, c] : terms_) {
    Rational t = c;
    for (const auto& [s, e] : m) {
      auto it = b.find(s);
      if (it == b.end()) throw UnboundVariableError(symbol_name(s));
      for (unsigned k = 0; k < e; ++k) t *= it->second;
    }
    acc += t;
  }
  return acc;
}

double SparsePoly::eval(const Binding& b) const {
  double acc = 0;
  for (const auto& [m, c] : terms_) {
    double t = static_cast<double>(c);
    for (const auto& [s, e] : m) {
      auto v = b.get(s);
      if (!v) throw UnboundVariableError(symbol_name(s));
      for (unsigned k = 0; k < e; ++k) t *= *v;
    }
    acc += t;
  }
  return acc;
}

// -- PolyFraction -------------------------------------------------------------

PolyFraction::PolyFraction(SparsePoly num, SparsePoly den) : num_(std::move(num)), den_(std::move(den)) {
  if (den_.is_zero()) throw DivisionByZeroError("polynomial fraction with zero denominator");
  if (num_.is_zero()) {
    den_ = SparsePoly::constant(Rational(1));
    return;
  }
  SparsePoly g = SparsePoly::gcd(num_, den_);
  if (!g.is_constant()) {
    num_ = *SparsePoly::div_exact(num_, g);
    den_ = *SparsePoly::div_exact(den_, g);
  }
  // normalize: integer-primitive positive-leading denominator
  SparsePoly nd = den_.normalized_primitive();
  // den_ = s * nd for a rational s; divide num_ by s as well
  const Rational s = den_.terms().rbegin()->second / nd.terms().rbegin()->second;
  den_ = std::move(nd);
  if (s != 1) num_ = num_ * SparsePoly::constant(Rational(1) / s);
}

PolyFraction PolyFraction::constant(const Rational& c) {
  return PolyFraction(SparsePoly::constant(c), SparsePoly::constant(Rational(1)));
}
PolyFraction PolyFraction::variable(SymbolId s) {
  return PolyFraction(SparsePoly::variable(s), SparsePoly::constant(Rational(1)));
}

PolyFraction PolyFraction::operator+(const PolyFraction& o) const {
  return PolyFraction(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
}
PolyFraction PolyFraction::operator-(const PolyFraction& o) const {
  return PolyFraction(num_ * o.den_ - o.num_ * den_, den_ * o.den_);
}
PolyFraction PolyFraction::operator*(const PolyFraction& o) const {
  return PolyFraction(num_ * o.num_, den_ * o.den_);
}
PolyFraction PolyFraction::operator/(const PolyFraction& o) const {
  if (o.num_.is_zero()) throw DivisionByZeroError("division by zero polynomial fraction");
  return PolyFraction(num_ * o.den_, den_ * o.num_);
}

PolyFraction PolyFraction::pow(long e) const {
  if (e == 0) return constant(Rational(1));
  bool neg = e < 0;
  unsigned k = static_cast<unsigned>(neg ? -e : e);
  PolyFraction out(num_.pow(k), den_.pow(k));
  if (neg) return constant(Rational(1)) / out;
  return out;
}

Expr PolyFraction::to_expr() const {
  return Expr::quotient(num_.to_expr(), den_.to_expr());
}

// -- expression conversion ------------------------------------------------------

namespace {

std::optional<PolyFraction> to_fraction_rec(const Expr& e, AtomTable* atoms,
                                            std::unordered_map<ExprId, PolyFraction>& memo) {
  auto it = memo.find(e.id());
  if (it != memo.end()) return it->second;

  auto atom = [&]() -> std::optional<PolyFraction> {
    if (!atoms) return std::nullopt;
    auto found = atoms->atom_of.find(e.id());
    SymbolId s;
    if (found != atoms->atom_of.end()) {
      s = found->second;
    } else {
      s = intern_symbol("$atom" + std::to_string(atoms->atom_of.size()) + "$");
      atoms->atom_of.emplace(e.id(), s);
      atoms->expr_of.emplace(s, e);
    }
    return PolyFraction::variable(s);
  };

  std::optional<PolyFraction> out;
  switch (e.op()) {
    case ExprOp::Constant:
      out = PolyFraction::constant(e.constant_value());
      break;
    case ExprOp::Variable:
      out = PolyFraction::variable(e.symbol_id());
      break;
    case ExprOp::Sum: {
      PolyFraction acc = PolyFraction::constant(Rational(0));
      bool ok = true;
      for (std::size_t i = 0; i < e.child_count(); ++i) {
        auto f = to_fraction_rec(e.child(i), atoms, memo);
        if (!f) {
          ok = false;
          break;
        }
        acc = acc + *f;
      }
      if (ok) out = acc;
      break;
    }
    case ExprOp::Product: {
      PolyFraction acc = PolyFraction::constant(Rational(1));
      bool ok = true;
      for (std::size_t i = 0; i < e.child_count(); ++i) {
        auto f = to_fraction_rec(e.child(i), atoms, memo);
        if (!f) {
          ok = false;
          break;
        }
        acc = acc * *f;
      }
      if (ok) out = acc;
      break;
    }
    case ExprOp::Power: {
      const Rational& ex = e.exponent();
      if (denominator(ex) == 1 && numerator(ex) >= 0 &&
          numerator(ex) < 1000) {
        auto base = to_fraction_rec(e.child(0), atoms, memo);
        if (base) out = base->pow(static_cast<long>(numerator(ex)));
      } else {
        out = atom();
      }
      break;
    }
    case ExprOp::Quotient: {
      auto n = to_fraction_rec(e.child(0), atoms, memo);
      auto d = to_fraction_rec(e.child(1), atoms, memo);
      if (n && d && !d->is_zero()) out = *n / *d;
      break;
    }
    case ExprOp::Tanh:
      out = atom();
      break;
  }
  if (out) memo.emplace(e.id(), *out);
  return out;
}

}  // namespace

std::optional<PolyFraction> expr_to_fraction(const Expr& e, AtomTable* atoms) {
  std::unordered_map<ExprId, PolyFraction> memo;
  return to_fraction_rec(e, atoms, memo);
}

Expr fraction_to_expr(const PolyFraction& f, const AtomTable* atoms) {
  Expr raw = f.to_expr();
  if (!atoms || atoms->expr_of.empty()) return raw;
  return substitute(raw, atoms->expr_of);
}

// -- quotient cancellation hook used by simplify(opts) ---------------------------

namespace detail {

Expr reduce_quotients(const Expr& e) {
  AtomTable atoms;
  auto frac = expr_to_fraction(e, &atoms);
  if (!frac) return e;
  Expr out = fraction_to_expr(*frac, &atoms);
  return out;
}

}  // namespace detail

}  // namespace obsym
