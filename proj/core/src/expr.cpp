#include "obsym/expr.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cassert>
#include <cctype>
#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>

namespace obsym {
namespace {

std::uint64_t symbol_bit(SymbolId s) {
  return 1ull << ((s * 0x9E3779B97F4A7C15ull) >> 58);
}

struct Node {
  ExprOp op;
  std::uint32_t payload = 0;  // Constant/Power: rational index; Variable: SymbolId
  std::uint64_t var_mask = 0;
  std::vector<ExprId> kids;
  std::size_t hash = 0;
};

std::size_t hash_node(ExprOp op, std::uint32_t payload, std::span<const ExprId> kids) {
  std::size_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  mix(static_cast<std::uint64_t>(op));
  mix(payload);
  for (ExprId k : kids) mix(k);
  return h;
}

// Append-only node arena. Chunks never move, and the published size is the
// synchronization point: readers may access any id below it without locks.
class Pool {
 public:
  static Pool& get() {
    static Pool* p = new Pool();  // leaked deliberately: expressions are process-lived
    return *p;
  }

  const Node& node(ExprId id) const {
    return chunk_[id >> kChunkBits].load(std::memory_order_acquire)[id & kChunkMask];
  }

  ExprId intern(ExprOp op, std::uint32_t payload, std::vector<ExprId> kids) {
    std::size_t h = hash_node(op, payload, kids);
    std::scoped_lock lock(mu_);
    auto range = intern_map_.equal_range(h);
    for (auto it = range.first; it != range.second; ++it) {
      const Node& n = node(it->second);
      if (n.op == op && n.payload == payload && n.kids == kids) return it->second;
    }
    ExprId id = size_.load(std::memory_order_relaxed);
    std::uint32_t ci = id >> kChunkBits;
    if ((id & kChunkMask) == 0 && chunk_[ci].load(std::memory_order_relaxed) == nullptr) {
      chunk_[ci].store(new Node[kChunkSize], std::memory_order_release);
    }
    Node& n = chunk_[ci].load(std::memory_order_relaxed)[id & kChunkMask];
    n.op = op;
    n.payload = payload;
    n.kids = std::move(kids);
    n.hash = h;
    n.var_mask = 0;
    if (op == ExprOp::Variable) {
      n.var_mask = symbol_bit(payload);
    } else {
      for (ExprId k : n.kids) n.var_mask |= node(k).var_mask;
    }
    intern_map_.emplace(h, id);
    size_.store(id + 1, std::memory_order_release);
    return id;
  }

  std::uint32_t intern_rational(const Rational& r) {
    std::scoped_lock lock(mu_);
    auto it = rational_map_.find(r);
    if (it != rational_map_.end()) return it->second;
    std::uint32_t idx = static_cast<std::uint32_t>(rationals_.size());
    rationals_.push_back(r);
    rational_doubles_.push_back(static_cast<double>(r));
    rational_map_.emplace(r, idx);
    return idx;
  }

  const Rational& rational(std::uint32_t idx) const { return rationals_[idx]; }
  double rational_double(std::uint32_t idx) const { return rational_doubles_[idx]; }

  SymbolId intern_symbol(std::string_view name) {
    std::scoped_lock lock(mu_);
    auto it = symbol_map_.find(std::string(name));
    if (it != symbol_map_.end()) return it->second;
    SymbolId id = static_cast<SymbolId>(symbols_.size());
    symbols_.emplace_back(name);
    symbol_map_.emplace(symbols_.back(), id);
    return id;
  }

  std::optional<SymbolId> find_symbol(std::string_view name) const {
    std::scoped_lock lock(mu_);
    auto it = symbol_map_.find(std::string(name));
    if (it == symbol_map_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& symbol_name(SymbolId id) const {
    std::scoped_lock lock(mu_);
    return symbols_[id];
  }

  std::optional<ExprId> diff_cache_get(std::uint64_t key) const {
    std::scoped_lock lock(diff_mu_);
    auto it = diff_cache_.find(key);
    if (it == diff_cache_.end()) return std::nullopt;
    return it->second;
  }
  void diff_cache_put(std::uint64_t key, ExprId value) {
    std::scoped_lock lock(diff_mu_);
    diff_cache_.emplace(key, value);
  }

  std::size_t size() const { return size_.load(std::memory_order_acquire); }

 private:
  Pool() {
    // Seed ids 0 and 1 with the literals 0 and 1.
    intern(ExprOp::Constant, intern_rational(Rational(0)), {});
    intern(ExprOp::Constant, intern_rational(Rational(1)), {});
  }

  static constexpr std::uint32_t kChunkBits = 14;
  static constexpr std::uint32_t kChunkSize = 1u << kChunkBits;
  static constexpr std::uint32_t kChunkMask = kChunkSize - 1;
  static constexpr std::uint32_t kMaxChunks = 1u << 16;

  mutable std::mutex mu_;
  mutable std::mutex diff_mu_;
  std::array<std::atomic<Node*>, kMaxChunks> chunk_{};
  std::atomic<ExprId> size_{0};
  std::unordered_multimap<std::size_t, ExprId> intern_map_;
  std::map<Rational, std::uint32_t> rational_map_;
  std::deque<Rational> rationals_;
  std::deque<double> rational_doubles_;
  std::unordered_map<std::string, SymbolId> symbol_map_;
  std::deque<std::string> symbols_;
  std::unordered_map<std::uint64_t, ExprId> diff_cache_;
};

const Node& node_of(ExprId id) { return Pool::get().node(id); }

ExprId kZero = 0;
ExprId kOne = 1;

bool is_const(ExprId id) { return node_of(id).op == ExprOp::Constant; }
const Rational& const_value(ExprId id) { return Pool::get().rational(node_of(id).payload); }

ExprId make_constant(const Rational& r) {
  return Pool::get().intern(ExprOp::Constant, Pool::get().intern_rational(r), {});
}

// ---------------------------------------------------------------------------
// Normalizing constructors. Invariants of the canonical form:
//   Sum:      >= 2 children, none a Sum; at most one Constant child and then
//             first and nonzero; remaining terms have pairwise distinct cores
//             (core = term without its leading constant coefficient), sorted
//             by core id.
//   Product:  >= 2 children, none a Product; optional leading Constant not in
//             {0,1}; remaining factors are Variable/Sum/Power/Tanh with
//             pairwise distinct bases sorted by base id, plus the special
//             form [Constant, Quotient].
//   Power:    rational exponent > 0 and != 1; integer exponents never wrap
//             constants, products, quotients or powers (folded/distributed).
//   Quotient: denominator non-constant and coefficient-free; numerator the
//             literal 1 or coefficient-free and non-Quotient.
// ---------------------------------------------------------------------------

ExprId sum_ids(std::vector<ExprId> terms);
ExprId product_ids(std::vector<ExprId> factors);
ExprId power_id(ExprId base, Rational exp);
ExprId quotient_ids(ExprId num, ExprId den);
ExprId tanh_id(ExprId arg);
ExprId with_coeff_times(const Rational& c, ExprId e);

ExprId raw(ExprOp op, std::uint32_t payload, std::vector<ExprId> kids) {
  return Pool::get().intern(op, payload, std::move(kids));
}

// Splits a canonical term into (coefficient, core).
std::pair<Rational, ExprId> split_coeff(ExprId id) {
  const Node& n = node_of(id);
  if (n.op == ExprOp::Constant) return {const_value(id), kOne};
  if (n.op == ExprOp::Product && is_const(n.kids[0])) {
    Rational c = const_value(n.kids[0]);
    if (n.kids.size() == 2) return {c, n.kids[1]};
    std::vector<ExprId> rest(n.kids.begin() + 1, n.kids.end());
    return {c, raw(ExprOp::Product, 0, std::move(rest))};
  }
  return {Rational(1), id};
}

ExprId with_coeff(const Rational& c, ExprId core) {
  if (core == kOne) return make_constant(c);
  if (c == 1) return core;
  if (c == 0) return kZero;
  const Node& n = node_of(core);
  std::vector<ExprId> kids;
  kids.push_back(make_constant(c));
  if (n.op == ExprOp::Product) {
    kids.insert(kids.end(), n.kids.begin(), n.kids.end());
  } else {
    kids.push_back(core);
  }
  return raw(ExprOp::Product, 0, std::move(kids));
}

ExprId sum_ids(std::vector<ExprId> terms) {
  Rational const_acc(0);
  std::map<ExprId, Rational> by_core;
  std::vector<ExprId> work = std::move(terms);
  for (std::size_t i = 0; i < work.size(); ++i) {
    ExprId t = work[i];
    const Node& n = node_of(t);
    if (n.op == ExprOp::Sum) {
      work.insert(work.end(), n.kids.begin(), n.kids.end());
      continue;
    }
    if (n.op == ExprOp::Constant) {
      const_acc += const_value(t);
      continue;
    }
    auto [c, core] = split_coeff(t);
    by_core[core] += c;
  }
  std::vector<ExprId> out;
  if (const_acc != 0) out.push_back(make_constant(const_acc));
  for (const auto& [core, c] : by_core) {
    if (c == 0) continue;
    out.push_back(with_coeff(c, core));
  }
  if (out.empty()) return kZero;
  if (out.size() == 1) return out[0];
  return raw(ExprOp::Sum, 0, std::move(out));
}

// Base/exponent view of a canonical factor.
std::pair<ExprId, Rational> factor_base(ExprId id) {
  const Node& n = node_of(id);
  if (n.op == ExprOp::Power) return {n.kids[0], Pool::get().rational(n.payload)};
  return {id, Rational(1)};
}

ExprId product_ids(std::vector<ExprId> factors) {
  Rational coeff(1);
  std::map<ExprId, Rational> num_bases;  // base -> exponent
  std::vector<ExprId> num_quot, den_quot;
  std::vector<ExprId> work = std::move(factors);
  for (std::size_t i = 0; i < work.size(); ++i) {
    ExprId f = work[i];
    const Node& n = node_of(f);
    switch (n.op) {
      case ExprOp::Constant:
        coeff *= const_value(f);
        break;
      case ExprOp::Product:
        work.insert(work.end(), n.kids.begin(), n.kids.end());
        break;
      case ExprOp::Quotient:
        num_quot.push_back(n.kids[0]);
        den_quot.push_back(n.kids[1]);
        break;
      default: {
        auto [b, e] = factor_base(f);
        num_bases[b] += e;
        break;
      }
    }
  }
  if (coeff == 0) return kZero;

  auto build = [](std::map<ExprId, Rational>& bases) -> ExprId {
    std::vector<ExprId> out;
    for (auto& [b, e] : bases) {
      if (e == 0) continue;
      out.push_back(power_id(b, e));
    }
    if (out.empty()) return kOne;
    if (out.size() == 1) return out[0];
    // power_id may have rewritten a factor into a non-factor shape
    // (e.g. folded to a constant); rebuild defensively if so.
    for (ExprId f : out) {
      ExprOp op = node_of(f).op;
      if (op == ExprOp::Constant || op == ExprOp::Product || op == ExprOp::Quotient) {
        return product_ids(std::move(out));
      }
    }
    std::sort(out.begin(), out.end(), [](ExprId a, ExprId b) {
      return factor_base(a).first < factor_base(b).first;
    });
    return raw(ExprOp::Product, 0, std::move(out));
  };

  ExprId num = build(num_bases);
  if (!num_quot.empty()) {
    ExprId qn = num_quot.size() == 1 ? num_quot[0] : product_ids(num_quot);
    ExprId qd = den_quot.size() == 1 ? den_quot[0] : product_ids(den_quot);
    ExprId merged_num = product_ids({num, qn});
    ExprId q = quotient_ids(merged_num, qd);
    return with_coeff_times(coeff, q);
  }
  return with_coeff_times(coeff, num);
}

// coeff * expr where expr may itself carry a coefficient.
ExprId with_coeff_times(const Rational& c, ExprId e) {
  if (c == 1) return e;
  auto [c0, core] = split_coeff(e);
  return with_coeff(c * c0, core);
}

ExprId power_id(ExprId base, Rational exp) {
  if (exp == 0) return kOne;
  if (exp == 1) return base;
  const Node& bn = node_of(base);
  const bool integral = denominator(exp) == 1;
  if (bn.op == ExprOp::Constant) {
    const Rational& bv = const_value(base);
    if (bv == 0) {
      if (exp < 0) throw DivisionByZeroError("zero raised to a negative power");
      return kZero;
    }
    if (bv == 1) return kOne;
    if (integral) {
      // exact fold for integer exponents
      boost::multiprecision::cpp_int e = numerator(exp);
      bool neg = e < 0;
      if (neg) e = -e;
      Rational acc(1), b = bv;
      boost::multiprecision::cpp_int k = e;
      while (k > 0) {
        if ((k & 1) != 0) acc *= b;
        b *= b;
        k >>= 1;
      }
      if (neg) acc = Rational(denominator(acc), numerator(acc));
      return make_constant(acc);
    }
    if (exp < 0) return quotient_ids(kOne, power_id(base, -exp));
    return raw(ExprOp::Power, Pool::get().intern_rational(exp), {base});
  }
  if (exp < 0) return quotient_ids(kOne, power_id(base, -exp));
  if (integral) {
    if (bn.op == ExprOp::Product) {
      std::vector<ExprId> out;
      for (ExprId k : bn.kids) out.push_back(power_id(k, exp));
      return product_ids(std::move(out));
    }
    if (bn.op == ExprOp::Quotient) {
      return quotient_ids(power_id(bn.kids[0], exp), power_id(bn.kids[1], exp));
    }
    if (bn.op == ExprOp::Power) {
      // (b^e2)^e is b^(e2*e) whenever e is an integer.
      return power_id(bn.kids[0], Pool::get().rational(bn.payload) * exp);
    }
  }
  return raw(ExprOp::Power, Pool::get().intern_rational(exp), {base});
}

ExprId quotient_ids(ExprId num, ExprId den) {
  if (den == kZero) throw DivisionByZeroError("quotient with literal zero denominator");
  if (num == kZero) return kZero;
  const Node* dn = &node_of(den);
  if (dn->op == ExprOp::Constant) {
    const Rational& d = const_value(den);
    return with_coeff_times(Rational(denominator(d), numerator(d)), num);
  }
  // flatten nested quotients
  const Node* nn = &node_of(num);
  if (nn->op == ExprOp::Quotient) {
    return quotient_ids(nn->kids[0], product_ids({nn->kids[1], den}));
  }
  if (dn->op == ExprOp::Quotient) {
    return quotient_ids(product_ids({num, dn->kids[1]}), dn->kids[0]);
  }
  auto [cn, ncore] = split_coeff(num);
  auto [cd, dcore] = split_coeff(den);
  if (dcore == kOne) {  // denominator collapsed to a constant after splits
    return with_coeff_times(cn / cd, ncore);
  }
  // ncore can still be a quotient when num was Product(c, Quotient)
  if (node_of(ncore).op == ExprOp::Quotient) {
    const Node& q = node_of(ncore);
    return with_coeff_times(cn / cd, quotient_ids(q.kids[0], product_ids({q.kids[1], dcore})));
  }
  ExprId q = raw(ExprOp::Quotient, 0, {ncore, dcore});
  return with_coeff_times(cn / cd, q);
}

ExprId tanh_id(ExprId arg) {
  if (arg == kZero) return kZero;
  return raw(ExprOp::Tanh, 0, {arg});
}

}  // namespace

// -- symbol table -----------------------------------------------------------

SymbolId intern_symbol(std::string_view name) { return Pool::get().intern_symbol(name); }
std::optional<SymbolId> find_symbol(std::string_view name) { return Pool::get().find_symbol(name); }
const std::string& symbol_name(SymbolId id) { return Pool::get().symbol_name(id); }

// -- Expr surface ------------------------------------------------------------

Expr Expr::constant(const Rational& value) { return Expr(make_constant(value)); }
Expr Expr::integer(long long value) { return Expr(make_constant(Rational(value))); }
Expr Expr::rational(long long num, long long den) {
  if (den == 0) throw DivisionByZeroError("rational literal with zero denominator");
  return Expr(make_constant(Rational(num, den)));
}
Expr Expr::variable(SymbolId symbol) {
  return Expr(raw(ExprOp::Variable, symbol, {}));
}

Expr Expr::sum(std::span<const Expr> terms) {
  std::vector<ExprId> ids;
  ids.reserve(terms.size());
  for (const Expr& t : terms) ids.push_back(t.id());
  return Expr(sum_ids(std::move(ids)));
}
Expr Expr::sum(std::initializer_list<Expr> terms) {
  return sum(std::span<const Expr>(terms.begin(), terms.size()));
}
Expr Expr::product(std::span<const Expr> factors) {
  std::vector<ExprId> ids;
  ids.reserve(factors.size());
  for (const Expr& f : factors) ids.push_back(f.id());
  return Expr(product_ids(std::move(ids)));
}
Expr Expr::product(std::initializer_list<Expr> factors) {
  return product(std::span<const Expr>(factors.begin(), factors.size()));
}
Expr Expr::power(const Expr& base, const Rational& exponent) {
  return Expr(power_id(base.id(), exponent));
}
Expr Expr::quotient(const Expr& num, const Expr& den) {
  return Expr(quotient_ids(num.id(), den.id()));
}
Expr Expr::tanh(const Expr& arg) { return Expr(tanh_id(arg.id())); }
Expr Expr::negate(const Expr& e) {
  return Expr(with_coeff_times(Rational(-1), e.id()));
}

ExprOp Expr::op() const { return node_of(id_).op; }
std::span<const ExprId> Expr::children() const {
  const Node& n = node_of(id_);
  return {n.kids.data(), n.kids.size()};
}
Expr Expr::child(std::size_t i) const { return Expr(node_of(id_).kids[i]); }
std::size_t Expr::child_count() const { return node_of(id_).kids.size(); }

const Rational& Expr::constant_value() const {
  assert(op() == ExprOp::Constant);
  return const_value(id_);
}
SymbolId Expr::symbol_id() const {
  assert(op() == ExprOp::Variable);
  return node_of(id_).payload;
}
const Rational& Expr::exponent() const {
  assert(op() == ExprOp::Power);
  return Pool::get().rational(node_of(id_).payload);
}
bool Expr::is_one() const { return id_ == kOne; }
bool Expr::may_depend_on(SymbolId symbol) const {
  return (node_of(id_).var_mask & symbol_bit(symbol)) != 0;
}

std::vector<SymbolId> Expr::free_variables() const {
  std::vector<SymbolId> out;
  std::vector<ExprId> stack{id_};
  std::unordered_map<ExprId, bool> seen;
  while (!stack.empty()) {
    ExprId id = stack.back();
    stack.pop_back();
    if (seen.count(id)) continue;
    seen[id] = true;
    const Node& n = node_of(id);
    if (n.op == ExprOp::Variable) out.push_back(n.payload);
    for (ExprId k : n.kids) stack.push_back(k);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::sum({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::sum({a, Expr::negate(b)}); }
Expr operator-(const Expr& a) { return Expr::negate(a); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::product({a, b}); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::quotient(a, b); }

// -- differentiation ---------------------------------------------------------

namespace {

ExprId diff_id(ExprId e, SymbolId v);

ExprId diff_uncached(ExprId e, SymbolId v) {
  const Node& n = node_of(e);
  switch (n.op) {
    case ExprOp::Constant:
      return kZero;
    case ExprOp::Variable:
      return n.payload == v ? kOne : kZero;
    case ExprOp::Sum: {
      std::vector<ExprId> terms;
      for (ExprId k : n.kids) {
        ExprId d = diff_id(k, v);
        if (d != kZero) terms.push_back(d);
      }
      return sum_ids(std::move(terms));
    }
    case ExprOp::Product: {
      std::vector<ExprId> terms;
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        ExprId d = diff_id(n.kids[i], v);
        if (d == kZero) continue;
        std::vector<ExprId> fs;
        fs.reserve(n.kids.size());
        for (std::size_t j = 0; j < n.kids.size(); ++j) fs.push_back(j == i ? d : n.kids[j]);
        terms.push_back(product_ids(std::move(fs)));
      }
      return sum_ids(std::move(terms));
    }
    case ExprOp::Power: {
      const Rational& ex = Pool::get().rational(n.payload);
      ExprId db = diff_id(n.kids[0], v);
      if (db == kZero) return kZero;
      ExprId pw = power_id(n.kids[0], ex - 1);
      return product_ids({make_constant(ex), pw, db});
    }
    case ExprOp::Quotient: {
      ExprId num = n.kids[0], den = n.kids[1];
      ExprId dn = diff_id(num, v);
      ExprId dd = diff_id(den, v);
      if (dd == kZero) return quotient_ids(dn, den);
      ExprId t1 = product_ids({dn, den});
      ExprId t2 = with_coeff_times(Rational(-1), product_ids({num, dd}));
      return quotient_ids(sum_ids({t1, t2}), power_id(den, Rational(2)));
    }
    case ExprOp::Tanh: {
      ExprId dg = diff_id(n.kids[0], v);
      if (dg == kZero) return kZero;
      ExprId th = tanh_id(n.kids[0]);
      ExprId sech2 = sum_ids({kOne, with_coeff_times(Rational(-1), power_id(th, Rational(2)))});
      return product_ids({sech2, dg});
    }
  }
  return kZero;
}

ExprId diff_id(ExprId e, SymbolId v) {
  if ((node_of(e).var_mask & symbol_bit(v)) == 0) return kZero;
  std::uint64_t key = (static_cast<std::uint64_t>(e) << 32) | v;
  if (auto hit = Pool::get().diff_cache_get(key)) return *hit;
  ExprId d = diff_uncached(e, v);
  Pool::get().diff_cache_put(key, d);
  return d;
}

}  // namespace

Expr differentiate(const Expr& e, SymbolId v) { return Expr::from_id(diff_id(e.id(), v)); }

// -- simplify ----------------------------------------------------------------

namespace detail {
Expr reduce_quotients(const Expr& e);  // implemented in poly.cpp
}

Expr simplify(const Expr& e, const SimplifyOptions& opts) {
  // Construction keeps every node canonical, so the base pass is the
  // identity; quotient cancellation is the only extra rewrite.
  if (!opts.cancel_quotients) return e;
  return detail::reduce_quotients(e);
}

// -- evaluation ---------------------------------------------------------------

namespace {

double pow_rational(double base, const Rational& e) {
  if (denominator(e) == 1) {
    boost::multiprecision::cpp_int k = numerator(e);
    bool neg = k < 0;
    if (neg) k = -k;
    double acc = 1.0, b = base;
    while (k > 0) {
      if ((k & 1) != 0) acc *= b;
      b *= b;
      k >>= 1;
    }
    return neg ? 1.0 / acc : acc;
  }
  if (base < 0) {
    throw ExprError("fractional power of negative base during evaluation");
  }
  return std::pow(base, static_cast<double>(e));
}

double compute_node(const Binding& binding, const std::unordered_map<ExprId, double>& memo,
                    ExprId id, const Node& n) {
  switch (n.op) {
    case ExprOp::Constant:
      return Pool::get().rational_double(n.payload);
    case ExprOp::Variable: {
      auto v = binding.get(n.payload);
      if (!v) throw UnboundVariableError(symbol_name(n.payload));
      return *v;
    }
    case ExprOp::Sum: {
      double s = 0;
      for (ExprId k : n.kids) s += memo.at(k);
      return s;
    }
    case ExprOp::Product: {
      double p = 1;
      for (ExprId k : n.kids) p *= memo.at(k);
      return p;
    }
    case ExprOp::Power:
      return pow_rational(memo.at(n.kids[0]), Pool::get().rational(n.payload));
    case ExprOp::Quotient: {
      double den = memo.at(n.kids[1]);
      if (std::abs(den) < 1e-300) throw DivisionByZeroError();
      return memo.at(n.kids[0]) / den;
    }
    case ExprOp::Tanh:
      return std::tanh(memo.at(n.kids[0]));
  }
  return 0;
}

double eval_with_memo(const Binding& binding, std::unordered_map<ExprId, double>& memo,
                      ExprId root) {
  std::vector<std::pair<ExprId, bool>> stack;
  stack.emplace_back(root, false);
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (memo.count(id)) continue;
    const Node& n = node_of(id);
    if (!expanded) {
      stack.emplace_back(id, true);
      for (ExprId k : n.kids) {
        if (!memo.count(k)) stack.emplace_back(k, false);
      }
      continue;
    }
    memo[id] = compute_node(binding, memo, id, n);
  }
  return memo.at(root);
}

}  // namespace

double evaluate(const Expr& e, const Binding& binding) {
  std::unordered_map<ExprId, double> memo;
  return eval_with_memo(binding, memo, e.id());
}

std::vector<double> evaluate_all(std::span<const Expr> exprs, const Binding& binding) {
  std::unordered_map<ExprId, double> memo;
  std::vector<double> out;
  out.reserve(exprs.size());
  for (const Expr& e : exprs) out.push_back(eval_with_memo(binding, memo, e.id()));
  return out;
}

void CachedEvaluator::bind(SymbolId s, double v) {
  if (binding_.contains(s)) memo_.clear();
  binding_.set(s, v);
}

double CachedEvaluator::eval(const Expr& e) { return eval_with_memo(binding_, memo_, e.id()); }

// -- modular evaluation ---------------------------------------------------------

namespace {

constexpr std::uint64_t kP = ModularEvaluator::kPrime;

std::uint64_t mod_mul(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % kP);
}

std::uint64_t mod_pow(std::uint64_t a, std::uint64_t e) {
  std::uint64_t acc = 1;
  a %= kP;
  while (e) {
    if (e & 1) acc = mod_mul(acc, a);
    a = mod_mul(a, a);
    e >>= 1;
  }
  return acc;
}

std::uint64_t mod_inv(std::uint64_t a) { return mod_pow(a, kP - 2); }

std::uint64_t mod_of_cpp_int(const boost::multiprecision::cpp_int& v) {
  boost::multiprecision::cpp_int r = v % kP;
  if (r < 0) r += kP;
  return static_cast<std::uint64_t>(r);
}

// p = 3 (mod 4): x^((p+1)/4) squares to x when x is a quadratic residue and
// to -x otherwise; either way it is a valid on-branch root for sampling.
std::uint64_t mod_sqrt_branch(std::uint64_t x) { return mod_pow(x, (kP + 1) / 4); }

}  // namespace

ModularEvaluator::ModularEvaluator(std::uint64_t seed) { reseed(seed); }

void ModularEvaluator::reseed(std::uint64_t seed) {
  rng_ = seed ? seed : 0x9E3779B97F4A7C15ull;
  binding_.clear();
  memo_.clear();
  tanh_atom_.clear();
  root_chain_.clear();
}

std::uint64_t ModularEvaluator::fresh() {
  // splitmix64, reduced into [1, p-1]
  rng_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t x = rng_;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  x ^= x >> 31;
  return 1 + x % (kP - 1);
}

std::uint64_t ModularEvaluator::value_of(SymbolId s) {
  auto it = binding_.find(s);
  if (it != binding_.end()) return it->second;
  std::uint64_t v = fresh();
  binding_.emplace(s, v);
  return v;
}

std::uint64_t ModularEvaluator::eval(const Expr& root) {
  std::vector<std::pair<ExprId, bool>> stack;
  stack.emplace_back(root.id(), false);
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (memo_.count(id)) continue;
    Expr e = Expr::from_id(id);
    if (!expanded) {
      stack.emplace_back(id, true);
      for (std::size_t i = 0; i < e.child_count(); ++i) {
        ExprId k = e.child(i).id();
        if (!memo_.count(k)) stack.emplace_back(k, false);
      }
      continue;
    }
    memo_[id] = compute(e);
  }
  return memo_.at(root.id());
}

std::uint64_t ModularEvaluator::compute(const Expr& e) {
  switch (e.op()) {
    case ExprOp::Constant: {
      const Rational& r = e.constant_value();
      std::uint64_t den = mod_of_cpp_int(denominator(r));
      if (den == 0) throw DivisionByZeroError("constant denominator divisible by the prime");
      return mod_mul(mod_of_cpp_int(numerator(r)), mod_inv(den));
    }
    case ExprOp::Variable:
      return value_of(e.symbol_id());
    case ExprOp::Sum: {
      std::uint64_t acc = 0;
      for (std::size_t i = 0; i < e.child_count(); ++i) {
        acc = (acc + memo_.at(e.child(i).id())) % kP;
      }
      return acc;
    }
    case ExprOp::Product: {
      std::uint64_t acc = 1;
      for (std::size_t i = 0; i < e.child_count(); ++i) {
        acc = mod_mul(acc, memo_.at(e.child(i).id()));
      }
      return acc;
    }
    case ExprOp::Quotient: {
      std::uint64_t den = memo_.at(e.child(1).id());
      if (den == 0) throw DivisionByZeroError("pole at modular sample point");
      return mod_mul(memo_.at(e.child(0).id()), mod_inv(den));
    }
    case ExprOp::Tanh: {
      auto [it, inserted] = tanh_atom_.emplace(e.id(), 0);
      if (inserted) it->second = fresh();
      return it->second;
    }
    case ExprOp::Power: {
      const Rational& ex = e.exponent();
      const boost::multiprecision::cpp_int& q = denominator(ex);
      std::uint64_t base = memo_.at(e.child(0).id());
      if (q == 1) {
        boost::multiprecision::cpp_int pnum = numerator(ex);
        bool neg = pnum < 0;
        if (neg) pnum = -pnum;
        std::uint64_t v = mod_pow(base, static_cast<std::uint64_t>(pnum));
        if (neg) {
          if (v == 0) throw DivisionByZeroError("pole at modular sample point");
          v = mod_inv(v);
        }
        return v;
      }
      // dyadic fractional exponent: iterated on-branch square roots, cached
      // per base so related powers stay algebraically consistent
      unsigned k = 0;
      boost::multiprecision::cpp_int qq = q;
      while ((qq & 1) == 0) {
        qq >>= 1;
        ++k;
      }
      if (qq != 1) {
        throw ExprError("modular evaluation supports only dyadic fractional exponents");
      }
      auto& chain = root_chain_[e.child(0).id()];
      if (chain.empty()) chain.push_back(base);
      while (chain.size() <= k) chain.push_back(mod_sqrt_branch(chain.back()));
      std::uint64_t root = chain[k];
      boost::multiprecision::cpp_int pnum = numerator(ex);
      bool neg = pnum < 0;
      if (neg) pnum = -pnum;
      std::uint64_t v = mod_pow(root, static_cast<std::uint64_t>(pnum));
      if (neg) {
        if (v == 0) throw DivisionByZeroError("pole at modular sample point");
        v = mod_inv(v);
      }
      return v;
    }
  }
  return 0;
}

// -- substitution -------------------------------------------------------------

namespace {

ExprId subst_id(ExprId e, const std::unordered_map<SymbolId, Expr>& map,
                std::unordered_map<ExprId, ExprId>& memo) {
  auto it = memo.find(e);
  if (it != memo.end()) return it->second;
  const Node& n = node_of(e);
  ExprId out = e;
  switch (n.op) {
    case ExprOp::Constant:
      break;
    case ExprOp::Variable: {
      auto m = map.find(n.payload);
      if (m != map.end()) out = m->second.id();
      break;
    }
    default: {
      std::vector<ExprId> kids;
      kids.reserve(n.kids.size());
      bool changed = false;
      for (ExprId k : n.kids) {
        ExprId nk = subst_id(k, map, memo);
        changed |= (nk != k);
        kids.push_back(nk);
      }
      if (changed) {
        switch (n.op) {
          case ExprOp::Sum:
            out = sum_ids(std::move(kids));
            break;
          case ExprOp::Product:
            out = product_ids(std::move(kids));
            break;
          case ExprOp::Power:
            out = power_id(kids[0], Pool::get().rational(n.payload));
            break;
          case ExprOp::Quotient:
            out = quotient_ids(kids[0], kids[1]);
            break;
          case ExprOp::Tanh:
            out = tanh_id(kids[0]);
            break;
          default:
            break;
        }
      }
      break;
    }
  }
  memo.emplace(e, out);
  return out;
}

}  // namespace

Expr substitute(const Expr& e, const std::unordered_map<SymbolId, Expr>& map) {
  std::unordered_map<ExprId, ExprId> memo;
  return Expr::from_id(subst_id(e.id(), map, memo));
}

// -- printing ------------------------------------------------------------------

namespace {

enum Prec { kAdd = 1, kMul = 2, kPow = 3, kAtom = 4 };

void print_rec(std::string& out, ExprId id, int parent_prec);

void print_const(std::string& out, const Rational& r, int parent_prec) {
  const bool frac = denominator(r) != 1;
  const bool neg = r < 0;
  int prec = frac ? kMul : (neg ? kAdd : kAtom);
  bool wrap = prec < parent_prec;
  if (wrap) out += '(';
  out += numerator(r).str();
  if (frac) {
    out += '/';
    out += denominator(r).str();
  }
  if (wrap) out += ')';
}

// True if the term prints with a leading minus sign at the given position.
bool negative_head(ExprId id) {
  const Node& n = node_of(id);
  if (n.op == ExprOp::Constant) return const_value(id) < 0;
  if (n.op == ExprOp::Product && is_const(n.kids[0])) return const_value(n.kids[0]) < 0;
  return false;
}

ExprId negated(ExprId id) { return with_coeff_times(Rational(-1), id); }

void print_rec(std::string& out, ExprId id, int parent_prec) {
  const Node& n = node_of(id);
  switch (n.op) {
    case ExprOp::Constant:
      print_const(out, const_value(id), parent_prec);
      return;
    case ExprOp::Variable:
      out += symbol_name(n.payload);
      return;
    case ExprOp::Sum: {
      bool wrap = kAdd < parent_prec;
      if (wrap) out += '(';
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        ExprId t = n.kids[i];
        if (i == 0) {
          print_rec(out, t, kAdd);
        } else if (negative_head(t)) {
          out += " - ";
          print_rec(out, negated(t), kMul);
        } else {
          out += " + ";
          print_rec(out, t, kMul);
        }
      }
      if (wrap) out += ')';
      return;
    }
    case ExprOp::Product: {
      bool wrap = kMul < parent_prec;
      if (wrap) out += '(';
      std::size_t start = 0;
      if (is_const(n.kids[0])) {
        Rational c = const_value(n.kids[0]);
        if (c < 0) {
          out += '-';
          c = -c;
        }
        if (c != 1) {
          print_const(out, c, kMul);
          out += '*';
        }
        start = 1;
      }
      for (std::size_t i = start; i < n.kids.size(); ++i) {
        if (i > start) out += '*';
        print_rec(out, n.kids[i], kMul + 1);
      }
      if (wrap) out += ')';
      return;
    }
    case ExprOp::Quotient: {
      bool wrap = kMul < parent_prec;
      if (wrap) out += '(';
      print_rec(out, n.kids[0], kMul + 1);
      out += '/';
      print_rec(out, n.kids[1], kMul + 1);
      if (wrap) out += ')';
      return;
    }
    case ExprOp::Power: {
      bool wrap = kPow < parent_prec;
      if (wrap) out += '(';
      print_rec(out, n.kids[0], kPow + 1);
      out += '^';
      const Rational& e = Pool::get().rational(n.payload);
      if (denominator(e) == 1 && e > 0) {
        out += numerator(e).str();
      } else {
        out += '(';
        out += numerator(e).str();
        if (denominator(e) != 1) {
          out += '/';
          out += denominator(e).str();
        }
        out += ')';
      }
      if (wrap) out += ')';
      return;
    }
    case ExprOp::Tanh:
      out += "tanh(";
      print_rec(out, n.kids[0], kAdd);
      out += ')';
      return;
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print_rec(out, e.id(), kAdd);
  return out;
}

// -- parser --------------------------------------------------------------------

namespace {

class Parser {
 public:
  Parser(std::string_view text, int line_offset)
      : text_(text), line_(line_offset) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, line_, col()); }

  int col() const {
    int c = 1;
    for (std::size_t i = line_start_; i < pos_ && i < text_.size(); ++i) ++c;
    return c;
  }

  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
        line_start_ = pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  Expr parse_sum() {
    Expr acc = parse_term();
    for (;;) {
      char c = peek();
      if (c == '+') {
        ++pos_;
        acc = acc + parse_term();
      } else if (c == '-') {
        ++pos_;
        acc = acc - parse_term();
      } else {
        return acc;
      }
    }
  }

  Expr parse_term() {
    Expr acc = parse_unary();
    for (;;) {
      char c = peek();
      if (c == '*') {
        ++pos_;
        acc = acc * parse_unary();
      } else if (c == '/') {
        ++pos_;
        acc = acc / parse_unary();
      } else {
        return acc;
      }
    }
  }

  Expr parse_unary() {
    char c = peek();
    if (c == '-') {
      ++pos_;
      return Expr::negate(parse_unary());
    }
    if (c == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_postfix();
  }

  Expr parse_postfix() {
    Expr base = parse_primary();
    if (peek() == '^') {
      ++pos_;
      Expr e = parse_unary();  // right-associative via recursion into unary/postfix
      if (!e.is_constant()) fail("exponent must be a rational constant");
      return Expr::power(base, e.constant_value());
    }
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    using boost::multiprecision::cpp_int;
    std::size_t start = pos_;
    cpp_int mantissa = 0;
    long frac_digits = 0;
    bool any = false;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      mantissa = mantissa * 10 + (text_[pos_] - '0');
      ++pos_;
      any = true;
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        mantissa = mantissa * 10 + (text_[pos_] - '0');
        ++frac_digits;
        ++pos_;
        any = true;
      }
    }
    if (!any) fail("malformed number");
    long exp10 = 0;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      bool neg = false;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
        neg = text_[pos_] == '-';
        ++pos_;
      }
      if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        long e = 0;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
          e = e * 10 + (text_[pos_] - '0');
          ++pos_;
        }
        exp10 = neg ? -e : e;
      } else {
        pos_ = save;  // 'e' was an identifier start, not an exponent
      }
    }
    (void)start;
    long net = exp10 - frac_digits;
    Rational r(mantissa);
    cpp_int p10 = 1;
    for (long i = 0; i < std::abs(net); ++i) p10 *= 10;
    if (net >= 0) {
      r *= Rational(p10);
    } else {
      r /= Rational(p10);
    }
    return Expr::constant(r);
  }

  Expr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    std::string_view name = text_.substr(start, pos_ - start);
    if (peek() == '(') {
      if (name != "tanh") fail("unknown function '" + std::string(name) + "'");
      ++pos_;
      Expr arg = parse_sum();
      if (!eat(')')) fail("expected ')' closing tanh");
      return Expr::tanh(arg);
    }
    return Expr::symbol(name);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
  int line_;
};

}  // namespace

Expr parse_expression(std::string_view text, int line_offset) {
  return Parser(text, line_offset).parse();
}

std::size_t expression_pool_size() { return Pool::get().size(); }

}  // namespace obsym
