#include "obsym/symmetry.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "obsym/poly.hpp"

namespace obsym {

namespace {

struct FractionMatrix {
  std::vector<std::vector<PolyFraction>> rows;
  AtomTable atoms;
  bool convertible = true;
};

FractionMatrix to_fractions(const std::vector<std::vector<Expr>>& jac) {
  FractionMatrix fm;
  fm.rows.reserve(jac.size());
  for (const auto& row : jac) {
    std::vector<PolyFraction> frow;
    frow.reserve(row.size());
    for (const Expr& e : row) {
      auto f = expr_to_fraction(e, &fm.atoms);
      if (!f) {
        fm.convertible = false;
        return fm;
      }
      frow.push_back(std::move(*f));
    }
    fm.rows.push_back(std::move(frow));
  }
  return fm;
}

// Greedy selection of generically independent rows by exact elimination at a
// random rational point. Independence at one point implies generic
// independence, so the selection is sound; the point is resampled if it hits
// a pole.
std::vector<std::size_t> select_rows(const FractionMatrix& fm, std::uint64_t seed) {
  const std::size_t cols = fm.rows.empty() ? 0 : fm.rows[0].size();
  std::mt19937_64 rng(seed ^ 0xABCDEF123456ull);
  for (int attempt = 0; attempt < 50; ++attempt) {
    std::unordered_map<SymbolId, Rational> point;
    auto bind_all = [&](const SparsePoly& p) {
      for (SymbolId s : p.variables()) {
        if (!point.count(s)) {
          point.emplace(s, Rational(16 + static_cast<long>(rng() % 64), 16));
        }
      }
    };
    bool pole = false;
    std::vector<std::vector<Rational>> basis;  // eliminated independent rows
    std::vector<std::size_t> selected;
    std::vector<int> pivot_col_of;  // per basis row
    for (std::size_t i = 0; i < fm.rows.size() && !pole; ++i) {
      std::vector<Rational> row(cols);
      for (std::size_t j = 0; j < cols; ++j) {
        bind_all(fm.rows[i][j].num());
        bind_all(fm.rows[i][j].den());
        Rational den = fm.rows[i][j].den().eval_exact(point);
        if (den == 0) {
          pole = true;
          break;
        }
        row[j] = fm.rows[i][j].num().eval_exact(point) / den;
      }
      if (pole) break;
      // reduce against current basis
      for (std::size_t b = 0; b < basis.size(); ++b) {
        int pc = pivot_col_of[b];
        if (row[pc] == 0) continue;
        Rational f = row[pc];
        for (std::size_t j = 0; j < cols; ++j) row[j] -= f * basis[b][j];
      }
      int pc = -1;
      for (std::size_t j = 0; j < cols; ++j) {
        if (row[j] != 0) {
          pc = static_cast<int>(j);
          break;
        }
      }
      if (pc < 0) continue;
      Rational inv = row[pc];
      for (std::size_t j = 0; j < cols; ++j) row[j] /= inv;
      basis.push_back(std::move(row));
      pivot_col_of.push_back(pc);
      selected.push_back(i);
      if (selected.size() == cols) break;
    }
    if (!pole) return selected;
  }
  throw DegenerateEvaluationError("could not find a pole-free specialization for row selection");
}

// Reduced row echelon form over the rational-function field. Returns pivot
// columns; rows.size() stays the rank.
std::vector<int> fraction_rref(std::vector<std::vector<PolyFraction>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows[0].size();
  std::vector<int> pivot_cols;
  std::size_t next_row = 0;
  for (std::size_t col = 0; col < cols && next_row < rows.size(); ++col) {
    // pick the sparsest nonzero pivot in this column
    std::size_t best = SIZE_MAX, pr = rows.size();
    for (std::size_t i = next_row; i < rows.size(); ++i) {
      if (rows[i][col].is_zero()) continue;
      std::size_t w = rows[i][col].num().term_count() + rows[i][col].den().term_count();
      if (w < best) {
        best = w;
        pr = i;
      }
    }
    if (pr == rows.size()) continue;
    std::swap(rows[next_row], rows[pr]);
    PolyFraction pivot = rows[next_row][col];
    for (std::size_t j = col; j < cols; ++j) rows[next_row][j] = rows[next_row][j] / pivot;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i == next_row || rows[i][col].is_zero()) continue;
      PolyFraction f = rows[i][col];
      for (std::size_t j = col; j < cols; ++j) {
        rows[i][j] = rows[i][j] - f * rows[next_row][j];
      }
    }
    pivot_cols.push_back(static_cast<int>(col));
    ++next_row;
  }
  rows.resize(next_row);
  return pivot_cols;
}

std::vector<bool> pattern_of(const std::vector<Expr>& v) {
  std::vector<bool> p;
  p.reserve(v.size());
  for (const Expr& e : v) p.push_back(!e.is_zero());
  return p;
}

Eigen::MatrixXd kernel_basis(const Eigen::MatrixXd& m, int kernel_dim) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(kernel_dim);
}

}  // namespace

std::vector<bool> InfinitesimalBasis::acted_on() const {
  std::vector<bool> out(z.size(), false);
  for (const auto& p : nonzero_pattern) {
    for (std::size_t i = 0; i < p.size() && i < out.size(); ++i) {
      if (p[i]) out[i] = true;
    }
  }
  return out;
}

InfinitesimalBasis infinitesimal_basis(const LieChain& chain, const SymmetryOptions& opts) {
  InfinitesimalBasis out;
  out.z = chain.z;
  const std::size_t nz = chain.z.size();
  auto jac = stacked_jacobian(chain);

  if (nz <= opts.symbolic_dim_limit) {
    FractionMatrix fm = to_fractions(jac);
    if (fm.convertible) {
      std::vector<std::size_t> selected = select_rows(fm, opts.rank.seed);
      std::vector<std::vector<PolyFraction>> sub;
      sub.reserve(selected.size());
      for (std::size_t i : selected) sub.push_back(fm.rows[i]);
      std::vector<int> pivots = fraction_rref(sub);
      out.r = static_cast<int>(nz - pivots.size());
      out.symbolic = true;
      std::vector<bool> is_pivot(nz, false);
      for (int c : pivots) is_pivot[c] = true;
      // one null vector per free column
      for (std::size_t f = 0; f < nz; ++f) {
        if (is_pivot[f]) continue;
        std::vector<PolyFraction> xi(nz);
        xi[f] = PolyFraction::constant(Rational(1));
        for (std::size_t rr = 0; rr < pivots.size(); ++rr) {
          xi[pivots[rr]] = PolyFraction() - sub[rr][f];
        }
        // normalize so the first structurally nonzero entry is 1
        std::size_t first = 0;
        while (first < nz && xi[first].is_zero()) ++first;
        if (first < nz) {
          PolyFraction lead = xi[first];
          for (auto& e : xi) {
            if (!e.is_zero()) e = e / lead;
          }
        }
        std::vector<Expr> vec;
        vec.reserve(nz);
        for (const auto& e : xi) {
          vec.push_back(e.is_zero() ? Expr() : fraction_to_expr(e, &fm.atoms));
        }
        out.nonzero_pattern.push_back(pattern_of(vec));
        out.vectors.push_back(std::move(vec));
      }
      return out;
    }
  }

  // numeric path: per-sample SVD kernels, pattern by majority vote
  std::vector<SymbolId> syms;
  {
    std::set<SymbolId> s;
    for (const auto& row : jac) {
      for (const Expr& e : row) {
        for (SymbolId v : e.free_variables()) s.insert(v);
      }
    }
    syms.assign(s.begin(), s.end());
  }
  std::mt19937_64 rng(opts.rank.seed + 7);
  std::uniform_real_distribution<double> dist(1.0, 2.0);
  int rank = 0;
  std::vector<Eigen::MatrixXd> mats;
  std::vector<Binding> binds;
  for (int sample = 0; sample < opts.numeric_samples; ++sample) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10) throw DegenerateEvaluationError("persistent degenerate specialization");
      Binding b;
      for (SymbolId s : syms) b.set(s, dist(rng));
      try {
        std::vector<Expr> flat;
        for (const auto& row : jac) {
          for (const Expr& e : row) flat.push_back(e);
        }
        std::vector<double> vals = evaluate_all(flat, b);
        Eigen::MatrixXd m(static_cast<int>(jac.size()), static_cast<int>(nz));
        for (std::size_t i = 0; i < jac.size(); ++i) {
          for (std::size_t j = 0; j < nz; ++j) {
            m(static_cast<int>(i), static_cast<int>(j)) = vals[i * nz + j];
          }
        }
        rank = std::max(rank, numeric_rank(m, opts.rank.pivot_tol));
        mats.push_back(std::move(m));
        binds.push_back(std::move(b));
        break;
      } catch (const DivisionByZeroError&) {
        continue;
      }
    }
  }
  out.r = static_cast<int>(nz) - rank;
  out.symbolic = false;
  if (out.r == 0) return out;

  std::vector<std::vector<int>> votes(out.r, std::vector<int>(nz, 0));
  for (std::size_t s = 0; s < mats.size(); ++s) {
    Eigen::MatrixXd basis = kernel_basis(mats[s], out.r);
    // canonicalize: reduced echelon over the basis rows spanning the kernel
    Eigen::MatrixXd rowsp = basis.transpose();  // r x nz
    int next = 0;
    for (int col = 0; col < rowsp.cols() && next < rowsp.rows(); ++col) {
      int pr = -1;
      double best = 1e-7;
      for (int i = next; i < rowsp.rows(); ++i) {
        if (std::abs(rowsp(i, col)) > best) {
          best = std::abs(rowsp(i, col));
          pr = i;
        }
      }
      if (pr < 0) continue;
      rowsp.row(pr).swap(rowsp.row(next));
      rowsp.row(next) /= rowsp(next, col);
      for (int i = 0; i < rowsp.rows(); ++i) {
        if (i != next) rowsp.row(i) -= rowsp(i, col) * rowsp.row(next);
      }
      ++next;
    }
    for (int v = 0; v < out.r; ++v) {
      double scale = rowsp.row(v).cwiseAbs().maxCoeff();
      for (std::size_t j = 0; j < nz; ++j) {
        if (scale > 0 && std::abs(rowsp(v, static_cast<int>(j))) > 1e-8 * scale) {
          votes[v][j] += 1;
        }
      }
    }
    out.samples.push_back({binds[s], std::move(basis)});
  }
  const int majority = static_cast<int>(mats.size()) / 2 + 1;
  for (int v = 0; v < out.r; ++v) {
    std::vector<bool> p(nz, false);
    for (std::size_t j = 0; j < nz; ++j) p[j] = votes[v][j] >= majority;
    out.nonzero_pattern.push_back(std::move(p));
  }
  return out;
}

// -- Lie series flow ---------------------------------------------------------

SymmetryFlow lie_series_flow(std::span<const Expr> xi, std::span<const SymbolId> z, int order) {
  if (xi.size() != z.size()) {
    throw DimensionMismatchError("infinitesimal dimension does not match state list");
  }
  if (order < 1) throw ModelError("flow order must be >= 1");
  SymmetryFlow flow;
  flow.z.assign(z.begin(), z.end());
  flow.order = order;

  std::vector<Expr> current;
  current.reserve(z.size());
  for (SymbolId s : z) current.push_back(Expr::variable(s));
  flow.coefficients.push_back(current);

  for (int m = 1; m <= order + 1; ++m) {
    std::vector<Expr> next(z.size());
    bool all_zero = true;
    for (std::size_t j = 0; j < z.size(); ++j) {
      std::vector<Expr> terms;
      for (std::size_t i = 0; i < z.size(); ++i) {
        if (xi[i].is_zero() || !current[j].may_depend_on(z[i])) continue;
        Expr d = differentiate(current[j], z[i]);
        if (d.is_zero()) continue;
        terms.push_back(d * xi[i]);
      }
      Expr c = Expr::product({Expr::rational(1, m), Expr::sum(terms)});
      next[j] = c;
      all_zero = all_zero && c.is_zero();
    }
    if (m == order + 1) {
      flow.exact_termination = all_zero;
      break;
    }
    flow.coefficients.push_back(next);
    current = std::move(next);
    if (all_zero) {
      flow.exact_termination = true;
      break;
    }
  }
  return flow;
}

std::vector<double> SymmetryFlow::evaluate(const Binding& b, double eps) const {
  std::vector<double> out(z.size(), 0.0);
  for (std::size_t j = 0; j < z.size(); ++j) {
    double acc = 0;
    for (std::size_t m = coefficients.size(); m-- > 0;) {
      acc = acc * eps + obsym::evaluate(coefficients[m][j], b);
    }
    out[j] = acc;
  }
  return out;
}

Expr SymmetryFlow::component(std::size_t j, SymbolId eps_symbol) const {
  Expr eps = Expr::variable(eps_symbol);
  std::vector<Expr> terms;
  for (std::size_t m = 0; m < coefficients.size(); ++m) {
    terms.push_back(coefficients[m][j] * Expr::power(eps, Rational(m)));
  }
  return Expr::sum(terms);
}

// -- destruction schemes -------------------------------------------------------

bool identically_zero(const Expr& e, std::uint64_t seed) {
  if (e.is_zero()) return true;
  Expr reduced = simplify(e, {.cancel_quotients = true});
  if (reduced.is_zero()) return true;
  std::vector<SymbolId> syms = reduced.free_variables();
  if (syms.empty()) return false;  // nonzero constant
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(1.0, 2.0);
  for (int t = 0; t < 20; ++t) {
    Binding b;
    for (SymbolId s : syms) b.set(s, dist(rng));
    try {
      if (std::abs(obsym::evaluate(reduced, b)) > 1e-10) return false;
    } catch (const DivisionByZeroError&) {
      continue;
    }
  }
  return true;
}

namespace {

Expr symbolic_contraction(const InfinitesimalBasis& basis, const Expr& h, std::size_t vec) {
  std::vector<Expr> terms;
  for (std::size_t j = 0; j < basis.z.size(); ++j) {
    const Expr& xi_j = basis.vectors[vec][j];
    if (xi_j.is_zero() || !h.may_depend_on(basis.z[j])) continue;
    Expr d = differentiate(h, basis.z[j]);
    if (d.is_zero()) continue;
    terms.push_back(d * xi_j);
  }
  return Expr::sum(terms);
}

bool numeric_contraction_nonzero(const InfinitesimalBasis& basis, const Expr& h, int vec) {
  for (const auto& sample : basis.samples) {
    double acc = 0;
    double scale = 0;
    for (std::size_t j = 0; j < basis.z.size(); ++j) {
      Expr d = differentiate(h, basis.z[j]);
      if (d.is_zero()) continue;
      double g = obsym::evaluate(d, sample.binding);
      acc += g * sample.basis(static_cast<int>(j), vec);
      scale = std::max(scale, std::abs(g));
    }
    if (std::abs(acc) > 1e-10 * std::max(1.0, scale)) return true;
  }
  return false;
}

}  // namespace

std::vector<Expr> measurement_contractions(const InfinitesimalBasis& basis, const Expr& h_new) {
  std::vector<Expr> out;
  if (!basis.symbolic) return out;
  for (std::size_t v = 0; v < basis.vectors.size(); ++v) {
    out.push_back(symbolic_contraction(basis, h_new, v));
  }
  return out;
}

std::vector<bool> destroys_by_measurement(const InfinitesimalBasis& basis, const Expr& h_new) {
  std::vector<bool> out(basis.r, false);
  if (basis.symbolic) {
    for (int v = 0; v < basis.r; ++v) {
      out[v] = !identically_zero(symbolic_contraction(basis, h_new, v));
    }
  } else {
    for (int v = 0; v < basis.r; ++v) out[v] = numeric_contraction_nonzero(basis, h_new, v);
  }
  return out;
}

std::vector<std::vector<Expr>> transformation_contractions(const InfinitesimalBasis& basis,
                                                           std::span<const Expr> transform) {
  std::vector<std::vector<Expr>> out;
  if (!basis.symbolic) return out;
  for (std::size_t v = 0; v < basis.vectors.size(); ++v) {
    std::vector<Expr> row;
    for (const Expr& t : transform) row.push_back(symbolic_contraction(basis, t, v));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<bool> destroys_by_transformation(const InfinitesimalBasis& basis,
                                             std::span<const Expr> transform) {
  if (transform.size() > basis.z.size()) {
    throw DimensionMismatchError("transformed state vector may not exceed the original dimension");
  }
  std::vector<bool> out(basis.r, false);
  for (int v = 0; v < basis.r; ++v) {
    bool all_zero = true;
    if (basis.symbolic) {
      for (const Expr& t : transform) {
        if (!identically_zero(symbolic_contraction(basis, t, v))) {
          all_zero = false;
          break;
        }
      }
    } else {
      for (const Expr& t : transform) {
        if (numeric_contraction_nonzero(basis, t, v)) {
          all_zero = false;
          break;
        }
      }
    }
    out[v] = all_zero;
  }
  return out;
}

}  // namespace obsym
