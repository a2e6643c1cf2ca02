#include "obsym/observability.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "obsym/poly.hpp"

namespace obsym {

int numeric_rank(Eigen::MatrixXd m, double pivot_tol) {
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  // row equilibration tames the mixed magnitudes produced by steep tanh
  // derivatives
  for (int i = 0; i < rows; ++i) {
    double norm = m.row(i).cwiseAbs().maxCoeff();
    if (norm > 0) m.row(i) /= norm;
  }
  int rank = 0;
  std::vector<int> row_used(rows, 0);
  std::vector<int> col_used(cols, 0);
  for (int step = 0; step < std::min(rows, cols); ++step) {
    // complete pivoting
    double best = 0;
    int pr = -1, pc = -1;
    for (int i = 0; i < rows; ++i) {
      if (row_used[i]) continue;
      for (int j = 0; j < cols; ++j) {
        if (col_used[j]) continue;
        double v = std::abs(m(i, j));
        if (v > best) {
          best = v;
          pr = i;
          pc = j;
        }
      }
    }
    if (pr < 0 || best <= pivot_tol) break;
    row_used[pr] = 1;
    col_used[pc] = 1;
    ++rank;
    for (int i = 0; i < rows; ++i) {
      if (row_used[i] || m(i, pc) == 0.0) continue;
      double f = m(i, pc) / m(pr, pc);
      m.row(i) -= f * m.row(pr);
      m(i, pc) = 0.0;
    }
  }
  return rank;
}

namespace {

/// Exact rank over Z_p of residue rows (optionally with one column removed).
int modp_rank(const std::vector<std::vector<std::uint64_t>>& rows, std::size_t width,
              int skip_col = -1) {
  constexpr std::uint64_t p = ModularEvaluator::kPrime;
  auto mul = [](std::uint64_t a, std::uint64_t b) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % p);
  };
  auto powmod = [&](std::uint64_t a, std::uint64_t e) {
    std::uint64_t acc = 1;
    while (e) {
      if (e & 1) acc = mul(acc, a);
      a = mul(a, a);
      e >>= 1;
    }
    return acc;
  };
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < width; ++j) {
    if (static_cast<int>(j) != skip_col) cols.push_back(j);
  }
  // online elimination: keep reduced pivot rows
  std::vector<std::vector<std::uint64_t>> basis;  // compacted to cols
  std::vector<std::size_t> pivot_of;              // pivot position per basis row
  for (const auto& raw : rows) {
    std::vector<std::uint64_t> row(cols.size(), 0);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      row[j] = cols[j] < raw.size() ? raw[cols[j]] : 0;
    }
    for (std::size_t b = 0; b < basis.size(); ++b) {
      std::uint64_t f = row[pivot_of[b]];
      if (f == 0) continue;
      const auto& br = basis[b];
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = (row[j] + p - mul(f, br[j])) % p;
      }
    }
    std::size_t pc = row.size();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] != 0) {
        pc = j;
        break;
      }
    }
    if (pc == row.size()) continue;
    std::uint64_t inv = powmod(row[pc], p - 2);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = mul(row[j], inv);
    basis.push_back(std::move(row));
    pivot_of.push_back(pc);
    if (basis.size() == cols.size()) break;
  }
  return static_cast<int>(basis.size());
}

int symbolic_rank(const std::vector<std::vector<Expr>>& jacobian) {
  const std::size_t rows = jacobian.size();
  const std::size_t cols = rows ? jacobian[0].size() : 0;
  AtomTable atoms;
  std::vector<std::vector<PolyFraction>> m(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      auto f = expr_to_fraction(jacobian[i][j], &atoms);
      if (!f) throw ModelError("symbolic rank: entry not convertible");
      m[i].push_back(*f);
    }
  }
  std::vector<bool> row_used(rows, false), col_used(cols, false);
  int rank = 0;
  for (std::size_t step = 0; step < std::min(rows, cols); ++step) {
    // pick the sparsest nonzero pivot to limit fill-in
    std::size_t pr = rows, pc = cols, best = SIZE_MAX;
    for (std::size_t i = 0; i < rows; ++i) {
      if (row_used[i]) continue;
      for (std::size_t j = 0; j < cols; ++j) {
        if (col_used[j] || m[i][j].is_zero()) continue;
        std::size_t w = m[i][j].num().term_count() + m[i][j].den().term_count();
        if (w < best) {
          best = w;
          pr = i;
          pc = j;
        }
      }
    }
    if (pr == rows) break;
    row_used[pr] = true;
    col_used[pc] = true;
    ++rank;
    const PolyFraction& pivot = m[pr][pc];
    for (std::size_t i = 0; i < rows; ++i) {
      if (row_used[i] || m[i][pc].is_zero()) continue;
      PolyFraction f = m[i][pc] / pivot;
      for (std::size_t j = 0; j < cols; ++j) {
        if (col_used[j] && j != pc) continue;
        m[i][j] = m[i][j] - f * m[pr][j];
      }
      m[i][pc] = PolyFraction();
    }
  }
  return rank;
}

}  // namespace

RankResult rank_of(const std::vector<std::vector<Expr>>& jacobian, const RankOptions& opts) {
  RankResult r;
  r.method = opts.method;
  r.seed = opts.seed;
  r.target = jacobian.empty() ? 0 : static_cast<int>(jacobian[0].size());
  if (jacobian.empty()) return r;

  if (opts.method == RankMethod::Symbolic) {
    r.rank = symbolic_rank(jacobian);
    return r;
  }

  if (opts.trials < 3) throw ModelError("probabilistic rank needs trials >= 3");
  const std::size_t width = jacobian[0].size();
  int done = 0, attempts = 0;
  const int max_attempts = opts.trials * 10;
  std::uint64_t salt = 0;
  while (done < opts.trials) {
    if (++attempts > max_attempts) {
      throw DegenerateEvaluationError("too many degenerate specializations while ranking");
    }
    ModularEvaluator ev(opts.seed + 0x9E3779B9u * (done + 1) + salt * 0x100000001b3ull);
    try {
      std::vector<std::vector<std::uint64_t>> rows;
      rows.reserve(jacobian.size());
      for (const auto& jrow : jacobian) {
        std::vector<std::uint64_t> row;
        row.reserve(width);
        for (const Expr& e : jrow) row.push_back(ev.eval(e));
        rows.push_back(std::move(row));
      }
      r.rank = std::max(r.rank, modp_rank(rows, width));
      ++done;
      salt = 0;
    } catch (const DivisionByZeroError&) {
      ++salt;  // resample this trial at a shifted point
      continue;
    }
  }
  r.trials = done;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

/// Per-trial incremental view of the stacked Jacobian over Z_p: new block
/// rows are evaluated once per trial and cached; column-removal ranks reuse
/// them.
class TrialSet {
 public:
  TrialSet(int trials, std::uint64_t seed) {
    for (int t = 0; t < trials; ++t) trials_.emplace_back(seed + 0x9E3779B9u * (t + 1));
  }

  void absorb(const LieChain& chain) {
    for (auto& tr : trials_) {
      for (int attempt = 0;; ++attempt) {
        try {
          tr.absorb(chain);
          break;
        } catch (const DivisionByZeroError&) {
          if (attempt >= 10) {
            throw DegenerateEvaluationError("persistent degenerate specialization");
          }
          tr.resample();  // fresh point, all rows recomputed on retry
        }
      }
    }
  }

  int rank() const {
    int r = 0;
    for (const auto& tr : trials_) r = std::max(r, modp_rank(tr.rows, tr.width));
    return r;
  }

  int rank_without_column(int col) const {
    int r = 0;
    for (const auto& tr : trials_) r = std::max(r, modp_rank(tr.rows, tr.width, col));
    return r;
  }

 private:
  struct Trial {
    explicit Trial(std::uint64_t seed) : base_seed(seed), ev(seed) {}

    void absorb(const LieChain& chain) {
      for (std::size_t b = next_block; b < chain.blocks.size(); ++b) {
        const auto& block = chain.blocks[b];
        for (const auto& jrow : block.jacobian) {
          std::vector<std::uint64_t> row;
          row.reserve(jrow.size());
          for (const Expr& e : jrow) row.push_back(ev.eval(e));
          rows.push_back(std::move(row));
        }
        next_block = b + 1;
      }
      width = chain.z.size();
    }

    void resample() {
      salt += 1;
      ev.reseed(base_seed ^ (salt * 0x2545F4914F6CDD1Dull));
      rows.clear();
      next_block = 0;
    }

    std::uint64_t base_seed;
    std::uint64_t salt = 0;
    ModularEvaluator ev;
    std::vector<std::vector<std::uint64_t>> rows;
    std::size_t next_block = 0;
    std::size_t width = 0;
  };

  std::vector<Trial> trials_;
};

}  // namespace

std::vector<bool> partial_observability(const LieChain& chain, const RankOptions& opts) {
  const std::size_t nz = chain.z.size();
  std::vector<bool> observable(nz, false);
  if (opts.method == RankMethod::Symbolic) {
    auto jac = stacked_jacobian(chain);
    int full = symbolic_rank(jac);
    for (std::size_t m = 0; m < nz; ++m) {
      std::vector<std::vector<Expr>> reduced;
      reduced.reserve(jac.size());
      for (const auto& row : jac) {
        std::vector<Expr> r;
        r.reserve(nz - 1);
        for (std::size_t j = 0; j < nz; ++j) {
          if (j != m) r.push_back(row[j]);
        }
        reduced.push_back(std::move(r));
      }
      observable[m] = symbolic_rank(reduced) == full - 1;
    }
    return observable;
  }
  TrialSet trials(opts.trials, opts.seed);
  trials.absorb(chain);
  int full = trials.rank();
  for (std::size_t m = 0; m < nz; ++m) {
    observable[m] = trials.rank_without_column(static_cast<int>(m)) == full - 1;
  }
  return observable;
}

ObservabilityReport analyze_chain(LieChain& chain, const AnalyzeOptions& opts) {
  ObservabilityReport rep;
  rep.definition = chain.definition;

  const int k_max = opts.k_max >= 0 ? opts.k_max : static_cast<int>(chain.z.size());

  std::optional<TrialSet> trials;
  if (opts.rank.method == RankMethod::Probabilistic) {
    trials.emplace(opts.rank.trials, opts.rank.seed);
  }

  auto rank_now = [&]() -> int {
    if (trials) {
      trials->absorb(chain);
      return trials->rank();
    }
    return symbolic_rank(stacked_jacobian(chain));
  };

  int stable = 0;
  int last_def = -1;
  for (;;) {
    int rank = rank_now();
    int target = static_cast<int>(chain.z.size());
    rep.per_order_rank.push_back(rank);
    rep.per_order_target.push_back(target);
    int deficiency = target - rank;
    if (rank == target) break;
    if (opts.saturation_window > 0) {
      stable = (deficiency == last_def) ? stable + 1 : 0;
      last_def = deficiency;
      if (stable >= opts.saturation_window) break;
    }
    if (chain.order() >= k_max) break;
    chain = extend_chain(chain);
  }

  rep.z = chain.z;
  rep.final_order = chain.order();
  rep.final_rank.rank = rep.per_order_rank.back();
  rep.final_rank.target = rep.per_order_target.back();
  rep.final_rank.method = opts.rank.method;
  rep.final_rank.trials = opts.rank.trials;
  rep.final_rank.seed = opts.rank.seed;
  rep.observable = rep.final_rank.full();
  rep.deficiency = rep.final_rank.target - rep.final_rank.rank;

  if (opts.partial) {
    if (rep.observable) {
      rep.state_observable.assign(chain.z.size(), true);
    } else {
      rep.state_observable = partial_observability(chain, opts.rank);
    }
  }
  std::size_t chain_start = first_higher_chain_index(chain);
  rep.practically_observable = true;
  for (std::size_t i = 0; i < rep.state_observable.size(); ++i) {
    if (!rep.state_observable[i] && i < chain_start) {
      rep.practically_observable = false;
      break;
    }
  }
  return rep;
}

ObservabilityReport analyze(const AugmentedModel& m, DerivativeDefinition d,
                            const AnalyzeOptions& opts) {
  LieChain chain = start_chain(m, d);
  return analyze_chain(chain, opts);
}

std::vector<SymbolId> ObservabilityReport::unobservable_states() const {
  std::vector<SymbolId> out;
  for (std::size_t i = 0; i < state_observable.size(); ++i) {
    if (!state_observable[i]) out.push_back(z[i]);
  }
  return out;
}

std::string ObservabilityReport::to_json() const {
  nlohmann::json j;
  j["definition"] = derivative_definition_name(definition);
  j["observable"] = observable;
  j["practically_observable"] = practically_observable;
  j["deficiency"] = deficiency;
  j["final_order"] = final_order;
  j["rank"] = final_rank.rank;
  j["target"] = final_rank.target;
  j["method"] = final_rank.method == RankMethod::Symbolic ? "symbolic" : "probabilistic";
  j["trials"] = final_rank.trials;
  j["seed"] = final_rank.seed;
  j["per_order_rank"] = per_order_rank;
  j["per_order_target"] = per_order_target;
  std::vector<std::string> names;
  for (SymbolId s : z) names.push_back(symbol_name(s));
  j["states"] = names;
  std::vector<std::string> unobs;
  for (SymbolId s : unobservable_states()) unobs.push_back(symbol_name(s));
  j["unobservable_states"] = unobs;
  std::vector<int> flags;
  for (bool b : state_observable) flags.push_back(b ? 1 : 0);
  j["state_observable"] = flags;
  return j.dump(2);
}

std::string ObservabilityReport::rank_csv() const {
  std::ostringstream out;
  out << "order,target_rank,rank\n";
  for (std::size_t i = 0; i < per_order_rank.size(); ++i) {
    out << i << ',' << per_order_target[i] << ',' << per_order_rank[i] << '\n';
  }
  return out.str();
}

LinearObservability linear_observability_matrix(const Eigen::MatrixXd& A,
                                                const Eigen::MatrixXd& C) {
  if (A.rows() != A.cols() || C.cols() != A.rows()) {
    throw DimensionMismatchError("observability matrix needs square A and conforming C");
  }
  const int n = static_cast<int>(A.rows());
  const int p = static_cast<int>(C.rows());
  LinearObservability out;
  out.matrix.resize(n * p, n);
  Eigen::MatrixXd block = C;
  for (int k = 0; k < n; ++k) {
    out.matrix.middleRows(k * p, p) = block;
    block = block * A;
  }
  out.rank = numeric_rank(out.matrix);
  return out;
}

}  // namespace obsym
