#include "obsym/lie.hpp"

#include <algorithm>
#include <cassert>

namespace obsym {

const char* derivative_definition_name(DerivativeDefinition d) {
  switch (d) {
    case DerivativeDefinition::AffineNoInput:
      return "affine-noinput";
    case DerivativeDefinition::AffineWithInputs:
      return "affine-inputs";
    case DerivativeDefinition::GeneralExtended:
      return "general";
  }
  return "?";
}

DerivativeDefinition derivative_definition_from_name(const std::string& name) {
  if (name == "affine-noinput") return DerivativeDefinition::AffineNoInput;
  if (name == "affine-inputs") return DerivativeDefinition::AffineWithInputs;
  if (name == "general") return DerivativeDefinition::GeneralExtended;
  throw ModelError("unknown derivative definition '" + name +
                   "' (expected affine-noinput, affine-inputs or general)");
}

std::size_t LieChain::total_rows() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.omega.size();
  return n;
}

std::vector<Expr> lie_derivative_along(std::span<const Expr> omega, std::span<const Expr> field,
                                       std::span<const SymbolId> z) {
  if (field.size() != z.size()) {
    throw DimensionMismatchError("field has " + std::to_string(field.size()) +
                                 " entries for " + std::to_string(z.size()) + " state symbols");
  }
  std::vector<Expr> out;
  out.reserve(omega.size());
  for (const Expr& w : omega) {
    std::vector<Expr> terms;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (field[i].is_zero() || !w.may_depend_on(z[i])) continue;
      Expr d = differentiate(w, z[i]);
      if (d.is_zero()) continue;
      terms.push_back(d * field[i]);
    }
    out.push_back(Expr::sum(terms));
  }
  return out;
}

namespace {

// Keeps entries whose Jacobian row can contribute rank: constants carry a
// zero row, and entries already present anywhere in the chain repeat an
// existing row.
std::vector<Expr> prune_entries(LieChain& c, std::vector<Expr> entries) {
  std::vector<Expr> out;
  for (const Expr& e : entries) {
    if (e.is_constant()) {
      ++c.pruned_entries;
      continue;
    }
    auto [it, inserted] = c.seen_entries.emplace(e.id(), true);
    if (!inserted) {
      ++c.pruned_entries;
      continue;
    }
    out.push_back(e);
  }
  return out;
}

std::vector<std::vector<Expr>> jacobian_of(std::span<const Expr> rows,
                                           std::span<const SymbolId> z) {
  std::vector<std::vector<Expr>> out;
  out.reserve(rows.size());
  for (const Expr& r : rows) {
    std::vector<Expr> jrow;
    jrow.reserve(z.size());
    for (SymbolId s : z) jrow.push_back(differentiate(r, s));
    out.push_back(std::move(jrow));
  }
  return out;
}

void push_block(LieChain& c, std::vector<Expr> omega) {
  LieChain::Block b;
  b.omega = prune_entries(c, std::move(omega));
  b.jacobian = jacobian_of(b.omega, c.z);
  b.z_width = c.z.size();
  c.blocks.push_back(std::move(b));
}

bool outputs_input_free(const AugmentedModel& m) {
  std::vector<SymbolId> inputs = m.measured_inputs;
  for (SymbolId w : m.free_unmeasured) inputs.push_back(w);
  for (SymbolId t : m.chain_terminators) inputs.push_back(t);
  for (const Expr& h : m.outputs) {
    auto fv = h.free_variables();
    for (SymbolId s : inputs) {
      if (std::binary_search(fv.begin(), fv.end(), s)) return false;
    }
  }
  return true;
}

LieChain start_affine_no_input(const AugmentedModel& m) {
  if (!m.free_unmeasured.empty() || !m.chain_terminators.empty()) {
    throw DefinitionNotApplicableError(
        "affine-noinput requires a model without unmeasured inputs");
  }
  if (!outputs_input_free(m)) {
    throw DefinitionNotApplicableError("affine-noinput requires input-free outputs");
  }
  AffineDecomposition d = decompose_affine(m);

  LieChain c;
  c.definition = DerivativeDefinition::AffineNoInput;
  c.model = m;
  c.z = m.q;
  c.drift = d.f_a;
  c.g_u_fields = d.g_u;
  push_block(c, m.outputs);
  return c;
}

LieChain start_affine_with_inputs(const AugmentedModel& m) {
  if (m.input_chain_order >= 0) {
    throw DefinitionNotApplicableError(
        "affine-inputs manages its own input-derivative ladder; pass the unchained model");
  }
  AffineDecomposition d = decompose_affine(m);  // throws NotAffineInInputs if unusable

  LieChain c;
  c.definition = DerivativeDefinition::AffineWithInputs;
  c.model = m;
  c.z = m.q;
  for (SymbolId w : m.free_unmeasured) c.z.push_back(w);  // w^(0)

  // drift over z at level 0: [f_a + sum g_wj w_j ; 0_Nw] — the top chain row
  // is filled with the next derivative symbol on every extension
  c.drift.reserve(c.z.size());
  const std::size_t nq = m.q.size();
  for (std::size_t i = 0; i < nq; ++i) {
    Expr row = d.f_a[i];
    for (std::size_t j = 0; j < m.free_unmeasured.size(); ++j) {
      row = row + d.g_w[j][i] * Expr::variable(m.free_unmeasured[j]);
    }
    c.drift.push_back(row);
  }
  for (std::size_t j = 0; j < m.free_unmeasured.size(); ++j) c.drift.push_back(Expr());

  for (std::size_t j = 0; j < d.g_u.size(); ++j) {
    std::vector<Expr> field = d.g_u[j];
    field.resize(c.z.size(), Expr());
    c.g_u_fields.push_back(std::move(field));
  }
  c.g_w_columns = d.g_w;

  // Omega_0 = [h_0 + sum h_wj w_j ; h_u1 ; ... ]
  std::vector<Expr> omega0;
  for (std::size_t i = 0; i < m.outputs.size(); ++i) {
    Expr row = d.h_0[i];
    for (std::size_t j = 0; j < m.free_unmeasured.size(); ++j) {
      row = row + d.h_w[j][i] * Expr::variable(m.free_unmeasured[j]);
    }
    omega0.push_back(row);
  }
  for (std::size_t j = 0; j < d.h_u.size(); ++j) {
    for (const Expr& e : d.h_u[j]) omega0.push_back(e);
  }
  push_block(c, std::move(omega0));
  return c;
}

LieChain start_general(const AugmentedModel& m) {
  if (m.input_chain_order >= 0) {
    throw DefinitionNotApplicableError(
        "general definition manages its own input-derivative ladder; pass the unchained model");
  }
  LieChain c;
  c.definition = DerivativeDefinition::GeneralExtended;
  c.model = m;
  c.z = m.q;
  for (SymbolId w : m.free_unmeasured) c.z.push_back(w);

  for (std::size_t i = 0; i < m.q.size(); ++i) c.rates.emplace(m.q[i], m.dynamics[i]);
  push_block(c, m.outputs);
  return c;
}

// Total time derivative under c.rates; unseen symbols get derivative-chain
// rates minted on demand (measured-input derivatives as free symbols).
Expr total_derivative(LieChain& c, const Expr& e) {
  std::vector<Expr> terms;
  for (SymbolId s : e.free_variables()) {
    auto it = c.rates.find(s);
    if (it == c.rates.end()) continue;  // rate 0 (constants pinned elsewhere)
    if (it->second.is_zero()) continue;
    Expr d = differentiate(e, s);
    if (d.is_zero()) continue;
    terms.push_back(d * it->second);
  }
  return Expr::sum(terms);
}

void seed_rate_chain(LieChain& c, SymbolId base, int level) {
  SymbolId from = derived_input_symbol(base, level);
  SymbolId to = derived_input_symbol(base, level + 1);
  c.rates.emplace(from, Expr::variable(to));
}

}  // namespace

LieChain start_chain(const AugmentedModel& m, DerivativeDefinition d) {
  switch (d) {
    case DerivativeDefinition::AffineNoInput:
      return start_affine_no_input(m);
    case DerivativeDefinition::AffineWithInputs:
      return start_affine_with_inputs(m);
    case DerivativeDefinition::GeneralExtended:
      return start_general(m);
  }
  throw DefinitionNotApplicableError("unknown definition");
}

LieChain extend_chain(const LieChain& prev) {
  LieChain c = prev;
  const int n = c.order() + 1;
  const auto& m = c.model;
  const std::size_t nw = m.free_unmeasured.size();
  const std::vector<Expr>& prev_omega = c.blocks.back().omega;
  // Lie derivatives are taken with respect to the z the previous block was
  // built over.
  std::vector<SymbolId> prev_z(c.z.begin(), c.z.begin() + c.blocks.back().z_width);

  switch (c.definition) {
    case DerivativeDefinition::AffineNoInput: {
      std::vector<Expr> omega = lie_derivative_along(prev_omega, c.drift, prev_z);
      for (const auto& g : c.g_u_fields) {
        auto branch = lie_derivative_along(prev_omega, g, prev_z);
        omega.insert(omega.end(), branch.begin(), branch.end());
      }
      push_block(c, std::move(omega));
      return c;
    }
    case DerivativeDefinition::AffineWithInputs: {
      // fill the top chain rows with the order-n derivative symbols
      std::vector<Expr> drift = c.drift;
      const std::size_t nq = m.q.size();
      for (std::size_t j = 0; j < nw; ++j) {
        drift[drift.size() - nw + j] =
            Expr::variable(derived_input_symbol(m.free_unmeasured[j], n));
      }
      std::vector<Expr> omega = lie_derivative_along(prev_omega, drift, prev_z);
      for (const auto& g : c.g_u_fields) {
        auto branch = lie_derivative_along(prev_omega, g, prev_z);
        omega.insert(omega.end(), branch.begin(), branch.end());
      }
      // grow z by w^(n) and extend the engine fields
      for (std::size_t j = 0; j < nw; ++j) {
        c.z.push_back(derived_input_symbol(m.free_unmeasured[j], n));
      }
      c.drift = drift;
      // previous chain rows now walk one level further; rebuild the ladder:
      // rows q stay, chain row for w^(i) is w^(i+1) for i < n, top row blank
      c.drift.resize(nq);
      for (int level = 0; level < n; ++level) {
        for (std::size_t j = 0; j < nw; ++j) {
          c.drift.push_back(Expr::variable(derived_input_symbol(m.free_unmeasured[j], level + 1)));
        }
      }
      for (std::size_t j = 0; j < nw; ++j) c.drift.push_back(Expr());
      for (auto& g : c.g_u_fields) g.resize(c.z.size(), Expr());
      push_block(c, std::move(omega));
      return c;
    }
    case DerivativeDefinition::GeneralExtended: {
      if (nw > 0) {
        for (std::size_t j = 0; j < nw; ++j) seed_rate_chain(c, m.free_unmeasured[j], n - 1);
      }
      for (SymbolId u : m.measured_inputs) {
        seed_rate_chain(c, u, n - 1);
        c.u_rate_symbols.push_back(derived_input_symbol(u, n));
      }
      std::vector<Expr> omega;
      omega.reserve(prev_omega.size());
      for (const Expr& e : prev_omega) omega.push_back(total_derivative(c, e));
      if (nw > 0) {
        for (std::size_t j = 0; j < nw; ++j) {
          c.z.push_back(derived_input_symbol(m.free_unmeasured[j], n));
        }
      }
      push_block(c, std::move(omega));
      return c;
    }
  }
  return c;
}

LieChain build_chain(const AugmentedModel& m, DerivativeDefinition d, int k_max) {
  LieChain c = start_chain(m, d);
  for (int i = 0; i < k_max; ++i) c = extend_chain(c);
  return c;
}

std::vector<std::vector<Expr>> stacked_jacobian(const LieChain& c) {
  std::vector<std::vector<Expr>> out;
  out.reserve(c.total_rows());
  for (const auto& b : c.blocks) {
    for (const auto& row : b.jacobian) {
      std::vector<Expr> padded = row;
      padded.resize(c.z.size(), Expr());
      out.push_back(std::move(padded));
    }
  }
  return out;
}

std::size_t first_higher_chain_index(const LieChain& c) {
  const std::size_t nq = c.model.q.size();
  const std::size_t nw = c.model.free_unmeasured.size();
  if (c.definition == DerivativeDefinition::AffineNoInput || nw == 0) return c.z.size();
  return std::min(c.z.size(), nq + nw);
}

}  // namespace obsym
