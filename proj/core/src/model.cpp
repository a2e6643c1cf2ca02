#include "obsym/model.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <sstream>

#include "obsym/poly.hpp"
#include "obsym/structural.hpp"

namespace obsym {

namespace {

bool contains(const std::vector<SymbolId>& v, SymbolId s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

Binding ModelDef::constants_binding() const {
  Binding b;
  for (const auto& [s, r] : constants) b.set(s, static_cast<double>(r));
  return b;
}

bool ModelDef::is_state(SymbolId s) const { return contains(states, s); }

void ModelDef::validate() const {
  if (dynamics.size() != states.size()) {
    throw ArityMismatchError("model has " + std::to_string(states.size()) + " states but " +
                             std::to_string(dynamics.size()) + " dynamics rows");
  }
  if (outputs.empty()) throw ModelError("model declares no outputs");
  std::set<SymbolId> seen;
  auto declare = [&seen](const std::vector<SymbolId>& group) {
    for (SymbolId s : group) {
      if (!seen.insert(s).second) throw DuplicateSymbolError(symbol_name(s));
    }
  };
  declare(states);
  declare(parameters);
  declare(measured_inputs);
  declare(unmeasured_inputs);
  for (const auto& [s, r] : constants) {
    // constants may give values for parameters; stand-alone constants are
    // implicitly declared here
    seen.insert(s);
  }
  auto check_expr = [&seen](const Expr& e, const std::string& where) {
    for (SymbolId s : e.free_variables()) {
      if (!seen.count(s)) throw UndeclaredSymbolError(symbol_name(s), where);
    }
  };
  for (std::size_t i = 0; i < dynamics.size(); ++i) {
    check_expr(dynamics[i], "dynamics of " + symbol_name(states[i]));
  }
  for (std::size_t i = 0; i < outputs.size(); ++i) check_expr(outputs[i], "output " + output_names[i]);
  for (std::size_t i = 0; i < aux.size(); ++i) check_expr(aux[i], "aux " + aux_names[i]);
}

// -- model file parsing ----------------------------------------------------------

namespace {

struct Line {
  int number;
  std::string text;
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

}  // namespace

ModelDef parse_model(const std::string& text) {
  std::unordered_map<std::string, std::vector<Line>> sections;
  std::vector<std::string> section_order;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw SyntaxError("unterminated section header", lineno, 1);
      current = trim(line.substr(1, line.size() - 2));
      if (!sections.count(current)) section_order.push_back(current);
      sections[current];  // materialize
      continue;
    }
    if (current.empty()) throw SyntaxError("content before any section header", lineno, 1);
    sections[current].push_back({lineno, line});
  }

  if (sections.count("benchmark")) {
    for (const auto& s : section_order) {
      if (s != "benchmark") {
        throw ModelError("[benchmark] section cannot be combined with section [" + s + "]");
      }
    }
    std::unordered_map<std::string, std::string> kv;
    for (const Line& l : sections["benchmark"]) {
      std::size_t eq = l.text.find('=');
      if (eq == std::string::npos) throw SyntaxError("expected key = value", l.number, 1);
      kv[trim(l.text.substr(0, eq))] = trim(l.text.substr(eq + 1));
    }
    return build_benchmark_from_config(kv);
  }

  static const char* known[] = {"states",    "params",  "inputs_measured", "inputs_unmeasured",
                                "constants", "dynamics", "outputs",         "aux"};
  for (const auto& s : section_order) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return s == k; }) == std::end(known)) {
      throw ModelError("unknown section [" + s + "]");
    }
  }

  ModelDef m;
  auto read_symbols = [&](const char* section, std::vector<SymbolId>& out) {
    for (const Line& l : sections[section]) {
      if (!valid_identifier(l.text)) {
        throw SyntaxError("expected one identifier per line in [" + std::string(section) + "]",
                          l.number, 1);
      }
      out.push_back(intern_symbol(l.text));
    }
  };
  read_symbols("states", m.states);
  read_symbols("params", m.parameters);
  read_symbols("inputs_measured", m.measured_inputs);
  read_symbols("inputs_unmeasured", m.unmeasured_inputs);

  for (const Line& l : sections["constants"]) {
    std::size_t eq = l.text.find('=');
    if (eq == std::string::npos) throw SyntaxError("expected name = value", l.number, 1);
    std::string name = trim(l.text.substr(0, eq));
    if (!valid_identifier(name)) throw SyntaxError("bad constant name '" + name + "'", l.number, 1);
    Expr v = parse_expression(l.text.substr(eq + 1), l.number);
    if (!v.is_constant()) throw SyntaxError("constant value must be numeric", l.number, 1);
    SymbolId s = intern_symbol(name);
    if (m.constants.count(s)) throw DuplicateSymbolError(name);
    m.constants.emplace(s, v.constant_value());
  }

  auto read_equations = [&](const char* section, std::vector<std::string>& names,
                            std::vector<Expr>& exprs) {
    for (const Line& l : sections[section]) {
      std::size_t eq = l.text.find('=');
      if (eq == std::string::npos) throw SyntaxError("expected name = expression", l.number, 1);
      std::string name = trim(l.text.substr(0, eq));
      if (!valid_identifier(name)) throw SyntaxError("bad name '" + name + "'", l.number, 1);
      names.push_back(name);
      exprs.push_back(parse_expression(l.text.substr(eq + 1), l.number));
    }
  };

  // dynamics rows are keyed by state name; order follows the state list
  {
    std::vector<std::string> names;
    std::vector<Expr> exprs;
    read_equations("dynamics", names, exprs);
    std::unordered_map<std::string, Expr> by_name;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (by_name.count(names[i])) throw DuplicateSymbolError(names[i]);
      by_name.emplace(names[i], exprs[i]);
    }
    for (SymbolId s : m.states) {
      auto it = by_name.find(symbol_name(s));
      if (it == by_name.end()) {
        throw ArityMismatchError("no dynamics row for state '" + symbol_name(s) + "'");
      }
      m.dynamics.push_back(it->second);
      by_name.erase(it);
    }
    if (!by_name.empty()) {
      throw ArityMismatchError("dynamics row for non-state '" + by_name.begin()->first + "'");
    }
  }

  read_equations("outputs", m.output_names, m.outputs);
  read_equations("aux", m.aux_names, m.aux);

  m.validate();
  return m;
}

std::string serialize_model(const ModelDef& m) {
  std::ostringstream out;
  auto symbols = [&](const char* name, const std::vector<SymbolId>& v) {
    if (v.empty()) return;
    out << '[' << name << "]\n";
    for (SymbolId s : v) out << symbol_name(s) << '\n';
  };
  symbols("states", m.states);
  symbols("params", m.parameters);
  symbols("inputs_measured", m.measured_inputs);
  symbols("inputs_unmeasured", m.unmeasured_inputs);
  if (!m.constants.empty()) {
    out << "[constants]\n";
    // deterministic order: by name
    std::vector<SymbolId> keys;
    for (const auto& [s, r] : m.constants) keys.push_back(s);
    std::sort(keys.begin(), keys.end(),
              [](SymbolId a, SymbolId b) { return symbol_name(a) < symbol_name(b); });
    for (SymbolId s : keys) {
      const Rational& r = m.constants.at(s);
      out << symbol_name(s) << " = " << numerator(r).str();
      if (denominator(r) != 1) out << '/' << denominator(r).str();
      out << '\n';
    }
  }
  out << "[dynamics]\n";
  for (std::size_t i = 0; i < m.states.size(); ++i) {
    out << symbol_name(m.states[i]) << " = " << to_string(m.dynamics[i]) << '\n';
  }
  out << "[outputs]\n";
  for (std::size_t i = 0; i < m.outputs.size(); ++i) {
    out << m.output_names[i] << " = " << to_string(m.outputs[i]) << '\n';
  }
  if (!m.aux.empty()) {
    out << "[aux]\n";
    for (std::size_t i = 0; i < m.aux.size(); ++i) {
      out << m.aux_names[i] << " = " << to_string(m.aux[i]) << '\n';
    }
  }
  return out.str();
}

// -- augmentation ------------------------------------------------------------------

SymbolId derived_input_symbol(SymbolId base, int k) {
  if (k == 0) return base;
  return intern_symbol(symbol_name(base) + "__d" + std::to_string(k));
}

std::string derived_input_display(SymbolId base, int k) {
  if (k == 0) return symbol_name(base);
  return symbol_name(base) + "^(" + std::to_string(k) + ")";
}

AugmentedModel augment_parameters(const ModelDef& m, const std::vector<SymbolId>& unknowns) {
  m.validate();
  for (SymbolId u : unknowns) {
    if (std::find(m.parameters.begin(), m.parameters.end(), u) == m.parameters.end()) {
      throw ModelError("unknown-parameter '" + symbol_name(u) +
                       "' is not a declared parameter");
    }
  }
  std::unordered_map<SymbolId, Expr> known;
  for (SymbolId p : m.parameters) {
    if (std::find(unknowns.begin(), unknowns.end(), p) != unknowns.end()) continue;
    auto it = m.constants.find(p);
    if (it == m.constants.end()) throw MissingConstantError(symbol_name(p));
    known.emplace(p, Expr::constant(it->second));
  }

  AugmentedModel am;
  am.base = m;
  am.q = m.states;
  // keep declaration order for the unknown block
  for (SymbolId p : m.parameters) {
    if (std::find(unknowns.begin(), unknowns.end(), p) != unknowns.end()) {
      am.q.push_back(p);
      am.unknown_parameters.push_back(p);
    }
  }
  for (const Expr& f : m.dynamics) am.dynamics.push_back(substitute(f, known));
  for (std::size_t i = 0; i < am.unknown_parameters.size(); ++i) am.dynamics.push_back(Expr());
  for (const Expr& h : m.outputs) am.outputs.push_back(substitute(h, known));
  for (const Expr& a : m.aux) am.aux.push_back(substitute(a, known));
  am.measured_inputs = m.measured_inputs;
  am.free_unmeasured = m.unmeasured_inputs;
  return am;
}

AugmentedModel augment_unmeasured_inputs(const AugmentedModel& m, int order) {
  if (m.free_unmeasured.empty()) throw NoUnmeasuredInputsError();
  if (m.input_chain_order >= 0) throw ModelError("model already carries an input chain");
  if (order < 0) throw ModelError("chain order must be >= 0");

  AugmentedModel am = m;
  am.input_chain_order = order;
  am.free_unmeasured.clear();
  am.chain_terminators.clear();
  // level-major: [w_1 .. w_Nw, w_1^(1) .. w_Nw^(1), ...]
  for (int level = 0; level <= order; ++level) {
    for (SymbolId w : m.free_unmeasured) {
      am.q.push_back(derived_input_symbol(w, level));
      am.dynamics.push_back(Expr::variable(derived_input_symbol(w, level + 1)));
    }
  }
  for (SymbolId w : m.free_unmeasured) {
    am.chain_terminators.push_back(derived_input_symbol(w, order + 1));
  }
  return am;
}

ModelDef AugmentedModel::as_model() const {
  ModelDef m;
  m.states = q;
  m.measured_inputs = measured_inputs;
  m.unmeasured_inputs = free_unmeasured;
  for (SymbolId t : chain_terminators) m.unmeasured_inputs.push_back(t);
  m.constants = base.constants;
  m.dynamics = dynamics;
  m.outputs = outputs;
  m.output_names = base.output_names;
  m.aux = aux;
  m.aux_names = base.aux_names;
  while (m.output_names.size() < m.outputs.size()) {
    m.output_names.push_back("y" + std::to_string(m.output_names.size()));
  }
  return m;
}

// -- affine decomposition ------------------------------------------------------------

namespace {

// True when e is structurally free of every symbol in `syms`, with an exact
// polynomial-cancellation fallback when the cheap check fires.
bool free_of(const Expr& e, const std::vector<SymbolId>& syms, Expr* reduced_out) {
  std::vector<SymbolId> fv = e.free_variables();
  bool clean = true;
  for (SymbolId s : syms) {
    if (std::binary_search(fv.begin(), fv.end(), s)) {
      clean = false;
      break;
    }
  }
  if (clean) {
    if (reduced_out) *reduced_out = e;
    return true;
  }
  Expr r = simplify(e, {.cancel_quotients = true});
  fv = r.free_variables();
  for (SymbolId s : syms) {
    if (std::binary_search(fv.begin(), fv.end(), s)) return false;
  }
  if (reduced_out) *reduced_out = r;
  return true;
}

}  // namespace

AffineDecomposition decompose_affine(const AugmentedModel& m) {
  std::vector<SymbolId> inputs = m.measured_inputs;
  for (SymbolId w : m.free_unmeasured) inputs.push_back(w);
  for (SymbolId t : m.chain_terminators) inputs.push_back(t);

  std::unordered_map<SymbolId, Expr> zero_inputs;
  for (SymbolId s : inputs) zero_inputs.emplace(s, Expr());

  auto decompose_rows = [&](const std::vector<Expr>& rows, std::vector<Expr>& base,
                            std::vector<std::vector<Expr>>& u_cols,
                            std::vector<std::vector<Expr>>& w_cols,
                            std::vector<std::vector<Expr>>& t_cols, const char* what) {
    u_cols.assign(m.measured_inputs.size(), {});
    w_cols.assign(m.free_unmeasured.size(), {});
    t_cols.assign(m.chain_terminators.size(), {});
    for (const Expr& row : rows) {
      auto column = [&](SymbolId s) {
        Expr g = differentiate(row, s);
        Expr reduced;
        if (!free_of(g, inputs, &reduced)) {
          throw NotAffineInInputsError(std::string(what) + " row '" + to_string(row) +
                                           "' is nonlinear in input '" + symbol_name(s) + "'",
                                       row);
        }
        return reduced;
      };
      for (std::size_t j = 0; j < m.measured_inputs.size(); ++j) {
        u_cols[j].push_back(column(m.measured_inputs[j]));
      }
      for (std::size_t j = 0; j < m.free_unmeasured.size(); ++j) {
        w_cols[j].push_back(column(m.free_unmeasured[j]));
      }
      for (std::size_t j = 0; j < m.chain_terminators.size(); ++j) {
        t_cols[j].push_back(column(m.chain_terminators[j]));
      }
      Expr f0 = substitute(row, zero_inputs);
      base.push_back(f0);
    }
  };

  AffineDecomposition d;
  std::vector<std::vector<Expr>> dyn_t;
  decompose_rows(m.dynamics, d.f_a, d.g_u, d.g_w, dyn_t, "dynamics");
  d.selectors = std::move(dyn_t);
  std::vector<std::vector<Expr>> out_t;
  decompose_rows(m.outputs, d.h_0, d.h_u, d.h_w, out_t, "output");
  for (const auto& col : out_t) {
    for (const Expr& e : col) {
      if (!e.is_zero()) {
        throw NotAffineInInputsError("output depends on a chain terminator", e);
      }
    }
  }
  return d;
}

}  // namespace obsym
