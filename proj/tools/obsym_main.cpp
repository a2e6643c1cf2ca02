#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "obsym/lie.hpp"
#include "obsym/observability.hpp"
#include "obsym/simulate.hpp"
#include "obsym/structural.hpp"
#include "obsym/symmetry.hpp"
#include "obsym/ukf.hpp"

namespace fs = std::filesystem;
using namespace obsym;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string provenance(const std::string& config_echo, std::uint64_t seed) {
  std::ostringstream out;
  out << "obsym " << kVersion << " seed=" << seed << " config_hash=" << std::hex
      << fnv1a(config_echo);
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ModelError("cannot write '" + path.string() + "'");
  out << content;
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<SymbolId> resolve_unknowns(const ModelDef& m, const std::string& unknowns_csv,
                                       const std::string& known_csv) {
  std::vector<SymbolId> unknowns;
  if (!unknowns_csv.empty() && unknowns_csv != "all") {
    for (const std::string& name : split_list(unknowns_csv)) {
      auto s = find_symbol(name);
      if (!s) throw ModelError("unknown parameter name '" + name + "'");
      unknowns.push_back(*s);
    }
    return unknowns;
  }
  unknowns = m.parameters;
  for (const std::string& name : split_list(known_csv)) {
    auto s = find_symbol(name);
    if (!s) throw UsageError("unknown parameter name '" + name + "'");
    unknowns.erase(std::remove(unknowns.begin(), unknowns.end(), *s), unknowns.end());
  }
  return unknowns;
}

InputMap load_inputs(const std::vector<std::string>& specs) {
  InputMap map;
  for (const std::string& spec : specs) {
    std::size_t eq = spec.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--input expects SYMBOL=path.csv[:channel], got '" + spec + "'");
    }
    std::string name = spec.substr(0, eq);
    std::string path = spec.substr(eq + 1);
    std::size_t colon = path.rfind(':');
    std::size_t channel = 0;
    if (colon != std::string::npos && colon > 1 && path.find('.') < colon) {
      channel = std::stoul(path.substr(colon + 1));
      path = path.substr(0, colon);
    }
    InputSignal sig;
    sig.series = load_series(path);
    sig.channel = channel;
    map.emplace(intern_symbol(name), std::move(sig));
  }
  return map;
}

struct CommonModelArgs {
  std::string model_path;
  std::string unknowns = "all";
  std::string known;
};

ModelDef load_model(const std::string& path) { return parse_model(read_file(path)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"observability / Lie-symmetry analysis and joint estimation for "
               "nonlinear structural models"};
  app.set_config("--config", "", "read options from an INI-style config file");
  app.require_subcommand(1);

  // ---- analyze ----
  auto* analyze_cmd = app.add_subcommand("analyze", "observability report for a model");
  CommonModelArgs an;
  std::string an_definition = "general";
  int an_kmax = -1;
  std::string an_method = "probabilistic";
  std::uint64_t an_seed = 0;
  int an_trials = 5;
  int an_window = 2;
  bool an_fail_unobs = false;
  std::string an_out = ".";
  analyze_cmd->add_option("--model", an.model_path, "model file")->required();
  analyze_cmd->add_option("--definition", an_definition,
                          "affine-noinput | affine-inputs | general");
  analyze_cmd->add_option("--kmax", an_kmax, "highest Lie-derivative order (-1: dim z)");
  analyze_cmd->add_option("--method", an_method, "probabilistic | symbolic");
  analyze_cmd->add_option("--seed", an_seed, "specialization seed");
  analyze_cmd->add_option("--trials", an_trials, "random specializations per rank");
  analyze_cmd->add_option("--saturation-window", an_window,
                          "stop after this many stagnant orders (0: never)");
  analyze_cmd->add_option("--unknowns", an.unknowns, "comma list of unknown parameters, or 'all'");
  analyze_cmd->add_option("--known", an.known, "parameters to pin at their constants value");
  analyze_cmd->add_flag("--fail-on-unobservable", an_fail_unobs,
                        "exit 2 when the verdict is unobservable");
  analyze_cmd->add_option("--out", an_out, "output directory");

  // ---- symmetries ----
  auto* sym_cmd = app.add_subcommand("symmetries", "infinitesimals, flows and scheme checks");
  CommonModelArgs sy;
  std::string sy_definition = "general";
  int sy_kmax = -1;
  std::uint64_t sy_seed = 0;
  int sy_flow_order = 6;
  std::vector<std::string> sy_measurements;
  std::string sy_transform;
  std::string sy_out = ".";
  sym_cmd->add_option("--model", sy.model_path, "model file")->required();
  sym_cmd->add_option("--definition", sy_definition, "affine-noinput | affine-inputs | general");
  sym_cmd->add_option("--kmax", sy_kmax, "chain order (-1: dim z)");
  sym_cmd->add_option("--seed", sy_seed, "specialization seed");
  sym_cmd->add_option("--flow-order", sy_flow_order, "truncation order of the flow series");
  sym_cmd->add_option("--unknowns", sy.unknowns, "comma list of unknown parameters, or 'all'");
  sym_cmd->add_option("--known", sy.known, "parameters to pin at their constants value");
  sym_cmd->add_option("--destroy-measurement", sy_measurements,
                      "candidate new output expression (repeatable)");
  sym_cmd->add_option("--destroy-transform", sy_transform,
                      "semicolon-separated coordinate transform expressions");
  sym_cmd->add_option("--out", sy_out, "output directory");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "integrate a model and synthesize measurements");
  std::string sim_model, sim_x0, sim_out = ".";
  std::vector<std::string> sim_inputs;
  double sim_dt = 0.01, sim_tend = 10.0, sim_noise = 0.0;
  int sim_substeps = 30;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--model", sim_model, "model file")->required();
  sim_cmd->add_option("--dt", sim_dt, "output/measurement step");
  sim_cmd->add_option("--t-end", sim_tend, "duration");
  sim_cmd->add_option("--substeps", sim_substeps, "integration substeps per dt");
  sim_cmd->add_option("--x0", sim_x0, "comma list of initial states (default zeros)");
  sim_cmd->add_option("--input", sim_inputs, "SYMBOL=path.csv[:channel] (repeatable)");
  sim_cmd->add_option("--noise", sim_noise, "measurement noise as a fraction of channel rms");
  sim_cmd->add_option("--seed", sim_seed, "noise seed");
  sim_cmd->add_option("--out", sim_out, "output directory");

  // ---- estimate ----
  auto* est_cmd = app.add_subcommand("estimate", "joint state/parameter estimation");
  std::string est_model, est_meas, est_alpha0, est_out = ".";
  CommonModelArgs es;
  std::vector<std::string> est_inputs;
  double est_kappa = std::numeric_limits<double>::quiet_NaN();
  double est_alpha_q = 1.0 / 30, est_alpha_r = 1.0 / 30;
  int est_substeps = 30;
  bool est_skip_gate = false;
  std::uint64_t est_seed = 0;
  est_cmd->add_option("--model", est_model, "model file")->required();
  est_cmd->add_option("--measurements", est_meas, "measured output series csv")->required();
  est_cmd->add_option("--input", est_inputs, "SYMBOL=path.csv[:channel] (repeatable)");
  est_cmd->add_option("--unknowns", es.unknowns, "comma list of unknown parameters, or 'all'");
  est_cmd->add_option("--known", es.known, "parameters to treat as known");
  est_cmd->add_option("--alpha0", est_alpha0,
                      "initial normalized coefficients, comma list (default ones)");
  est_cmd->add_option("--kappa", est_kappa, "sigma scaling (default 3 - N)");
  est_cmd->add_option("--alpha-q", est_alpha_q, "process-noise adaptation coefficient");
  est_cmd->add_option("--alpha-r", est_alpha_r, "measurement-noise adaptation coefficient");
  est_cmd->add_option("--substeps", est_substeps, "integration substeps per measurement");
  est_cmd->add_flag("--skip-observability-check", est_skip_gate,
                    "run even if the mapping is unobservable");
  est_cmd->add_option("--seed", est_seed, "seed recorded in outputs");
  est_cmd->add_option("--out", est_out, "output directory");

  // ---- benchmark ----
  auto* bench_cmd = app.add_subcommand("benchmark", "emit a built-in case as a model file");
  std::string bm_case, bm_sensors, bm_out = "benchmark.model";
  int bm_wind_floor = 1;
  double bm_alpha = 0.5;
  bench_cmd->add_option("--case", bm_case, "two-dof | isolated-inerter | top-floor-nes | viscous-wind")
      ->required();
  bench_cmd->add_option("--sensors", bm_sensors, "sensor layout, e.g. acc:2 or disp:4,5");
  bench_cmd->add_option("--wind-floor", bm_wind_floor, "floor the scalar wind load acts on");
  bench_cmd->add_option("--viscous-alpha", bm_alpha, "fractional damper exponent");
  bench_cmd->add_option("--out", bm_out, "output model file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*analyze_cmd) {
      ModelDef m = load_model(an.model_path);
      std::vector<SymbolId> unknowns = resolve_unknowns(m, an.unknowns, an.known);
      AugmentedModel am = augment_parameters(m, unknowns);
      AnalyzeOptions opts;
      opts.k_max = an_kmax;
      opts.saturation_window = an_window;
      opts.rank.seed = an_seed;
      opts.rank.trials = an_trials;
      opts.rank.method =
          an_method == "symbolic" ? RankMethod::Symbolic : RankMethod::Probabilistic;
      ObservabilityReport rep = analyze(am, derivative_definition_from_name(an_definition), opts);

      fs::create_directories(an_out);
      std::string echo = "analyze " + an.model_path + " def=" + an_definition +
                         " unknowns=" + an.unknowns + " known=" + an.known +
                         " kmax=" + std::to_string(an_kmax);
      write_file(fs::path(an_out) / "observability.json", rep.to_json());
      write_file(fs::path(an_out) / "rank_vs_order.csv",
                 "# " + provenance(echo, an_seed) + "\n" + rep.rank_csv());
      std::cout << rep.to_json() << std::endl;
      if (an_fail_unobs && !rep.observable) return 2;
      return 0;
    }

    if (*sym_cmd) {
      ModelDef m = load_model(sy.model_path);
      std::vector<SymbolId> unknowns = resolve_unknowns(m, sy.unknowns, sy.known);
      AugmentedModel am = augment_parameters(m, unknowns);
      int kmax = sy_kmax >= 0 ? sy_kmax : static_cast<int>(am.q.size());
      LieChain chain =
          build_chain(am, derivative_definition_from_name(sy_definition), kmax);
      SymmetryOptions so;
      so.rank.seed = sy_seed;
      InfinitesimalBasis basis = infinitesimal_basis(chain, so);

      nlohmann::json j;
      j["definition"] = sy_definition;
      j["order"] = chain.order();
      j["r"] = basis.r;
      j["symbolic"] = basis.symbolic;
      std::vector<std::string> znames;
      for (SymbolId s : chain.z) znames.push_back(symbol_name(s));
      j["states"] = znames;
      if (basis.symbolic) {
        for (const auto& vec : basis.vectors) {
          std::vector<std::string> entries;
          for (const Expr& e : vec) entries.push_back(to_string(e));
          j["infinitesimals"].push_back(entries);
        }
        for (const auto& vec : basis.vectors) {
          SymmetryFlow flow = lie_series_flow(vec, chain.z, sy_flow_order);
          nlohmann::json jf;
          jf["exact_termination"] = flow.exact_termination;
          for (const auto& coeffs : flow.coefficients) {
            std::vector<std::string> row;
            for (const Expr& e : coeffs) row.push_back(to_string(e));
            jf["coefficients"].push_back(row);
          }
          j["flows"].push_back(jf);
        }
      } else {
        for (const auto& p : basis.nonzero_pattern) {
          std::vector<std::string> acted;
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i]) acted.push_back(znames[i]);
          }
          j["numeric_patterns"].push_back(acted);
        }
      }
      for (const std::string& htext : sy_measurements) {
        Expr h = parse_expression(htext);
        auto destroyed = destroys_by_measurement(basis, h);
        nlohmann::json jm;
        jm["measurement"] = htext;
        jm["destroys"] = destroyed;
        if (basis.symbolic) {
          std::vector<std::string> cs;
          for (const Expr& c : measurement_contractions(basis, h)) cs.push_back(to_string(c));
          jm["contractions"] = cs;
        }
        j["measurement_checks"].push_back(jm);
      }
      if (!sy_transform.empty()) {
        std::vector<Expr> T;
        for (const std::string& part : split_list(sy_transform, ';')) {
          T.push_back(parse_expression(part));
        }
        auto destroyed = destroys_by_transformation(basis, T);
        j["transform_check"]["destroys"] = destroyed;
      }
      fs::create_directories(sy_out);
      write_file(fs::path(sy_out) / "symmetries.json", j.dump(2));
      std::cout << j.dump(2) << std::endl;
      return 0;
    }

    if (*sim_cmd) {
      ModelDef m = load_model(sim_model);
      InputMap inputs = load_inputs(sim_inputs);
      std::vector<double> x0(m.states.size(), 0.0);
      if (!sim_x0.empty()) {
        auto cells = split_list(sim_x0);
        if (cells.size() != x0.size()) {
          throw UsageError("--x0 needs " + std::to_string(x0.size()) + " values");
        }
        for (std::size_t i = 0; i < cells.size(); ++i) x0[i] = std::stod(cells[i]);
      }
      Trajectory traj =
          integrate(m, m.constants_binding(), inputs, x0, sim_dt, sim_tend, sim_substeps);
      TimeSeries meas = synthesize_measurements(traj, sim_dt, sim_noise, sim_seed);
      meas.channel_names = m.output_names;

      std::string echo = "simulate " + sim_model + " dt=" + std::to_string(sim_dt) +
                         " t_end=" + std::to_string(sim_tend) +
                         " noise=" + std::to_string(sim_noise);
      fs::create_directories(sim_out);
      store_trajectory(traj, m, (fs::path(sim_out) / "trajectory.csv").string(),
                       provenance(echo, sim_seed));
      store_series(meas, (fs::path(sim_out) / "measurements.csv").string(),
                   provenance(echo, sim_seed));
      std::cout << "wrote " << (fs::path(sim_out) / "trajectory.csv").string() << " and "
                << (fs::path(sim_out) / "measurements.csv").string() << std::endl;
      return 0;
    }

    if (*est_cmd) {
      ModelDef m = load_model(est_model);
      InputMap inputs = load_inputs(est_inputs);
      TimeSeries meas = load_series(est_meas);
      EstimationOptions opts;
      opts.unknowns = resolve_unknowns(m, es.unknowns, es.known);
      opts.skip_observability_check = est_skip_gate;
      opts.ukf.kappa = est_kappa;
      opts.ukf.alpha_q = est_alpha_q;
      opts.ukf.alpha_r = est_alpha_r;
      opts.ukf.substeps = est_substeps;
      if (!est_alpha0.empty()) {
        auto cells = split_list(est_alpha0);
        if (cells.size() != opts.unknowns.size()) {
          throw UsageError("--alpha0 needs " + std::to_string(opts.unknowns.size()) + " values");
        }
        opts.alpha0.resize(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) opts.alpha0(i) = std::stod(cells[i]);
      }
      EstimationRecord rec = run_joint_estimation(m, meas, inputs, opts);

      std::string echo = "estimate " + est_model + " meas=" + est_meas +
                         " unknowns=" + es.unknowns;
      fs::create_directories(est_out);
      write_file(fs::path(est_out) / "estimation.csv", rec.to_csv(provenance(echo, est_seed)));
      write_file(fs::path(est_out) / "summary.json", rec.summary_json());

      // device force-displacement reconstruction from aux expressions
      if (!m.aux.empty()) {
        TimeSeries states = rec.states_series(meas.dt);
        std::ostringstream dev;
        dev << "# " << provenance(echo, est_seed) << "\nt";
        for (const std::string& n : m.aux_names) dev << ',' << n;
        dev << '\n';
        Binding base = m.constants_binding();
        for (std::size_t i = 0; i < opts.unknowns.size(); ++i) {
          double eta0 = *base.get(opts.unknowns[i]);
          base.set(opts.unknowns[i], rec.final_alpha(i) * eta0);
        }
        for (std::size_t step = 0; step < states.size(); ++step) {
          Binding b = base;
          for (std::size_t s = 0; s < m.states.size(); ++s) {
            b.set(m.states[s], states.values[step][s]);
          }
          dev << states.t0 + states.dt * step;
          for (const Expr& e : m.aux) dev << ',' << evaluate(e, b);
          dev << '\n';
        }
        write_file(fs::path(est_out) / "devices.csv", dev.str());
      }
      std::cout << rec.summary_json() << std::endl;
      return 0;
    }

    if (*bench_cmd) {
      BenchmarkCase kase = benchmark_case_from_name(bm_case);
      std::unordered_map<std::string, std::string> kv;
      kv["case"] = bm_case;
      if (!bm_sensors.empty()) kv["sensors"] = bm_sensors;
      kv["wind_floor"] = std::to_string(bm_wind_floor);
      kv["viscous_alpha"] = std::to_string(bm_alpha);
      ModelDef m = build_benchmark_from_config(kv);
      (void)kase;
      write_file(bm_out, serialize_model(m));
      std::cout << "wrote " << bm_out << std::endl;
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const ObservabilityRefusedError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const ExprError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
  return 0;
}
