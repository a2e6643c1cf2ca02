#include "obsym/structural.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace obsym {

namespace {

// Prefer the short decimal form when it reproduces the double exactly: it
// keeps coefficients small for the exact-arithmetic paths. Falls back to the
// exact binary expansion.
Rational rat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  try {
    Expr e = parse_expression(buf);
    if (e.is_constant()) {
      const Rational& r = e.constant_value();
      if (static_cast<double>(r) == v) return r;
    }
  } catch (const ExprError&) {
  }
  return Rational(v);
}

Expr num(double v) { return Expr::constant(rat(v)); }

Expr sym(const std::string& name) { return Expr::symbol(name); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

BenchmarkCase benchmark_case_from_name(const std::string& name) {
  if (name == "two-dof") return BenchmarkCase::TwoDofExample;
  if (name == "isolated-inerter") return BenchmarkCase::IsolatedInerter;
  if (name == "top-floor-nes") return BenchmarkCase::TopFloorNes;
  if (name == "viscous-wind") return BenchmarkCase::ViscousWind;
  throw ModelError("unknown benchmark case '" + name +
                   "' (expected two-dof, isolated-inerter, top-floor-nes or viscous-wind)");
}

std::string benchmark_case_name(BenchmarkCase c) {
  switch (c) {
    case BenchmarkCase::TwoDofExample:
      return "two-dof";
    case BenchmarkCase::IsolatedInerter:
      return "isolated-inerter";
    case BenchmarkCase::TopFloorNes:
      return "top-floor-nes";
    case BenchmarkCase::ViscousWind:
      return "viscous-wind";
  }
  return "?";
}

SensorLayout SensorLayout::parse(const std::string& descriptor, int floor_min, int floor_max) {
  SensorLayout layout;
  for (const std::string& part : split(descriptor, '+')) {
    if (part.empty()) continue;
    std::size_t colon = part.find(':');
    if (colon == std::string::npos) throw ModelError("bad sensor entry '" + part + "'");
    std::string kind = part.substr(0, colon);
    std::string floors = part.substr(colon + 1);
    SensorKind k;
    if (kind == "acc") {
      k = SensorKind::Accelerometer;
    } else if (kind == "disp") {
      k = SensorKind::Displacement;
    } else {
      throw ModelError("unknown sensor kind '" + kind + "' (expected acc or disp)");
    }
    if (floors == "all") {
      for (int f = floor_min; f <= floor_max; ++f) layout.sensors.push_back({k, f});
    } else {
      for (const std::string& fs : split(floors, ',')) {
        if (fs.empty()) continue;
        int f = std::stoi(fs);
        if (f < floor_min || f > floor_max) throw UnknownFloorError(f);
        layout.sensors.push_back({k, f});
      }
    }
  }
  if (layout.sensors.empty()) throw EmptySensorSetError();
  return layout;
}

std::string SensorLayout::descriptor() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (i) out << '+';
    out << (sensors[i].kind == SensorKind::Accelerometer ? "acc" : "disp") << ':'
        << sensors[i].floor;
  }
  return out.str();
}

ShearBuildingSpec ShearBuildingSpec::benchmark_table() {
  ShearBuildingSpec s;
  // bottom-up: isolation layer, then four floors
  s.mass_ton = {3057, 2335, 1928, 1807, 1800};
  s.stiffness_kn_mm = {1760, 2038, 1939, 2488};  // stories above floors 0..3
  s.damping_ratio = {0.03, 0.03, 0.03, 0.03};
  s.height_m = {1.00, 5.45, 4.40, 4.40, 3.80};
  return s;
}

ShearBuildingSpec ShearBuildingSpec::fixed_base_five_story() {
  ShearBuildingSpec s = benchmark_table();
  // the isolation layer becomes an ordinary first story; its stiffness is a
  // configurable default since the tables leave it to the isolators
  s.stiffness_kn_mm = {2000, 1760, 2038, 1939, 2488};
  s.damping_ratio = {0.03, 0.03, 0.03, 0.03, 0.03};
  return s;
}

double ShearBuildingSpec::total_mass_kg() const {
  double t = 0;
  for (double m : mass_ton) t += m * 1e3;
  return t;
}

InerterSpec InerterSpec::designed(const LrbBoucWenSpec& lrb, double total_mass_kg, double tau,
                                  double kappa, double zeta) {
  InerterSpec s;
  s.m_in_ton = tau * total_mass_kg / 1e3;
  s.k_in_kn_mm = kappa * lrb.k_lrb_kn_mm;
  s.c_in_kn_s_m = 2.0 * zeta * std::sqrt(lrb.k_lrb_si() * total_mass_kg) / 1e3;
  return s;
}

NesSpec NesSpec::defaults(double total_mass_kg) {
  NesSpec s;
  s.m_n_ton = 0.02 * total_mass_kg / 1e3;
  s.c_n_kn_s_m = 50.0;
  s.a_n = 40.0;
  return s;
}

ViscousDamperSpec ViscousDamperSpec::defaults(std::size_t stories) {
  ViscousDamperSpec s;
  s.c_kn.assign(stories, 1000.0);
  return s;
}

// -- device laws -----------------------------------------------------------------

Expr bouc_wen_rate(const Expr& xdot0, const Expr& z, const Expr& u_y, const Rational& n_lrb,
                   const Expr& beta, const Expr& gamma, double rho) {
  Expr rho_e = num(rho);
  Expr hyst = Expr::power(Expr::tanh(rho_e * z) * z, n_lrb);
  Expr dir = gamma + beta * Expr::tanh(rho_e * xdot0);
  return (xdot0 * (Expr::integer(1) - hyst * dir)) / u_y;
}

double bouc_wen_rate(double xdot0, double z, const LrbBoucWenSpec& spec) {
  double hyst = std::pow(std::tanh(spec.rho * z) * z, spec.n_lrb);
  double dir = spec.gamma + spec.beta * std::tanh(spec.rho * xdot0);
  return xdot0 * (1.0 - hyst * dir) / spec.u_y_si();
}

Expr lrb_force(const Expr& x0, const Expr& z, const Expr& k_lrb, const Expr& alpha,
               const Expr& u_y) {
  return alpha * k_lrb * x0 + (Expr::integer(1) - alpha) * k_lrb * u_y * z;
}

Expr nes_force(const Expr& x_n, const Expr& xdot_n, const Expr& xddot_n, const Expr& a_n,
               const Expr& m_n, double gravity) {
  Expr a2 = Expr::power(a_n, Rational(2));
  Expr t1 = Expr::integer(16) * a2 * Expr::power(x_n, Rational(6)) * xddot_n;
  Expr t2 = Expr::integer(48) * a2 * Expr::power(x_n, Rational(5)) * Expr::power(xdot_n, Rational(2));
  Expr t3 = Expr::integer(4) * a_n * Expr::power(x_n, Rational(3)) * num(gravity);
  return (t1 + t2 + t3) * m_n;
}

double nes_force(double x_n, double xdot_n, double xddot_n, const NesSpec& spec) {
  double a2 = spec.a_n * spec.a_n;
  return (16 * a2 * std::pow(x_n, 6) * xddot_n + 48 * a2 * std::pow(x_n, 5) * xdot_n * xdot_n +
          4 * spec.a_n * std::pow(x_n, 3) * spec.gravity) *
         spec.m_n_si();
}

Expr viscous_force(const Expr& v, const Expr& c, const Rational& alpha, double rho) {
  Expr mag = Expr::power(Expr::power(v, Rational(2)), alpha / 2);
  return c * mag * Expr::tanh(num(rho) * v);
}

double viscous_force(double v, double c, const ViscousDamperSpec& spec) {
  return c * std::pow(v * v, spec.alpha / 2.0) * std::tanh(spec.rho * v);
}

std::pair<Expr, Expr> inerter_dynamics(const Expr& x0, const Expr& x_in, const Expr& xdot_in,
                                       const Expr& m_in, const Expr& c_in, const Expr& k_in) {
  Expr f_in = k_in * (x0 - x_in);
  Expr acc = (f_in - c_in * xdot_in) / m_in;
  return {acc, f_in};
}

std::pair<double, double> inerter_dynamics(double x0, double x_in, double xdot_in,
                                           const InerterSpec& spec) {
  double f_in = spec.k_in_si() * (x0 - x_in);
  double acc = (f_in - spec.c_in_si() * xdot_in) / spec.m_in_si();
  return {acc, f_in};
}

std::vector<double> story_damping_from_ratio(const std::vector<double>& mass_kg,
                                             const std::vector<double>& stiffness_n_m,
                                             double zeta) {
  const int n = static_cast<int>(mass_kg.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    M(i, i) = mass_kg[i];
    K(i, i) += stiffness_n_m[i];
    if (i + 1 < n) {
      K(i, i) += stiffness_n_m[i + 1];
      K(i, i + 1) -= stiffness_n_m[i + 1];
      K(i + 1, i) -= stiffness_n_m[i + 1];
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, M);
  Eigen::VectorXd w2 = eig.eigenvalues();
  double w1 = std::sqrt(w2(0));
  double w2nd = n > 1 ? std::sqrt(w2(1)) : 2 * w1;
  // Rayleigh fit on the first two modes, mapped onto story dampers
  double a0 = 2 * zeta * w1 * w2nd / (w1 + w2nd);
  double a1 = 2 * zeta / (w1 + w2nd);
  std::vector<double> c(n);
  for (int i = 0; i < n; ++i) c[i] = a0 * mass_kg[i] + a1 * stiffness_n_m[i];
  return c;
}

// -- benchmark factories -----------------------------------------------------------

namespace {

void add_param(ModelDef& m, const std::string& name, double value) {
  SymbolId s = intern_symbol(name);
  m.parameters.push_back(s);
  m.constants.emplace(s, rat(value));
}

ModelDef two_dof_example(const BenchmarkOptions& opts) {
  ModelDef m;
  m.states = {intern_symbol("xt1"), intern_symbol("xt2"), intern_symbol("xt1d"),
              intern_symbol("xt2d")};
  add_param(m, "k1", 2.0);
  add_param(m, "dk1", 0.5);
  add_param(m, "k2", 1.5);
  add_param(m, "m", 1.0);
  add_param(m, "c1", 0.1);
  add_param(m, "c2", 0.05);
  m.measured_inputs = {intern_symbol("u")};
  m.unmeasured_inputs = {intern_symbol("w")};

  Expr xt1 = sym("xt1"), xt2 = sym("xt2"), xt1d = sym("xt1d"), xt2d = sym("xt2d");
  Expr k1 = sym("k1"), dk1 = sym("dk1"), k2 = sym("k2"), mm = sym("m");
  Expr c1 = sym("c1"), c2 = sym("c2"), u = sym("u"), w = sym("w");

  Expr acc1 = (Expr::negate((k1 + dk1 * xt1) * xt1) + k2 * (xt2 - xt1) - c1 * xt1d +
               c2 * (xt2d - xt1d) + u) /
              mm;
  // the damping coupling in this row follows the measured-acceleration form
  Expr acc2 = (k2 * (xt1 - xt2) + c2 * (xt2d - xt1d) + w) / mm;

  m.dynamics = {xt1d, xt2d, acc1, acc2};
  for (const Sensor& s : opts.sensors.sensors) {
    if (s.floor < 1 || s.floor > 2) throw UnknownFloorError(s.floor);
    if (s.kind == SensorKind::Accelerometer) {
      m.output_names.push_back("acc" + std::to_string(s.floor));
      m.outputs.push_back(s.floor == 1 ? acc1 : acc2);
    } else {
      m.output_names.push_back("disp" + std::to_string(s.floor));
      m.outputs.push_back(s.floor == 1 ? xt1 : xt2);
    }
  }
  m.validate();
  return m;
}

struct ChainForces {
  // story force acting between floor i-1 and floor i, i = 1..n (0 = ground)
  std::vector<Expr> story;  // k_i (x_i - x_{i-1}) + c_i (v_i - v_{i-1})
};

ModelDef isolated_inerter(const BenchmarkOptions& opts) {
  ShearBuildingSpec bld =
      opts.building.mass_ton.empty() ? ShearBuildingSpec::benchmark_table() : opts.building;
  const LrbBoucWenSpec& lrb = opts.lrb;
  InerterSpec in = InerterSpec::designed(lrb, bld.total_mass_kg());

  ModelDef m;
  const int nf = static_cast<int>(bld.floors());  // 5: isolation layer + 4 floors
  for (int i = 0; i < nf; ++i) m.states.push_back(intern_symbol("x" + std::to_string(i)));
  for (int i = 0; i < nf; ++i) m.states.push_back(intern_symbol("v" + std::to_string(i)));
  m.states.push_back(intern_symbol("z"));
  m.states.push_back(intern_symbol("xin"));
  m.states.push_back(intern_symbol("vin"));

  for (int i = 0; i < nf; ++i) {
    add_param(m, "m" + std::to_string(i), bld.mass_ton[i] * 1e3);
  }
  // superstructure story dampers from the tabulated modal damping ratio
  std::vector<double> ss_mass, ss_k;
  for (int i = 1; i < nf; ++i) {
    ss_mass.push_back(bld.mass_ton[i] * 1e3);
    ss_k.push_back(bld.stiffness_kn_mm[i - 1] * 1e6);
  }
  std::vector<double> ss_c = story_damping_from_ratio(ss_mass, ss_k, bld.damping_ratio[0]);
  for (int i = 1; i < nf; ++i) add_param(m, "c" + std::to_string(i), ss_c[i - 1]);
  for (int i = 1; i < nf; ++i) {
    add_param(m, "k" + std::to_string(i), bld.stiffness_kn_mm[i - 1] * 1e6);
  }
  add_param(m, "klrb", lrb.k_lrb_si());
  add_param(m, "alpha", lrb.alpha);
  add_param(m, "uy", lrb.u_y_si());
  add_param(m, "min", in.m_in_si());
  add_param(m, "kin", in.k_in_si());
  add_param(m, "cin", in.c_in_si());
  add_param(m, "beta", lrb.beta);
  add_param(m, "gamma", lrb.gamma);
  add_param(m, "rho", lrb.rho);

  m.measured_inputs = {intern_symbol("ug")};

  Expr ug = sym("ug");
  auto x = [&](int i) { return sym("x" + std::to_string(i)); };
  auto v = [&](int i) { return sym("v" + std::to_string(i)); };
  auto kq = [&](int i) { return sym("k" + std::to_string(i)); };
  auto cq = [&](int i) { return sym("c" + std::to_string(i)); };
  auto mq = [&](int i) { return sym("m" + std::to_string(i)); };

  std::vector<Expr> story(nf);  // story i force between floors i-1 and i
  for (int i = 1; i < nf; ++i) {
    story[i] = kq(i) * (x(i) - x(i - 1)) + cq(i) * (v(i) - v(i - 1));
  }

  Expr z = sym("z"), xin = sym("xin"), vin = sym("vin");
  Expr f_lrb = lrb_force(x(0), z, sym("klrb"), sym("alpha"), sym("uy"));
  auto [inerter_acc, f_in] = inerter_dynamics(x(0), xin, vin, sym("min"), sym("cin"), sym("kin"));

  // relative accelerations (absolute = relative + ug)
  std::vector<Expr> rel_acc(nf);
  rel_acc[0] = (Expr::negate(f_lrb) - f_in + story[1]) / mq(0) - ug;
  for (int i = 1; i < nf - 1; ++i) {
    rel_acc[i] = (Expr::negate(story[i]) + story[i + 1]) / mq(i) - ug;
  }
  rel_acc[nf - 1] = Expr::negate(story[nf - 1]) / mq(nf - 1) - ug;

  for (int i = 0; i < nf; ++i) m.dynamics.push_back(v(i));
  for (int i = 0; i < nf; ++i) m.dynamics.push_back(rel_acc[i]);
  m.dynamics.push_back(bouc_wen_rate(v(0), z, sym("uy"), rat(lrb.n_lrb), sym("beta"),
                                     sym("gamma"), lrb.rho));
  m.dynamics.push_back(vin);
  m.dynamics.push_back(inerter_acc);

  // absolute floor accelerations: the ground term cancels exactly
  auto abs_acc = [&](int i) -> Expr {
    if (i == 0) return (Expr::negate(f_lrb) - f_in + story[1]) / mq(0);
    if (i == nf - 1) return Expr::negate(story[nf - 1]) / mq(nf - 1);
    return (Expr::negate(story[i]) + story[i + 1]) / mq(i);
  };

  for (const Sensor& s : opts.sensors.sensors) {
    if (s.floor < 0 || s.floor >= nf) throw UnknownFloorError(s.floor);
    if (s.kind == SensorKind::Accelerometer) {
      m.output_names.push_back("acc" + std::to_string(s.floor));
      m.outputs.push_back(abs_acc(s.floor));
    } else {
      m.output_names.push_back("disp" + std::to_string(s.floor));
      m.outputs.push_back(x(s.floor));
    }
  }

  m.aux_names = {"d_lrb", "f_lrb", "d_inerter", "f_inerter", "f_inerter_damper",
                 "f_inerter_mass", "d_inerter_node"};
  m.aux = {x(0),
           f_lrb,
           x(0) - xin,
           f_in,
           sym("cin") * vin,
           f_in - sym("cin") * vin,
           xin};
  m.validate();
  return m;
}

ModelDef top_floor_nes(const BenchmarkOptions& opts) {
  ShearBuildingSpec bld =
      opts.building.mass_ton.empty() ? ShearBuildingSpec::fixed_base_five_story() : opts.building;
  bld.stiffness_kn_mm[0] = opts.fixed_base_story1_kn_mm;
  NesSpec nes = NesSpec::defaults(bld.total_mass_kg());
  nes.m_n_ton = opts.nes_mass_fraction * bld.total_mass_kg() / 1e3;
  nes.a_n = opts.nes_a_n;
  nes.c_n_kn_s_m = opts.nes_c_n_kn_s_m;

  const int nf = static_cast<int>(bld.floors());
  ModelDef m;
  for (int i = 1; i <= nf; ++i) m.states.push_back(intern_symbol("x" + std::to_string(i)));
  for (int i = 1; i <= nf; ++i) m.states.push_back(intern_symbol("v" + std::to_string(i)));
  m.states.push_back(intern_symbol("xn"));
  m.states.push_back(intern_symbol("vn"));
  add_param(m, "mn", nes.m_n_si());
  add_param(m, "cn", nes.c_n_si());
  add_param(m, "an", nes.a_n);

  // building values are known here: bake them as numbers
  std::vector<double> mass(nf), stiff(nf);
  for (int i = 0; i < nf; ++i) {
    mass[i] = bld.mass_ton[i] * 1e3;
    stiff[i] = bld.stiffness_kn_mm[i] * 1e6;
  }
  std::vector<double> damp = story_damping_from_ratio(mass, stiff, bld.damping_ratio[0]);

  auto x = [&](int i) { return sym("x" + std::to_string(i)); };
  auto v = [&](int i) { return sym("v" + std::to_string(i)); };
  Expr xn = sym("xn"), vn = sym("vn"), mn = sym("mn"), cn = sym("cn"), an = sym("an");

  auto story = [&](int i) {  // force between floors i-1 and i (1-based)
    Expr dx = i == 1 ? x(1) : x(i) - x(i - 1);
    Expr dv = i == 1 ? v(1) : v(i) - v(i - 1);
    return num(stiff[i - 1]) * dx + num(damp[i - 1]) * dv;
  };

  Expr a2 = Expr::power(an, Rational(2));
  Expr big_p = Expr::integer(16) * a2 * Expr::power(xn, Rational(6)) * mn;
  Expr big_g = (Expr::integer(48) * a2 * Expr::power(xn, Rational(5)) * Expr::power(vn, Rational(2)) +
                Expr::integer(4) * an * Expr::power(xn, Rational(3)) * num(nes.gravity)) *
               mn;
  Expr e_top = Expr::negate(story(nf));
  Expr denom = num(mass[nf - 1]) * (mn + big_p) + big_p * mn;
  Expr acc_top = ((mn + big_p) * e_top + mn * (big_g + cn * vn)) / denom;
  Expr acc_nes = (Expr::negate(mn * acc_top) - cn * vn - big_g) / (mn + big_p);

  std::vector<Expr> acc(nf + 1);  // 1-based
  for (int i = 1; i < nf; ++i) {
    acc[i] = (Expr::negate(story(i)) + story(i + 1)) / num(mass[i - 1]);
  }
  acc[nf] = acc_top;

  for (int i = 1; i <= nf; ++i) m.dynamics.push_back(v(i));
  for (int i = 1; i <= nf; ++i) m.dynamics.push_back(acc[i]);
  m.dynamics.push_back(vn);
  m.dynamics.push_back(acc_nes);

  for (const Sensor& s : opts.sensors.sensors) {
    if (s.floor < 1 || s.floor > nf) throw UnknownFloorError(s.floor);
    if (s.kind == SensorKind::Accelerometer) {
      m.output_names.push_back("acc" + std::to_string(s.floor));
      m.outputs.push_back(acc[s.floor]);
    } else {
      m.output_names.push_back("disp" + std::to_string(s.floor));
      m.outputs.push_back(x(s.floor));
    }
  }
  m.aux_names = {"f_nes_track"};
  m.aux = {nes_force(xn, vn, acc_nes, an, mn, nes.gravity)};
  m.validate();
  return m;
}

ModelDef viscous_wind(const BenchmarkOptions& opts) {
  ShearBuildingSpec bld =
      opts.building.mass_ton.empty() ? ShearBuildingSpec::fixed_base_five_story() : opts.building;
  bld.stiffness_kn_mm[0] = opts.fixed_base_story1_kn_mm;
  const int nf = static_cast<int>(bld.floors());
  ViscousDamperSpec vd = ViscousDamperSpec::defaults(nf);
  vd.alpha = opts.viscous_alpha;

  ModelDef m;
  for (int i = 1; i <= nf; ++i) m.states.push_back(intern_symbol("x" + std::to_string(i)));
  for (int i = 1; i <= nf; ++i) m.states.push_back(intern_symbol("v" + std::to_string(i)));
  for (int i = 1; i <= nf; ++i) add_param(m, "C" + std::to_string(i), vd.c_kn[i - 1] * 1e3);
  m.unmeasured_inputs = {intern_symbol("w")};

  std::vector<double> mass(nf), stiff(nf);
  for (int i = 0; i < nf; ++i) {
    mass[i] = bld.mass_ton[i] * 1e3;
    stiff[i] = bld.stiffness_kn_mm[i] * 1e6;
  }
  std::vector<double> damp = story_damping_from_ratio(mass, stiff, bld.damping_ratio[0]);

  auto x = [&](int i) { return sym("x" + std::to_string(i)); };
  auto v = [&](int i) { return sym("v" + std::to_string(i)); };
  Expr w = sym("w");

  Rational alpha = rat(vd.alpha);
  auto story = [&](int i) {
    Expr dx = i == 1 ? x(1) : x(i) - x(i - 1);
    Expr dv = i == 1 ? v(1) : v(i) - v(i - 1);
    Expr damper = viscous_force(dv, sym("C" + std::to_string(i)), alpha, vd.rho);
    return num(stiff[i - 1]) * dx + num(damp[i - 1]) * dv + damper;
  };

  // wind_floor selects where the scalar load acts; 0 spreads it uniformly
  std::vector<Expr> acc(nf + 1);
  for (int i = 1; i <= nf; ++i) {
    Expr f = Expr::negate(story(i));
    if (i < nf) f = f + story(i + 1);
    if (i == opts.wind_floor || opts.wind_floor == 0) f = f + w;
    acc[i] = f / num(mass[i - 1]);
  }

  for (int i = 1; i <= nf; ++i) m.dynamics.push_back(v(i));
  for (int i = 1; i <= nf; ++i) m.dynamics.push_back(acc[i]);

  for (const Sensor& s : opts.sensors.sensors) {
    if (s.floor < 1 || s.floor > nf) throw UnknownFloorError(s.floor);
    if (s.kind == SensorKind::Accelerometer) {
      m.output_names.push_back("acc" + std::to_string(s.floor));
      m.outputs.push_back(acc[s.floor]);
    } else {
      m.output_names.push_back("disp" + std::to_string(s.floor));
      m.outputs.push_back(x(s.floor));
    }
  }
  m.validate();
  return m;
}

}  // namespace

ModelDef build_benchmark(BenchmarkCase c, const BenchmarkOptions& opts) {
  if (opts.sensors.sensors.empty()) throw EmptySensorSetError();
  switch (c) {
    case BenchmarkCase::TwoDofExample:
      return two_dof_example(opts);
    case BenchmarkCase::IsolatedInerter:
      return isolated_inerter(opts);
    case BenchmarkCase::TopFloorNes:
      return top_floor_nes(opts);
    case BenchmarkCase::ViscousWind:
      return viscous_wind(opts);
  }
  throw ModelError("unknown benchmark case");
}

ModelDef build_benchmark(BenchmarkCase c, const std::string& sensor_descriptor) {
  BenchmarkOptions opts;
  int lo = 0, hi = 0;
  switch (c) {
    case BenchmarkCase::TwoDofExample:
      lo = 1, hi = 2;
      break;
    case BenchmarkCase::IsolatedInerter:
      lo = 0, hi = 4;
      break;
    default:
      lo = 1, hi = 5;
      break;
  }
  opts.sensors = SensorLayout::parse(sensor_descriptor, lo, hi);
  return build_benchmark(c, opts);
}

ModelDef build_benchmark_from_config(const std::unordered_map<std::string, std::string>& kv) {
  auto it = kv.find("case");
  if (it == kv.end()) throw ModelError("[benchmark] section needs a 'case' entry");
  BenchmarkCase c = benchmark_case_from_name(it->second);
  BenchmarkOptions opts;
  std::string sensors = "acc:all";
  switch (c) {
    case BenchmarkCase::TwoDofExample:
      sensors = "acc:1,2";
      break;
    case BenchmarkCase::IsolatedInerter:
      sensors = "acc:2";
      break;
    case BenchmarkCase::TopFloorNes:
      sensors = "acc:all";
      break;
    case BenchmarkCase::ViscousWind:
      sensors = "acc:all";
      break;
  }
  if (auto s = kv.find("sensors"); s != kv.end()) sensors = s->second;
  auto get_double = [&](const char* key, double* dst) {
    if (auto v = kv.find(key); v != kv.end()) *dst = std::stod(v->second);
  };
  auto get_int = [&](const char* key, int* dst) {
    if (auto v = kv.find(key); v != kv.end()) *dst = std::stoi(v->second);
  };
  get_int("wind_floor", &opts.wind_floor);
  get_double("nes_mass_fraction", &opts.nes_mass_fraction);
  get_double("nes_a_n", &opts.nes_a_n);
  get_double("nes_c_n", &opts.nes_c_n_kn_s_m);
  get_double("viscous_alpha", &opts.viscous_alpha);
  get_double("story1_stiffness", &opts.fixed_base_story1_kn_mm);
  get_double("lrb_k", &opts.lrb.k_lrb_kn_mm);
  get_double("lrb_alpha", &opts.lrb.alpha);
  get_double("lrb_uy", &opts.lrb.u_y_mm);
  get_double("lrb_rho", &opts.lrb.rho);
  int lo = 0, hi = 0;
  switch (c) {
    case BenchmarkCase::TwoDofExample:
      lo = 1, hi = 2;
      break;
    case BenchmarkCase::IsolatedInerter:
      lo = 0, hi = 4;
      break;
    default:
      lo = 1, hi = 5;
      break;
  }
  opts.sensors = SensorLayout::parse(sensors, lo, hi);
  return build_benchmark(c, opts);
}

}  // namespace obsym
