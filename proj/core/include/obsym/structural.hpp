#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "obsym/model.hpp"

namespace obsym {

struct UnknownFloorError : ModelError {
  explicit UnknownFloorError(int floor)
      : ModelError("sensor references unknown floor " + std::to_string(floor)) {}
};

struct EmptySensorSetError : ModelError {
  EmptySensorSetError() : ModelError("sensor layout is empty") {}
};

enum class BenchmarkCase {
  TwoDofExample,
  IsolatedInerter,
  TopFloorNes,
  ViscousWind,
};

BenchmarkCase benchmark_case_from_name(const std::string& name);
std::string benchmark_case_name(BenchmarkCase c);

enum class SensorKind { Accelerometer, Displacement };

struct Sensor {
  SensorKind kind;
  int floor;
};

struct SensorLayout {
  std::vector<Sensor> sensors;

  /// Descriptor grammar: comma/plus separated entries "acc:F1,F2" and
  /// "disp:F", with "all" accepted as floor list, e.g. "acc:2", "disp:4,5",
  /// "acc:2+disp:1", "acc:all".
  static SensorLayout parse(const std::string& descriptor, int floor_min, int floor_max);
  std::string descriptor() const;
};

/// Shear-building data in the units used by the benchmark tables (tons,
/// kN/mm); factories convert to SI (kg, N/m) at the boundary. Entries are
/// bottom-up.
struct ShearBuildingSpec {
  std::vector<double> mass_ton;
  std::vector<double> stiffness_kn_mm;  // story stiffness above each floor
  std::vector<double> damping_ratio;
  std::vector<double> height_m;

  /// The five-mass benchmark structure: isolation layer + four floors.
  static ShearBuildingSpec benchmark_table();
  /// Fixed-base five-story variant used by the NES / viscous-damper cases.
  static ShearBuildingSpec fixed_base_five_story();

  double total_mass_kg() const;
  std::size_t floors() const { return mass_ton.size(); }
};

struct LrbBoucWenSpec {
  double k_lrb_kn_mm = 135.0;
  double alpha = 0.2;
  double u_y_mm = 40.0;
  double n_lrb = 2.0;
  double beta = 0.75;
  double gamma = 0.8;
  double rho = 100.0;

  static LrbBoucWenSpec design_values() { return {}; }
  double k_lrb_si() const { return k_lrb_kn_mm * 1e6; }  // N/m
  double u_y_si() const { return u_y_mm * 1e-3; }        // m
};

struct InerterSpec {
  double m_in_ton;
  double c_in_kn_s_m;
  double k_in_kn_mm;

  /// Design formulas: m_in = tau * total mass, k_in = kappa * k_lrb,
  /// c_in = 2 zeta sqrt(k_lrb * total mass), with tau=0.1, kappa=0.12,
  /// zeta=0.013.
  static InerterSpec designed(const LrbBoucWenSpec& lrb, double total_mass_kg,
                              double tau = 0.1, double kappa = 0.12, double zeta = 0.013);
  double m_in_si() const { return m_in_ton * 1e3; }
  double c_in_si() const { return c_in_kn_s_m * 1e3; }
  double k_in_si() const { return k_in_kn_mm * 1e6; }
};

struct NesSpec {
  double m_n_ton;
  double c_n_kn_s_m;
  double a_n;  // track shape coefficient, 1/m^3
  double gravity = 9.81;

  static NesSpec defaults(double total_mass_kg);
  double m_n_si() const { return m_n_ton * 1e3; }
  double c_n_si() const { return c_n_kn_s_m * 1e3; }
};

struct ViscousDamperSpec {
  std::vector<double> c_kn;  // per story, kN (s/m)^alpha
  double alpha = 0.5;        // fractional velocity exponent
  double rho = 100.0;

  static ViscousDamperSpec defaults(std::size_t stories);
};

struct BenchmarkOptions {
  SensorLayout sensors;
  /// Parameters kept symbolic; empty means the per-case default set.
  std::vector<std::string> symbolic_parameters;
  /// Which floor the scalar wind load acts on (viscous-damper case).
  int wind_floor = 1;
  ShearBuildingSpec building;  // empty -> per-case default
  LrbBoucWenSpec lrb = LrbBoucWenSpec::design_values();
  double nes_mass_fraction = 0.02;
  double nes_a_n = 40.0;
  double nes_c_n_kn_s_m = 50.0;
  double viscous_alpha = 0.5;
  double fixed_base_story1_kn_mm = 2000.0;
};

/// Wires a complete model for one of the built-in cases: equations of
/// motion, device force laws, sensor outputs, and nominal design values in
/// [constants]. Device forces are exported as aux expressions for
/// force-displacement reconstruction.
ModelDef build_benchmark(BenchmarkCase c, const BenchmarkOptions& opts);
ModelDef build_benchmark(BenchmarkCase c, const std::string& sensor_descriptor);

/// [benchmark] model-file section / CLI: key-value configuration.
ModelDef build_benchmark_from_config(const std::unordered_map<std::string, std::string>& kv);

// -- device force laws (symbolic builders + numeric convenience) -------------

/// Hysteresis rate zdot = (1/u_y) xdot0 (1 - (tanh(rho z) z)^n (gamma +
/// beta tanh(rho xdot0))).
Expr bouc_wen_rate(const Expr& xdot0, const Expr& z, const Expr& u_y, const Rational& n_lrb,
                   const Expr& beta, const Expr& gamma, double rho);
double bouc_wen_rate(double xdot0, double z, const LrbBoucWenSpec& spec);

/// Restoring force of the bearing: alpha k x0 + (1-alpha) k u_y z.
Expr lrb_force(const Expr& x0, const Expr& z, const Expr& k_lrb, const Expr& alpha, const Expr& u_y);

/// Track force of the nonlinear energy sink.
Expr nes_force(const Expr& x_n, const Expr& xdot_n, const Expr& xddot_n, const Expr& a_n,
               const Expr& m_n, double gravity);
double nes_force(double x_n, double xdot_n, double xddot_n, const NesSpec& spec);

/// Fractional-power damper force C (v^2)^(alpha/2) tanh(rho v); the
/// analytic stand-in for C |v|^alpha sign(v).
Expr viscous_force(const Expr& v, const Expr& c, const Rational& alpha, double rho);
double viscous_force(double v, double c, const ViscousDamperSpec& spec);

/// Internal-node acceleration and transmitted force of the inerter damper:
/// xddot_in = (k_in (x0 - x_in) - c_in xdot_in)/m_in, f_in = k_in (x0 - x_in).
std::pair<Expr, Expr> inerter_dynamics(const Expr& x0, const Expr& x_in, const Expr& xdot_in,
                                       const Expr& m_in, const Expr& c_in, const Expr& k_in);
std::pair<double, double> inerter_dynamics(double x0, double x_in, double xdot_in,
                                           const InerterSpec& spec);

/// Story damping coefficients for a given modal damping ratio: Rayleigh
/// coefficients fitted on the first two fixed-base modes, then mapped to
/// story dampers c_i = a1 k_i + a0 m_i.
std::vector<double> story_damping_from_ratio(const std::vector<double>& mass_kg,
                                             const std::vector<double>& stiffness_n_m,
                                             double zeta);

}  // namespace obsym
