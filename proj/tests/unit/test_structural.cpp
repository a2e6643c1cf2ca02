#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "obsym/simulate.hpp"
#include "obsym/structural.hpp"

using namespace obsym;

TEST_CASE("sensor layout parsing") {
  SensorLayout l = SensorLayout::parse("acc:2+disp:4,5", 0, 5);
  REQUIRE(l.sensors.size() == 3);
  CHECK(l.sensors[0].kind == SensorKind::Accelerometer);
  CHECK(l.sensors[0].floor == 2);
  CHECK(l.descriptor() == "acc:2+disp:4+disp:5");
  CHECK(SensorLayout::parse("acc:all", 1, 5).sensors.size() == 5);
  CHECK_THROWS_AS(SensorLayout::parse("acc:9", 0, 5), UnknownFloorError);
  CHECK_THROWS_AS(SensorLayout::parse("", 0, 5), EmptySensorSetError);
  CHECK_THROWS_AS(build_benchmark(BenchmarkCase::TwoDofExample, BenchmarkOptions{}),
                  EmptySensorSetError);
}

TEST_CASE("design-table conversions for the inerter damper") {
  // independent unit-conversion oracle over the tabulated values
  ShearBuildingSpec bld = ShearBuildingSpec::benchmark_table();
  double total_kg = (1800.0 + 1807.0 + 1928.0 + 2335.0 + 3057.0) * 1e3;
  CHECK(bld.total_mass_kg() == doctest::Approx(total_kg).epsilon(1e-12));

  LrbBoucWenSpec lrb = LrbBoucWenSpec::design_values();
  CHECK(lrb.k_lrb_si() == doctest::Approx(135e6));
  CHECK(lrb.u_y_si() == doctest::Approx(0.04));

  InerterSpec in = InerterSpec::designed(lrb, total_kg);
  CHECK(in.m_in_si() == doctest::Approx(0.1 * total_kg).epsilon(1e-12));
  CHECK(in.k_in_si() == doctest::Approx(0.12 * 135e6).epsilon(1e-12));
  CHECK(in.c_in_si() ==
        doctest::Approx(2 * 0.013 * std::sqrt(135e6 * total_kg)).epsilon(1e-12));
}

TEST_CASE("hysteresis rate values") {
  LrbBoucWenSpec spec = LrbBoucWenSpec::design_values();

  // at z = 0 the hysteresis term vanishes: rate = xd0 / u_y
  CHECK(bouc_wen_rate(1.0, 0.0, spec) == doctest::Approx(1.0 / 0.04).epsilon(1e-12));
  CHECK(bouc_wen_rate(0.0, 0.5, spec) == 0.0);

  // plain-number variant of the same identity (u_y carried in the binding)
  Expr rate = bouc_wen_rate(Expr::symbol("xd0"), Expr::symbol("z"), Expr::symbol("uy"),
                            Rational(2), Expr::symbol("beta"), Expr::symbol("gamma"), 100.0);
  double v = evaluate(rate, {{"xd0", 1.0}, {"uy", 40.0}, {"z", 0.0},
                             {"beta", 0.75}, {"gamma", 0.8}});
  CHECK(v == doctest::Approx(0.025).epsilon(1e-12));

  // large-z fixed point: (tanh(100 z) z)^2 (gamma + beta) = 1 at xd0 = +1;
  // bisection oracle on the closed-form condition
  double lo = 0.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double g = std::pow(std::tanh(spec.rho * mid) * mid, 2.0) * (spec.gamma + spec.beta) - 1.0;
    (g < 0 ? lo : hi) = mid;
  }
  double zstar = 0.5 * (lo + hi);
  CHECK(std::abs(bouc_wen_rate(1.0, zstar, spec)) <= 1e-9);
}

TEST_CASE("track force values") {
  NesSpec spec;
  spec.m_n_ton = 1e-3;  // 1 kg
  spec.c_n_kn_s_m = 0;
  spec.a_n = 1.0;
  CHECK(nes_force(0.0, 3.0, -2.0, spec) == 0.0);
  CHECK(nes_force(1.0, 0.0, 0.0, spec) == doctest::Approx(4 * 9.81).epsilon(1e-12));
  CHECK(nes_force(-1.0, 0.0, 0.0, spec) == doctest::Approx(-4 * 9.81).epsilon(1e-12));
}

TEST_CASE("fractional damper force values") {
  ViscousDamperSpec spec = ViscousDamperSpec::defaults(1);
  CHECK(viscous_force(0.0, 1.0, spec) == 0.0);
  CHECK(viscous_force(1.0, 1.0, spec) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(viscous_force(-0.37, 2.5, spec) == doctest::Approx(-viscous_force(0.37, 2.5, spec)));
}

TEST_CASE("inerter device relations") {
  InerterSpec spec{.m_in_ton = 2.0, .c_in_kn_s_m = 3.0, .k_in_kn_mm = 0.004};
  auto [acc0, f0] = inerter_dynamics(1.0, 1.0, 0.0, spec);
  CHECK(acc0 == 0.0);
  CHECK(f0 == 0.0);
  auto [acc1, f1] = inerter_dynamics(1.5, 0.5, 0.0, spec);
  CHECK(f1 == doctest::Approx(spec.k_in_si() * 1.0));
  CHECK(acc1 == doctest::Approx(spec.k_in_si() / spec.m_in_si()));
}

TEST_CASE("benchmarks rest at the origin") {
  for (auto kase : {BenchmarkCase::TwoDofExample, BenchmarkCase::IsolatedInerter,
                    BenchmarkCase::TopFloorNes, BenchmarkCase::ViscousWind}) {
    ModelDef m = build_benchmark(kase, kase == BenchmarkCase::TwoDofExample ? "acc:1,2"
                                 : kase == BenchmarkCase::IsolatedInerter  ? "acc:2"
                                                                           : "acc:all");
    InputMap inputs;
    for (SymbolId s : m.measured_inputs) {
      inputs.emplace(s, InputSignal{TimeSeries::zeros(0, 0.01, 1001, 1), 0});
    }
    for (SymbolId s : m.unmeasured_inputs) {
      inputs.emplace(s, InputSignal{TimeSeries::zeros(0, 0.01, 1001, 1), 0});
    }
    std::vector<double> x0(m.states.size(), 0.0);
    Trajectory traj = integrate(m, m.constants_binding(), inputs, x0, 1e-3, 10.0, 1);
    for (const auto& state : traj.states) {
      for (double v : state) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("hysteresis loop dissipates energy over a displacement cycle") {
  // drive x0 through one sinusoidal cycle, integrate the z-equation, and
  // quadrature the loop integral of the bearing force
  LrbBoucWenSpec spec = LrbBoucWenSpec::design_values();
  const double amp = 0.12, omega = 2 * M_PI;  // beyond the yield displacement
  const double dt = 1e-5;
  double z = 0.0, work = 0.0;
  double x_prev = 0.0;
  for (double t = 0; t < 1.0; t += dt) {
    double x0 = amp * std::sin(omega * t);
    double v0 = amp * omega * std::cos(omega * t);
    // RK4 on the scalar z equation
    auto f = [&](double zz, double vv) { return bouc_wen_rate(vv, zz, spec); };
    double k1 = f(z, v0);
    double k2 = f(z + 0.5 * dt * k1, v0);
    double k3 = f(z + 0.5 * dt * k2, v0);
    double k4 = f(z + dt * k3, v0);
    z += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    double force = spec.alpha * spec.k_lrb_si() * x0 +
                   (1 - spec.alpha) * spec.k_lrb_si() * spec.u_y_si() * z;
    work += force * (x0 - x_prev);
    x_prev = x0;
  }
  CHECK(work > 0.0);
}

TEST_CASE("transmitted inerter force balances the device internals along a trajectory") {
  ModelDef m = build_benchmark(BenchmarkCase::IsolatedInerter, "acc:2");
  InputMap inputs;
  TimeSeries ug = synthetic_ground_motion(0.01, 4.0, 3.0, 77);
  inputs.emplace(intern_symbol("ug"), InputSignal{ug, 0});
  std::vector<double> x0(m.states.size(), 0.0);
  Trajectory traj = integrate(m, m.constants_binding(), inputs, x0, 0.01, 4.0, 30);

  Binding consts = m.constants_binding();
  double kin = *consts.get(intern_symbol("kin"));
  double cin = *consts.get(intern_symbol("cin"));
  double min = *consts.get(intern_symbol("min"));
  // f_in = k_in (x0 - x_in) must equal m_in xdd_in + c_in xd_in
  std::size_t ix0 = 0, ixin = 0, ivin = 0;
  for (std::size_t i = 0; i < m.states.size(); ++i) {
    std::string n = symbol_name(m.states[i]);
    if (n == "x0") ix0 = i;
    if (n == "xin") ixin = i;
    if (n == "vin") ivin = i;
  }
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    double x0v = traj.states[s][ix0];
    double xin = traj.states[s][ixin];
    double vin = traj.states[s][ivin];
    double f_in = kin * (x0v - xin);
    double xdd_in = (f_in - cin * vin) / min;
    double balance = min * xdd_in + cin * vin;
    CHECK(std::abs(f_in - balance) <= 1e-8 * std::max(1.0, std::abs(f_in)));
  }
}

TEST_CASE("the isolated model approaches the bare building as the inerter vanishes") {
  TimeSeries ug = synthetic_ground_motion(0.01, 3.0, 2.0, 31);
  auto response = [&](double scale) {
    BenchmarkOptions opts;
    opts.sensors = SensorLayout::parse("acc:2", 0, 4);
    ModelDef m = build_benchmark(BenchmarkCase::IsolatedInerter, opts);
    Binding params = m.constants_binding();
    params.set("min", *params.get(intern_symbol("min")) * scale);
    params.set("kin", *params.get(intern_symbol("kin")) * scale);
    params.set("cin", *params.get(intern_symbol("cin")) * scale);
    InputMap inputs;
    inputs.emplace(intern_symbol("ug"), InputSignal{ug, 0});
    std::vector<double> x0(m.states.size(), 0.0);
    Trajectory t = integrate(m, params, inputs, x0, 0.01, 3.0, 30);
    return t;
  };
  Trajectory base = response(1e-12);
  double prev_err = 1e300;
  for (double scale : {1e-2, 1e-4, 1e-6}) {
    Trajectory t = response(scale);
    double err = 0;
    for (std::size_t s = 0; s < t.outputs.size(); ++s) {
      err = std::max(err, std::abs(t.outputs[s][0] - base.outputs[s][0]));
    }
    CHECK(err < prev_err + 1e-15);
    prev_err = err;
  }
  CHECK(prev_err <= 1e-6);
}

TEST_CASE("story damping coefficients reproduce the target modal ratio") {
  std::vector<double> mass = {2335e3, 1928e3, 1807e3, 1800e3};
  std::vector<double> stiff = {1760e6, 2038e6, 1939e6, 2488e6};
  std::vector<double> c = story_damping_from_ratio(mass, stiff, 0.03);
  REQUIRE(c.size() == 4);
  for (double ci : c) CHECK(ci > 0);
}
