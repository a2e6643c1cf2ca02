#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "obsym/simulate.hpp"
#include "obsym/structural.hpp"

using namespace obsym;

namespace {

ModelDef sdof_model(double omega) {
  ModelDef m;
  m.states = {intern_symbol("x"), intern_symbol("v")};
  m.dynamics = {Expr::symbol("v"),
                Expr::constant(Rational(-omega * omega)) * Expr::symbol("x")};
  m.output_names = {"y"};
  m.outputs = {Expr::symbol("x")};
  return m;
}

}  // namespace

TEST_CASE("undamped oscillator follows the analytic cosine") {
  const double omega = 2 * M_PI;
  ModelDef m = sdof_model(omega);
  std::vector<double> x0 = {1.0, 0.0};
  Trajectory traj = integrate(m, {}, {}, x0, 1e-3, 1.0, 1);
  REQUIRE(traj.times.size() == 1001);
  CHECK(std::abs(traj.states.back()[0] - 1.0) <= 1e-6);
  // mid-trajectory sample against cos(omega t)
  CHECK(std::abs(traj.states[250][0] - std::cos(omega * 0.25)) <= 1e-6);
}

TEST_CASE("rk4 converges at fourth order") {
  const double omega = 2 * M_PI;
  ModelDef m = sdof_model(omega);
  std::vector<double> x0 = {1.0, 0.0};
  auto endpoint_error = [&](double dt) {
    Trajectory t = integrate(m, {}, {}, x0, dt, 1.0, 1);
    return std::abs(t.states.back()[0] - 1.0);
  };
  double e1 = endpoint_error(2e-2);
  double e2 = endpoint_error(1e-2);
  double ratio = e1 / e2;
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("energy of the undamped unforced five-story frame is conserved") {
  // plain shear building, no dampers: 1/2 v'Mv + 1/2 x'Kx stays put
  ShearBuildingSpec bld = ShearBuildingSpec::fixed_base_five_story();
  const int n = 5;
  std::vector<double> mass(n), stiff(n);
  for (int i = 0; i < n; ++i) {
    mass[i] = bld.mass_ton[i] * 1e3;
    stiff[i] = bld.stiffness_kn_mm[i] * 1e6;
  }
  ModelDef m;
  for (int i = 1; i <= n; ++i) m.states.push_back(intern_symbol("px" + std::to_string(i)));
  for (int i = 1; i <= n; ++i) m.states.push_back(intern_symbol("pv" + std::to_string(i)));
  auto X = [&](int i) { return Expr::variable(m.states[i - 1]); };
  auto V = [&](int i) { return Expr::variable(m.states[n + i - 1]); };
  auto story = [&](int i) {
    Expr dx = i == 1 ? X(1) : X(i) - X(i - 1);
    return Expr::constant(Rational(stiff[i - 1])) * dx;
  };
  for (int i = 1; i <= n; ++i) m.dynamics.push_back(V(i));
  for (int i = 1; i <= n; ++i) {
    Expr f = Expr::negate(story(i));
    if (i < n) f = f + story(i + 1);
    m.dynamics.push_back(f / Expr::constant(Rational(mass[i - 1])));
  }
  m.output_names = {"x5"};
  m.outputs = {X(n)};

  std::vector<double> x0(2 * n, 0.0);
  x0[0] = 0.01;
  x0[2] = -0.005;
  Trajectory traj = integrate(m, {}, {}, x0, 1e-3, 10.0, 1);

  auto energy = [&](const std::vector<double>& s) {
    double e = 0;
    for (int i = 0; i < n; ++i) e += 0.5 * mass[i] * s[n + i] * s[n + i];
    for (int i = 1; i <= n; ++i) {
      double dx = i == 1 ? s[0] : s[i - 1] - s[i - 2];
      e += 0.5 * stiff[i - 1] * dx * dx;
    }
    return e;
  };
  double e0 = energy(traj.states.front());
  for (const auto& s : traj.states) {
    CHECK(std::abs(energy(s) - e0) <= 1e-6 * e0);
  }
}

TEST_CASE("interpolated substeps are consistent on the isolation benchmark") {
  ModelDef m = build_benchmark(BenchmarkCase::IsolatedInerter, "acc:2");
  TimeSeries ug = synthetic_ground_motion(0.01, 2.0, 3.0, 5);
  InputMap inputs;
  inputs.emplace(intern_symbol("ug"), InputSignal{ug, 0});
  std::vector<double> x0(m.states.size(), 0.0);
  Trajectory a = integrate(m, m.constants_binding(), inputs, x0, 0.01, 2.0, 30);
  Trajectory b = integrate(m, m.constants_binding(), inputs, x0, 0.01, 2.0, 60);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.outputs.size(); ++i) {
    num = std::max(num, std::abs(a.outputs[i][0] - b.outputs[i][0]));
    den = std::max(den, std::abs(b.outputs[i][0]));
  }
  CHECK(num <= 1e-4 * den);
}

TEST_CASE("divergence guard reports the failure time") {
  ModelDef m;
  m.states = {intern_symbol("g")};
  m.dynamics = {Expr::symbol("g") * Expr::symbol("g")};  // finite-time blowup
  m.output_names = {"y"};
  m.outputs = {Expr::symbol("g")};
  std::vector<double> x0 = {5.0};
  CHECK_THROWS_AS(integrate(m, {}, {}, x0, 0.01, 10.0, 1), NonFiniteStateError);
}

TEST_CASE("measurement synthesis") {
  const double omega = 2 * M_PI;
  ModelDef m = sdof_model(omega);
  std::vector<double> x0 = {1.0, 0.0};
  Trajectory traj = integrate(m, {}, {}, x0, 1e-3, 1.0, 1);

  TimeSeries clean = synthesize_measurements(traj, 1e-3, 0.0, 4);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean.values[i][0] == traj.outputs[i][0]);
  }

  TimeSeries a = synthesize_measurements(traj, 1e-3, 0.02, 7);
  TimeSeries b = synthesize_measurements(traj, 1e-3, 0.02, 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.values[i][0] == b.values[i][0]);  // bit-identical under one seed
  }
}

TEST_CASE("noise level matches the requested fraction statistically") {
  Trajectory traj;
  const std::size_t n = 100000;
  traj.times.resize(n);
  traj.states.assign(n, {0.0});
  traj.outputs.assign(n, {2.0});  // rms = 2
  TimeSeries noisy = synthesize_measurements(traj, 1e-2, 0.02, 123);
  double var = 0;
  for (const auto& row : noisy.values) {
    double d = row[0] - 2.0;
    var += d * d;
  }
  double std_hat = std::sqrt(var / n);
  CHECK(std::abs(std_hat - 0.04) <= 0.03 * 0.04 + 3 * 0.04 / std::sqrt(2.0 * n));
}

TEST_CASE("csv round trip") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-5, 5);
  TimeSeries ts = TimeSeries::zeros(0.0, 0.01, 57, 3);
  ts.channel_names = {"a", "b", "c"};
  for (auto& row : ts.values) {
    for (double& v : row) v = dist(rng) * std::pow(10.0, int(rng() % 7) - 3);
  }
  std::string path = (std::filesystem::temp_directory_path() / "obsym_series_test.csv").string();
  store_series(ts, path, "round trip test");
  TimeSeries back = load_series(path);
  REQUIRE(back.size() == ts.size());
  REQUIRE(back.channels() == 3);
  CHECK(back.dt == doctest::Approx(ts.dt).epsilon(1e-12));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      double want = ts.values[i][c];
      CHECK(std::abs(back.values[i][c] - want) <= 1e-11 * std::max(1.0, std::abs(want)));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("csv loader rejects non-uniform time") {
  std::string path = (std::filesystem::temp_directory_path() / "obsym_bad_series.csv").string();
  {
    std::ofstream f(path);
    f << "t,ch0\n0,1\n0.01,2\n0.5,3\n";
  }
  CHECK_THROWS_AS(load_series(path), NonUniformSamplingError);
  std::remove(path.c_str());
}

TEST_CASE("three-row file infers dt") {
  std::string path = (std::filesystem::temp_directory_path() / "obsym_tiny.csv").string();
  {
    std::ofstream f(path);
    f << "t,ch0\n0,1\n0.5,2\n1,3\n";
  }
  TimeSeries ts = load_series(path);
  CHECK(ts.dt == doctest::Approx(0.5));
  CHECK(ts.size() == 3);
  std::remove(path.c_str());
}

TEST_CASE("augmentation preserves simulation on the oscillator") {
  // base model with known k simulated directly vs parameter-augmented model
  // initialized at the true k, with a chained sinusoidal disturbance
  ModelDef m = parse_model(R"(
[states]
x
v
[params]
k
[inputs_unmeasured]
w
[constants]
k = 4
[dynamics]
x = v
v = -k*x + w
[outputs]
y = x
)");
  const double dt = 1e-3, t_end = 2.0;
  TimeSeries w = TimeSeries::zeros(0, dt, 2001, 1);
  for (std::size_t i = 0; i < w.size(); ++i) w.values[i][0] = std::sin(3.0 * dt * i);

  InputMap base_inputs;
  base_inputs.emplace(intern_symbol("w"), InputSignal{w, 0});
  std::vector<double> x0 = {0.5, 0.0};
  Trajectory base = integrate(m, m.constants_binding(), base_inputs, x0, dt, t_end, 2);

  AugmentedModel am = augment_unmeasured_inputs(augment_parameters(m, {intern_symbol("k")}), 2);
  ModelDef aug = am.as_model();
  // w-chain initialized with the true derivatives of sin(3t); terminator feeds
  // the third derivative
  TimeSeries w3 = TimeSeries::zeros(0, dt, 2001, 1);
  for (std::size_t i = 0; i < w3.size(); ++i) w3.values[i][0] = -27.0 * std::cos(3.0 * dt * i);
  InputMap aug_inputs;
  aug_inputs.emplace(derived_input_symbol(intern_symbol("w"), 3), InputSignal{w3, 0});
  std::vector<double> q0 = {0.5, 0.0, 4.0, 0.0, 3.0, 0.0};  // x, v, k, w(0), w'(0), w''(0)
  Trajectory lifted = integrate(aug, {}, aug_inputs, q0, dt, t_end, 2);

  for (std::size_t i = 0; i < base.states.size(); ++i) {
    CHECK(std::abs(base.states[i][0] - lifted.states[i][0]) <= 1e-6);
  }
}
