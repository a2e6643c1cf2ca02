#include "obsym/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace obsym {

double TimeSeries::sample(std::size_t channel, double t) const {
  if (values.empty()) return 0.0;
  double pos = (t - t0) / dt;
  if (pos <= 0) return values.front()[channel];
  if (pos >= static_cast<double>(size() - 1)) return values.back()[channel];
  std::size_t i = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(i);
  return values[i][channel] * (1.0 - frac) + values[i + 1][channel] * frac;
}

double TimeSeries::rms(std::size_t channel) const {
  if (values.empty()) return 0.0;
  double acc = 0;
  for (const auto& row : values) acc += row[channel] * row[channel];
  return std::sqrt(acc / static_cast<double>(size()));
}

TimeSeries TimeSeries::zeros(double t0, double dt, std::size_t steps, std::size_t channels) {
  TimeSeries ts;
  ts.t0 = t0;
  ts.dt = dt;
  ts.values.assign(steps, std::vector<double>(channels, 0.0));
  return ts;
}

TimeSeries Trajectory::outputs_series(double dt) const {
  TimeSeries ts;
  ts.t0 = times.empty() ? 0.0 : times.front();
  ts.dt = dt;
  ts.values = outputs;
  return ts;
}

Trajectory integrate(const ModelDef& m, const Binding& params, const InputMap& inputs,
                     std::span<const double> x0, double dt, double t_end, int substeps) {
  if (substeps < 1) throw ModelError("substeps must be >= 1");
  if (x0.size() != m.states.size()) {
    throw ModelError("initial state has " + std::to_string(x0.size()) + " entries for " +
                     std::to_string(m.states.size()) + " states");
  }

  // argument order: states, then inputs, then parameters
  std::vector<SymbolId> args = m.states;
  std::vector<SymbolId> input_syms;
  for (SymbolId s : m.measured_inputs) input_syms.push_back(s);
  for (SymbolId s : m.unmeasured_inputs) input_syms.push_back(s);
  for (SymbolId s : input_syms) {
    if (!inputs.count(s)) {
      throw ModelError("no input series for '" + symbol_name(s) + "'");
    }
    args.push_back(s);
  }
  std::vector<SymbolId> param_syms;
  {
    Binding cb = m.constants_binding();
    for (SymbolId s : m.parameters) param_syms.push_back(s);
    for (const auto& [s, v] : cb.values) {
      if (std::find(param_syms.begin(), param_syms.end(), s) == param_syms.end() &&
          std::find(args.begin(), args.end(), s) == args.end()) {
        param_syms.push_back(s);
      }
    }
  }
  for (SymbolId s : param_syms) args.push_back(s);

  CompiledFunction f = CompiledFunction::compile(m.dynamics, args);
  CompiledFunction h = CompiledFunction::compile(m.outputs, args);

  const std::size_t nx = m.states.size();
  const std::size_t nu = input_syms.size();
  std::vector<double> arg(args.size(), 0.0);
  {
    Binding cb = m.constants_binding();
    for (std::size_t i = 0; i < param_syms.size(); ++i) {
      SymbolId s = param_syms[i];
      auto v = params.get(s);
      if (!v) v = cb.get(s);
      if (!v) throw UnboundVariableError(symbol_name(s));
      arg[nx + nu + i] = *v;
    }
  }

  auto fill_inputs = [&](double t) {
    for (std::size_t j = 0; j < nu; ++j) {
      const InputSignal& in = inputs.at(input_syms[j]);
      arg[nx + j] = in.series.sample(in.channel, t);
    }
  };

  std::vector<double> scratch(std::max(f.register_count(), h.register_count()));
  std::vector<double> state(x0.begin(), x0.end());
  std::vector<double> k1(nx), k2(nx), k3(nx), k4(nx), tmp(nx);

  auto deriv = [&](double t, const std::vector<double>& x, std::vector<double>& dx) {
    std::copy(x.begin(), x.end(), arg.begin());
    fill_inputs(t);
    f.eval(arg, std::span<double>(dx), scratch);
  };

  auto check_finite = [&](const std::vector<double>& x, double t) {
    for (double v : x) {
      if (!std::isfinite(v) || std::abs(v) > 1e12) throw NonFiniteStateError(t);
    }
  };

  Trajectory traj;
  const std::size_t steps = static_cast<std::size_t>(std::llround(t_end / dt));
  const double h_sub = dt / substeps;
  double t = 0.0;

  auto record = [&](double tr) {
    traj.times.push_back(tr);
    traj.states.push_back(state);
    std::copy(state.begin(), state.end(), arg.begin());
    fill_inputs(tr);
    std::vector<double> y(h.output_count());
    h.eval(arg, y, scratch);
    traj.outputs.push_back(std::move(y));
  };

  record(0.0);
  for (std::size_t step = 0; step < steps; ++step) {
    for (int s = 0; s < substeps; ++s) {
      deriv(t, state, k1);
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = state[i] + 0.5 * h_sub * k1[i];
      deriv(t + 0.5 * h_sub, tmp, k2);
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = state[i] + 0.5 * h_sub * k2[i];
      deriv(t + 0.5 * h_sub, tmp, k3);
      for (std::size_t i = 0; i < nx; ++i) tmp[i] = state[i] + h_sub * k3[i];
      deriv(t + h_sub, tmp, k4);
      for (std::size_t i = 0; i < nx; ++i) {
        state[i] += h_sub / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      }
      t += h_sub;
    }
    t = dt * static_cast<double>(step + 1);  // avoid drift
    check_finite(state, t);
    record(t);
  }
  return traj;
}

double NormalSampler::uniform() {
  // splitmix64
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t x = state_;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  x ^= x >> 31;
  return (static_cast<double>(x >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double NormalSampler::next() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

TimeSeries synthesize_measurements(const Trajectory& traj, double dt, double noise_rms_fraction,
                                   std::uint64_t seed) {
  TimeSeries ts = traj.outputs_series(dt);
  if (noise_rms_fraction == 0.0) return ts;
  NormalSampler normal(seed);
  const std::size_t nch = ts.channels();
  std::vector<double> sigma(nch);
  for (std::size_t c = 0; c < nch; ++c) sigma[c] = noise_rms_fraction * ts.rms(c);
  for (auto& row : ts.values) {
    for (std::size_t c = 0; c < nch; ++c) row[c] += sigma[c] * normal.next();
  }
  return ts;
}

TimeSeries add_noise_absolute(const TimeSeries& in, double sigma, std::uint64_t seed) {
  TimeSeries ts = in;
  NormalSampler normal(seed);
  for (auto& row : ts.values) {
    for (double& v : row) v += sigma * normal.next();
  }
  return ts;
}

// -- CSV ------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void store_series(const TimeSeries& ts, const std::string& path,
                  const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw SeriesParseError("cannot open '" + path + "' for writing");
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << 't';
  for (std::size_t c = 0; c < ts.channels(); ++c) {
    out << ',';
    if (c < ts.channel_names.size() && !ts.channel_names[c].empty()) {
      out << ts.channel_names[c];
    } else {
      out << "ch" << c;
    }
  }
  out << '\n';
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out << format_double(ts.t0 + ts.dt * static_cast<double>(i));
    for (double v : ts.values[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

TimeSeries load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SeriesParseError("cannot open '" + path + "'");
  TimeSeries ts;
  std::string line;
  std::vector<double> times;
  bool header_done = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header_done) {
      if (cells.empty() || cells[0] != "t") {
        throw SeriesParseError("expected header starting with 't' in " + path);
      }
      ts.channel_names.assign(cells.begin() + 1, cells.end());
      header_done = true;
      continue;
    }
    if (cells.size() != ts.channel_names.size() + 1) {
      throw SeriesParseError("row " + std::to_string(lineno) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(ts.channel_names.size() + 1));
    }
    try {
      times.push_back(std::stod(cells[0]));
      std::vector<double> row;
      for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(std::stod(cells[c]));
      ts.values.push_back(std::move(row));
    } catch (const std::exception&) {
      throw SeriesParseError("bad numeric cell at row " + std::to_string(lineno));
    }
  }
  if (ts.values.empty()) throw SeriesParseError("empty series in " + path);
  ts.t0 = times.front();
  if (times.size() > 1) {
    ts.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (ts.dt <= 0) throw NonUniformSamplingError("time column is not increasing");
    for (std::size_t i = 0; i < times.size(); ++i) {
      double expected = ts.t0 + ts.dt * static_cast<double>(i);
      if (std::abs(times[i] - expected) > 1e-6 * std::max(ts.dt, 1.0)) {
        throw NonUniformSamplingError("non-uniform sampling at row " + std::to_string(i + 1));
      }
    }
  }
  return ts;
}

void store_trajectory(const Trajectory& traj, const ModelDef& m, const std::string& path,
                      const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw SeriesParseError("cannot open '" + path + "' for writing");
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << 't';
  for (SymbolId s : m.states) out << ',' << symbol_name(s);
  for (const std::string& n : m.output_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << format_double(traj.times[i]);
    for (double v : traj.states[i]) out << ',' << format_double(v);
    for (double v : traj.outputs[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

TimeSeries synthetic_ground_motion(double dt, double duration, double peak, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(duration / dt) + 1;
  NormalSampler normal(seed);
  // white noise through a light two-pole bandpass, then an attack/decay
  // envelope
  std::vector<double> a(n, 0.0);
  double lp = 0, lp2 = 0;
  const double f_hi = std::exp(-2.0 * M_PI * 8.0 * dt);   // ~8 Hz rolloff
  const double f_lo = std::exp(-2.0 * M_PI * 0.3 * dt);   // ~0.3 Hz highpass
  for (std::size_t i = 0; i < n; ++i) {
    double wn = normal.next();
    lp = f_hi * lp + (1 - f_hi) * wn;
    lp2 = f_lo * lp2 + (1 - f_lo) * lp;
    a[i] = lp - lp2;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double t = dt * static_cast<double>(i);
    double rise = 1.0 - std::exp(-t / (0.1 * duration));
    double decay = std::exp(-std::max(0.0, t - 0.6 * duration) / (0.2 * duration));
    a[i] *= rise * decay;
  }
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  TimeSeries ts = TimeSeries::zeros(0.0, dt, n, 1);
  ts.channel_names = {"ug"};
  for (std::size_t i = 0; i < n; ++i) ts.values[i][0] = a[i] * (m > 0 ? peak / m : 0.0);
  return ts;
}

}  // namespace obsym
