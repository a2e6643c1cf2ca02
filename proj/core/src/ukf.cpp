#include "obsym/ukf.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace obsym {

UkfConfig ukf_noise_preset(double y_rms, int n_dyn, int n_coeff, int n_out) {
  UkfConfig cfg;
  const int nq = n_dyn + n_coeff;
  cfg.q0_diag.resize(nq);
  double state_var = std::pow(1e-4 * y_rms, 2);
  for (int i = 0; i < n_dyn; ++i) cfg.q0_diag(i) = state_var;
  for (int i = n_dyn; i < nq; ++i) cfg.q0_diag(i) = 2e-5;
  cfg.r0_diag = Eigen::VectorXd::Constant(n_out, std::pow(2e-2 * y_rms, 2));
  cfg.p0_diag.resize(nq);
  for (int i = 0; i < n_dyn; ++i) cfg.p0_diag(i) = state_var;
  for (int i = n_dyn; i < nq; ++i) cfg.p0_diag(i) = 2e-4;
  return cfg;
}

SigmaPoints sigma_points(const Eigen::VectorXd& mean, const Eigen::MatrixXd& p_aug, double kappa,
                         double jitter0, double jitter_max) {
  const int n = static_cast<int>(mean.size());
  Eigen::MatrixXd scaled = (n + kappa) * p_aug;
  Eigen::MatrixXd root;
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd attempt = scaled;
    if (jitter > 0) attempt += jitter * (n + kappa) * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(attempt);
    if (llt.info() == Eigen::Success) {
      root = llt.matrixL();
      break;
    }
    jitter = jitter == 0.0 ? jitter0 : jitter * 10.0;
    if (jitter > jitter_max) throw CholeskyFailureError();
  }
  SigmaPoints sp;
  sp.points.resize(n, 2 * n + 1);
  sp.points.col(0) = mean;
  for (int j = 0; j < n; ++j) {
    sp.points.col(1 + j) = mean + root.col(j);
    sp.points.col(1 + n + j) = mean - root.col(j);
  }
  sp.weights.resize(2 * n + 1);
  sp.weights(0) = kappa / (n + kappa);
  for (int j = 1; j <= 2 * n; ++j) sp.weights(j) = 0.5 / (n + kappa);
  return sp;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> adapt_noise(const Eigen::MatrixXd& q,
                                                        const Eigen::MatrixXd& r,
                                                        const Eigen::VectorXd& innovation,
                                                        const Eigen::MatrixXd& gain,
                                                        double alpha_q, double alpha_r) {
  Eigen::VectorXd kd = gain * innovation;
  Eigen::MatrixXd q2 = (1.0 - alpha_q) * q + alpha_q * (kd * kd.transpose());
  Eigen::MatrixXd r2 =
      (1.0 - alpha_r) * r + alpha_r * (innovation * innovation.transpose());
  return {0.5 * (q2 + q2.transpose()), 0.5 * (r2 + r2.transpose())};
}

UkfState ukf_step(const UkfState& s, const UkfSystem& sys, double t, double dt,
                  const Eigen::VectorXd& y, const UkfConfig& cfg) {
  const int nq = sys.state_dim();
  const int ny = sys.output_dim();
  const int n_aug = nq + nq + ny;  // q, v_F, v_H
  const double kappa = cfg.kappa_for(n_aug);

  auto block_diag = [&](const Eigen::MatrixXd& p) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_aug, n_aug);
    out.topLeftCorner(nq, nq) = p;
    out.block(nq, nq, nq, nq) = s.Q;
    out.bottomRightCorner(ny, ny) = s.R;
    return out;
  };
  Eigen::VectorXd mean_aug = Eigen::VectorXd::Zero(n_aug);
  mean_aug.head(nq) = s.mean;

  // prediction
  SigmaPoints sp = sigma_points(mean_aug, block_diag(s.P), kappa, cfg.jitter0, cfg.jitter_max);
  const int n_sigma = static_cast<int>(sp.points.cols());
  Eigen::MatrixXd propagated(nq, n_sigma);
  const double h = dt / cfg.substeps;
  std::vector<double> state(nq), k1(nq), k2(nq), k3(nq), k4(nq), tmp(nq);
  for (int j = 0; j < n_sigma; ++j) {
    Eigen::VectorXd q = sp.points.col(j).head(nq);
    Eigen::VectorXd vf = sp.points.col(j).segment(nq, nq);
    for (int i = 0; i < nq; ++i) state[i] = q(i);
    double tj = t;
    for (int step = 0; step < cfg.substeps; ++step) {
      sys.deriv(tj, state, k1);
      for (int i = 0; i < nq; ++i) tmp[i] = state[i] + 0.5 * h * (k1[i] + vf(i));
      sys.deriv(tj + 0.5 * h, tmp, k2);
      for (int i = 0; i < nq; ++i) tmp[i] = state[i] + 0.5 * h * (k2[i] + vf(i));
      sys.deriv(tj + 0.5 * h, tmp, k3);
      for (int i = 0; i < nq; ++i) tmp[i] = state[i] + h * (k3[i] + vf(i));
      sys.deriv(tj + h, tmp, k4);
      for (int i = 0; i < nq; ++i) {
        state[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i] + 6.0 * vf(i));
      }
      tj += h;
    }
    for (int i = 0; i < nq; ++i) {
      if (!std::isfinite(state[i]) || std::abs(state[i]) > 1e12) {
        throw NonFiniteStateError(tj);
      }
      propagated(i, j) = state[i];
    }
  }
  Eigen::VectorXd prior_mean = propagated * sp.weights;
  Eigen::MatrixXd centered = propagated.colwise() - prior_mean;
  Eigen::MatrixXd prior_p = Eigen::MatrixXd::Zero(nq, nq);
  for (int j = 0; j < n_sigma; ++j) {
    prior_p += sp.weights(j) * centered.col(j) * centered.col(j).transpose();
  }
  prior_p = 0.5 * (prior_p + prior_p.transpose());

  // measurement: regenerate sigma points around the prior
  Eigen::VectorXd mean_aug2 = Eigen::VectorXd::Zero(n_aug);
  mean_aug2.head(nq) = prior_mean;
  SigmaPoints sp2 = sigma_points(mean_aug2, block_diag(prior_p), kappa, cfg.jitter0,
                                 cfg.jitter_max);
  Eigen::MatrixXd y_sigma(ny, n_sigma);
  std::vector<double> yj(ny);
  const double t_meas = t + dt;
  for (int j = 0; j < n_sigma; ++j) {
    Eigen::VectorXd q = sp2.points.col(j).head(nq);
    Eigen::VectorXd vh = sp2.points.col(j).tail(ny);
    for (int i = 0; i < nq; ++i) state[i] = q(i);
    sys.output(t_meas, state, yj);
    for (int i = 0; i < ny; ++i) y_sigma(i, j) = yj[i] + vh(i);
  }
  Eigen::VectorXd y_mean = y_sigma * sp2.weights;
  Eigen::MatrixXd y_centered = y_sigma.colwise() - y_mean;
  Eigen::MatrixXd q_centered =
      sp2.points.topRows(nq).colwise() - prior_mean;
  Eigen::MatrixXd p_yy = Eigen::MatrixXd::Zero(ny, ny);
  Eigen::MatrixXd p_qy = Eigen::MatrixXd::Zero(nq, ny);
  for (int j = 0; j < n_sigma; ++j) {
    p_yy += sp2.weights(j) * y_centered.col(j) * y_centered.col(j).transpose();
    p_qy += sp2.weights(j) * q_centered.col(j) * y_centered.col(j).transpose();
  }
  p_yy = 0.5 * (p_yy + p_yy.transpose());

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(p_yy, Eigen::ComputeThinU | Eigen::ComputeThinV);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smin > 0) || smax / smin > 1e14) throw InnovationCovarianceSingularError();
  Eigen::MatrixXd gain = p_qy * svd.solve(Eigen::MatrixXd::Identity(ny, ny));

  Eigen::VectorXd innovation = y - y_mean;
  UkfState out;
  out.innovation = innovation;
  out.mean = prior_mean + gain * innovation;
  Eigen::MatrixXd post_p = prior_p - gain * p_yy * gain.transpose();
  out.P = 0.5 * (post_p + post_p.transpose());
  std::tie(out.Q, out.R) = adapt_noise(s.Q, s.R, innovation, gain, cfg.alpha_q, cfg.alpha_r);
  out.step = s.step + 1;
  return out;
}

// -- joint estimation -----------------------------------------------------------

namespace {

/// Compiled dynamics/outputs over [dyn states, parameter values, inputs],
/// with unknown parameters fed as alpha * eta0.
class JointSystem : public UkfSystem {
 public:
  JointSystem(const ModelDef& m, const std::vector<SymbolId>& unknowns, const Binding& truth,
              const Binding& known_values, const InputMap& inputs)
      : model_(m), unknowns_(unknowns), inputs_(&inputs) {
    n_dyn_ = static_cast<int>(m.states.size());
    n_coeff_ = static_cast<int>(unknowns.size());
    n_out_ = static_cast<int>(m.outputs.size());

    std::vector<SymbolId> args = m.states;
    for (SymbolId p : unknowns) args.push_back(p);
    Binding cb = m.constants_binding();
    for (SymbolId p : m.parameters) {
      if (std::find(unknowns.begin(), unknowns.end(), p) != unknowns.end()) continue;
      auto v = known_values.get(p);
      if (!v) v = cb.get(p);
      if (!v) throw MissingConstantError(symbol_name(p));
      known_syms_.push_back(p);
      known_vals_.push_back(*v);
      args.push_back(p);
    }
    for (SymbolId s : m.measured_inputs) {
      input_syms_.push_back(s);
      args.push_back(s);
    }
    for (SymbolId s : m.unmeasured_inputs) {
      input_syms_.push_back(s);
      args.push_back(s);
    }
    for (SymbolId s : input_syms_) {
      if (!inputs.count(s)) throw ModelError("no input series for '" + symbol_name(s) + "'");
    }
    // stand-alone constants referenced by the expressions
    for (const auto& [s, r] : m.constants) {
      if (std::find(args.begin(), args.end(), s) == args.end()) {
        known_syms_.push_back(s);
        known_vals_.push_back(static_cast<double>(r));
        args.push_back(s);
      }
    }
    eta0_.resize(n_coeff_);
    for (int i = 0; i < n_coeff_; ++i) {
      auto v = truth.get(unknowns[i]);
      if (!v) v = cb.get(unknowns[i]);
      if (!v) throw MissingConstantError(symbol_name(unknowns[i]));
      eta0_(i) = *v;
    }
    f_ = CompiledFunction::compile(m.dynamics, args);
    h_ = CompiledFunction::compile(m.outputs, args);
    arg_.resize(args.size());
    scratch_.resize(std::max(f_.register_count(), h_.register_count()));
    // preload known parameter values
    for (std::size_t i = 0; i < known_syms_.size(); ++i) {
      arg_[n_dyn_ + n_coeff_ + i] = known_vals_[i];
    }
  }

  int state_dim() const override { return n_dyn_ + n_coeff_; }
  int output_dim() const override { return n_out_; }
  const Eigen::VectorXd& eta0() const { return eta0_; }
  int dyn_dim() const { return n_dyn_; }
  int coeff_dim() const { return n_coeff_; }

  void deriv(double t, std::span<const double> q, std::span<double> dq) const override {
    fill_args(t, q);
    f_.eval(arg_, dq.subspan(0, n_dyn_), scratch_);
    for (int i = 0; i < n_coeff_; ++i) dq[n_dyn_ + i] = 0.0;  // coefficients are constant
  }

  void output(double t, std::span<const double> q, std::span<double> y) const override {
    fill_args(t, q);
    h_.eval(arg_, y, scratch_);
  }

 private:
  void fill_args(double t, std::span<const double> q) const {
    for (int i = 0; i < n_dyn_; ++i) arg_[i] = q[i];
    for (int i = 0; i < n_coeff_; ++i) arg_[n_dyn_ + i] = q[n_dyn_ + i] * eta0_(i);
    std::size_t base = n_dyn_ + n_coeff_ + known_syms_.size();
    for (std::size_t j = 0; j < input_syms_.size(); ++j) {
      const InputSignal& in = inputs_->at(input_syms_[j]);
      arg_[base + j] = in.series.sample(in.channel, t);
    }
  }

  const ModelDef& model_;
  std::vector<SymbolId> unknowns_;
  const InputMap* inputs_;
  std::vector<SymbolId> known_syms_;
  std::vector<double> known_vals_;
  std::vector<SymbolId> input_syms_;
  Eigen::VectorXd eta0_;
  CompiledFunction f_, h_;
  int n_dyn_ = 0, n_coeff_ = 0, n_out_ = 0;
  mutable std::vector<double> arg_;
  mutable std::vector<double> scratch_;
};

}  // namespace

EstimationRecord run_joint_estimation(const ModelDef& model, const TimeSeries& measurements,
                                      const InputMap& inputs, const EstimationOptions& opts) {
  if (measurements.channels() != model.outputs.size()) {
    throw ModelError("measurement channel count does not match model outputs");
  }

  if (!opts.skip_observability_check) {
    DerivativeDefinition def = opts.gate_definition;
    if (opts.gate_definition_auto) {
      def = model.unmeasured_inputs.empty() ? DerivativeDefinition::AffineNoInput
                                            : DerivativeDefinition::AffineWithInputs;
    }
    AugmentedModel am = augment_parameters(model, opts.unknowns);
    ObservabilityReport rep;
    try {
      rep = analyze(am, def, opts.gate);
    } catch (const DefinitionNotApplicableError&) {
      rep = analyze(am, DerivativeDefinition::GeneralExtended, opts.gate);
    }
    if (!rep.practically_observable) {
      std::ostringstream detail;
      detail << "deficiency " << rep.deficiency << ", unobservable:";
      for (SymbolId s : rep.unobservable_states()) detail << ' ' << symbol_name(s);
      throw ObservabilityRefusedError(detail.str());
    }
  }

  JointSystem sys(model, opts.unknowns, opts.truth, opts.known_values, inputs);
  const int n_dyn = sys.dyn_dim();
  const int n_coeff = sys.coeff_dim();
  const int nq = n_dyn + n_coeff;
  const int ny = sys.output_dim();

  UkfConfig cfg = opts.ukf;
  if (cfg.q0_diag.size() == 0) {
    double yr = 0;
    for (std::size_t c = 0; c < measurements.channels(); ++c) {
      yr = std::max(yr, measurements.rms(c));
    }
    cfg = ukf_noise_preset(yr, n_dyn, n_coeff, ny);
    cfg.kappa = opts.ukf.kappa;
    cfg.alpha_q = opts.ukf.alpha_q;
    cfg.alpha_r = opts.ukf.alpha_r;
    cfg.substeps = opts.ukf.substeps;
  }

  UkfState state;
  state.mean = Eigen::VectorXd::Zero(nq);
  if (opts.x0.size() == n_dyn) state.mean.head(n_dyn) = opts.x0;
  if (opts.alpha0.size() == n_coeff) {
    state.mean.tail(n_coeff) = opts.alpha0;
  } else {
    state.mean.tail(n_coeff).setOnes();
  }
  state.P = cfg.p0_diag.asDiagonal();
  state.Q = cfg.q0_diag.asDiagonal();
  state.R = cfg.r0_diag.asDiagonal();

  EstimationRecord rec;
  rec.dyn_states = model.states;
  rec.unknowns = opts.unknowns;
  rec.output_names = model.output_names;
  rec.config = cfg;

  rec.times.push_back(measurements.t0);
  rec.means.push_back(state.mean);
  rec.trace_p.push_back(state.P.trace());
  rec.innovations.push_back(Eigen::VectorXd::Zero(ny));

  const double dt = measurements.dt;
  for (std::size_t i = 0; i + 1 < measurements.size(); ++i) {
    double t = measurements.t0 + dt * static_cast<double>(i);
    Eigen::VectorXd y(ny);
    for (int c = 0; c < ny; ++c) y(c) = measurements.values[i + 1][c];
    state = ukf_step(state, sys, t, dt, y, cfg);
    rec.times.push_back(t + dt);
    rec.means.push_back(state.mean);
    rec.trace_p.push_back(state.P.trace());
    rec.innovations.push_back(state.innovation);
  }

  rec.final_alpha = state.mean.tail(n_coeff);

  // convergence step: first index after which every alpha stays within 5% of
  // its final value
  rec.convergence_step = 0;
  for (int i = static_cast<int>(rec.means.size()) - 1; i >= 0; --i) {
    Eigen::VectorXd a = rec.means[i].tail(n_coeff);
    bool inside = true;
    for (int c = 0; c < n_coeff; ++c) {
      double ref = std::abs(rec.final_alpha(c)) > 1e-12 ? std::abs(rec.final_alpha(c)) : 1.0;
      if (std::abs(a(c) - rec.final_alpha(c)) > 0.05 * ref) {
        inside = false;
        break;
      }
    }
    if (!inside) {
      rec.convergence_step = i + 1;
      break;
    }
  }
  return rec;
}

// -- export -----------------------------------------------------------------------

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}
}  // namespace

std::string EstimationRecord::to_csv(const std::string& header_comment) const {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << 't';
  for (SymbolId s : dyn_states) out << ',' << symbol_name(s);
  for (SymbolId s : unknowns) out << ",alpha_" << symbol_name(s);
  out << ",trace_P";
  for (std::size_t c = 0; c < output_names.size(); ++c) out << ",innov_" << output_names[c];
  out << '\n';
  for (std::size_t i = 0; i < times.size(); ++i) {
    out << fmt(times[i]);
    for (int j = 0; j < means[i].size(); ++j) out << ',' << fmt(means[i](j));
    out << ',' << fmt(trace_p[i]);
    for (int j = 0; j < innovations[i].size(); ++j) out << ',' << fmt(innovations[i](j));
    out << '\n';
  }
  return out.str();
}

std::string EstimationRecord::summary_json() const {
  nlohmann::json j;
  std::vector<std::string> names;
  for (SymbolId s : unknowns) names.push_back(symbol_name(s));
  j["unknowns"] = names;
  std::vector<double> fa(final_alpha.data(), final_alpha.data() + final_alpha.size());
  j["final_alpha"] = fa;
  j["convergence_step"] = convergence_step;
  j["steps"] = times.size();
  j["config"]["kappa"] = config.kappa;
  j["config"]["alpha_q"] = config.alpha_q;
  j["config"]["alpha_r"] = config.alpha_r;
  j["config"]["substeps"] = config.substeps;
  return j.dump(2);
}

TimeSeries EstimationRecord::states_series(double dt) const {
  TimeSeries ts;
  ts.t0 = times.empty() ? 0 : times.front();
  ts.dt = dt;
  for (SymbolId s : dyn_states) ts.channel_names.push_back(symbol_name(s));
  const int n_dyn = static_cast<int>(dyn_states.size());
  for (const auto& m : means) {
    std::vector<double> row(n_dyn);
    for (int i = 0; i < n_dyn; ++i) row[i] = m(i);
    ts.values.push_back(std::move(row));
  }
  return ts;
}

}  // namespace obsym
