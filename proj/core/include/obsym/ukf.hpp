#pragma once

#include <Eigen/Dense>
#include <limits>

#include "obsym/observability.hpp"
#include "obsym/simulate.hpp"

namespace obsym {

struct CholeskyFailureError : ModelError {
  CholeskyFailureError() : ModelError("sigma-point square root failed after jitter escalation") {}
};

struct InnovationCovarianceSingularError : ModelError {
  InnovationCovarianceSingularError()
      : ModelError("innovation covariance is numerically singular") {}
};

struct ObservabilityRefusedError : ModelError {
  explicit ObservabilityRefusedError(const std::string& detail)
      : ModelError("estimation refused: input-output mapping is unobservable (" + detail + ")") {}
};

struct UkfConfig {
  /// Scaling parameter; any value with N + kappa > 0. NaN selects the 3 - N
  /// default.
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double alpha_q = 1.0 / 30.0;
  double alpha_r = 1.0 / 30.0;
  Eigen::VectorXd q0_diag;  // process noise, per augmented-state component
  Eigen::VectorXd r0_diag;  // measurement noise, per output
  Eigen::VectorXd p0_diag;  // initial error covariance
  int substeps = 30;
  double jitter0 = 1e-12;
  double jitter_max = 1e-6;

  double kappa_for(int n) const {
    double k = std::isnan(kappa) ? 3.0 - n : kappa;
    if (n + k <= 0) k = 0.0;  // guard the N + kappa > 0 rule
    return k;
  }
};

/// Noise preset scaled to the measured-output rms: process std 1e-4 rms(y)
/// per dynamic state and variance 2e-5 per normalized coefficient,
/// measurement std 2e-2 rms(y), initial coefficient covariance 2e-4.
UkfConfig ukf_noise_preset(double y_rms, int n_dyn, int n_coeff, int n_out);

struct SigmaPoints {
  Eigen::MatrixXd points;   // N x (2N+1)
  Eigen::VectorXd weights;  // 2N+1
};

/// Symmetric sigma set: mean +/- columns of sqrt((N+kappa) P), weights
/// W0 = kappa/(N+kappa), Wj = 1/(2(N+kappa)). The Cholesky gets escalating
/// diagonal jitter before failing.
SigmaPoints sigma_points(const Eigen::VectorXd& mean, const Eigen::MatrixXd& p_aug, double kappa,
                         double jitter0 = 1e-12, double jitter_max = 1e-6);

/// Convex-combination noise adaptation:
/// Q' = (1-aQ) Q + aQ K d d' K',  R' = (1-aR) R + aR d d'.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> adapt_noise(const Eigen::MatrixXd& q,
                                                        const Eigen::MatrixXd& r,
                                                        const Eigen::VectorXd& innovation,
                                                        const Eigen::MatrixXd& gain,
                                                        double alpha_q, double alpha_r);

struct UkfState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd P;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::VectorXd innovation;  // y - y_hat of the step that produced this state
  int step = 0;
};

/// Continuous-time system view used by the filter: q' = F(q, u) + v_F,
/// y = H(q, u) + v_H, with the fully augmented [q; v_F; v_H] sigma vector.
class UkfSystem {
 public:
  virtual ~UkfSystem() = default;
  virtual int state_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual void deriv(double t, std::span<const double> q, std::span<double> dq) const = 0;
  virtual void output(double t, std::span<const double> q, std::span<double> y) const = 0;
};

/// One full predict/update/adapt cycle over the measurement interval
/// [t, t + dt] with `substeps` RK4 steps per sigma point.
UkfState ukf_step(const UkfState& s, const UkfSystem& sys, double t, double dt,
                  const Eigen::VectorXd& y, const UkfConfig& cfg);

struct EstimationOptions {
  UkfConfig ukf;
  std::vector<SymbolId> unknowns;
  /// Reference values eta_0 for the normalized coefficients; defaults to the
  /// model constants.
  Binding truth;
  /// Known-parameter values the filter believes (defaults to model
  /// constants; pass perturbed values to study model error).
  Binding known_values;
  Eigen::VectorXd alpha0;  // initial normalized coefficients (default: ones)
  Eigen::VectorXd x0;      // initial dynamic state (default: zeros)
  bool skip_observability_check = false;
  DerivativeDefinition gate_definition = DerivativeDefinition::AffineNoInput;
  bool gate_definition_auto = true;
  AnalyzeOptions gate;
};

struct EstimationRecord {
  std::vector<double> times;
  std::vector<SymbolId> dyn_states;
  std::vector<SymbolId> unknowns;
  std::vector<std::string> output_names;
  std::vector<Eigen::VectorXd> means;        // dyn + coeff
  std::vector<Eigen::VectorXd> innovations;  // per step
  std::vector<double> trace_p;
  Eigen::VectorXd final_alpha;
  int convergence_step = -1;  // first step after which every alpha stays
                              // within 5% of its final value
  UkfConfig config;

  std::string to_csv(const std::string& header_comment = "") const;
  std::string summary_json() const;
  /// Dynamic-state trajectory as a time series (for aux reconstruction).
  TimeSeries states_series(double dt) const;
};

/// Joint state/parameter estimation with the normalized-coefficient
/// parameterization: the filter state carries alpha_p with p = alpha_p *
/// eta0_p. Refuses to run on an unobservable mapping unless overridden.
EstimationRecord run_joint_estimation(const ModelDef& model, const TimeSeries& measurements,
                                      const InputMap& inputs, const EstimationOptions& opts);

}  // namespace obsym
