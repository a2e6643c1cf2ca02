#pragma once

#include <string>
#include <unordered_map>

#include "obsym/compiled.hpp"
#include "obsym/model.hpp"

namespace obsym {

struct NonFiniteStateError : ModelError {
  explicit NonFiniteStateError(double t)
      : ModelError("state diverged (non-finite or > 1e12) at t = " + std::to_string(t)),
        time(t) {}
  double time;
};

struct NonUniformSamplingError : ModelError {
  using ModelError::ModelError;
};

struct SeriesParseError : ModelError {
  using ModelError::ModelError;
};

/// Uniformly sampled multichannel signal.
struct TimeSeries {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> values;  // [step][channel]

  std::size_t size() const { return values.size(); }
  std::size_t channels() const { return values.empty() ? 0 : values[0].size(); }
  double t_end() const { return size() ? t0 + dt * (size() - 1) : t0; }

  /// Linear interpolation, clamped at the ends.
  double sample(std::size_t channel, double t) const;

  double rms(std::size_t channel) const;

  static TimeSeries zeros(double t0, double dt, std::size_t steps, std::size_t channels);
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> outputs;

  TimeSeries outputs_series(double dt) const;
};

/// One input signal: a series plus the channel to read.
struct InputSignal {
  TimeSeries series;
  std::size_t channel = 0;
};
using InputMap = std::unordered_map<SymbolId, InputSignal>;

/// Classical fixed-step RK4 at step dt/substeps with inputs linearly
/// interpolated between their samples. Missing model inputs must be covered
/// by `inputs`; `params` covers the declared parameters.
Trajectory integrate(const ModelDef& m, const Binding& params, const InputMap& inputs,
                     std::span<const double> x0, double dt, double t_end, int substeps = 1);

/// Outputs plus zero-mean Gaussian noise with per-channel standard deviation
/// noise_rms_fraction * rms(channel); deterministic in the seed.
TimeSeries synthesize_measurements(const Trajectory& traj, double dt, double noise_rms_fraction,
                                   std::uint64_t seed);

/// Absolute-sigma variant (same sigma for every channel).
TimeSeries add_noise_absolute(const TimeSeries& ts, double sigma, std::uint64_t seed);

TimeSeries load_series(const std::string& path);
void store_series(const TimeSeries& ts, const std::string& path,
                  const std::string& header_comment = "");

void store_trajectory(const Trajectory& traj, const ModelDef& m, const std::string& path,
                      const std::string& header_comment = "");

/// Deterministic standard normal driven by a 64-bit generator state
/// (Box-Muller; identical across platforms for a given seed).
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}
  double next();

 private:
  double uniform();
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Band-limited enveloped noise record for synthetic strong-motion tests.
TimeSeries synthetic_ground_motion(double dt, double duration, double peak, std::uint64_t seed);

}  // namespace obsym
