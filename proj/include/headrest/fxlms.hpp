#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "headrest/acoustics.hpp"
#include "headrest/head_scene.hpp"

namespace headrest {

/// Band over which the controller is trained and evaluated.
inline constexpr double kBandLowHz = 80.0;
inline constexpr double kBandHighHz = 2000.0;

struct FxlmsConfig {
  double step_size = 0.005;                 // normalised by filtered-reference energy
  std::size_t filter_taps = 256;
  double leak = 0.0;
  std::size_t max_iterations = 240000;      // 30 s at 8 kHz
  std::size_t convergence_window = 4000;
  double convergence_epsilon = 1e-4;        // relative weight change per window
  std::size_t secondary_model_taps = 128;
  double secondary_gain_error = 1.0;        // multiplicative error on the S estimate
  int secondary_delay_error = 0;            // samples of extra delay on the S estimate

  void validate() const;
};

/// Acoustic paths seen by one controller: source -> each error sensor,
/// each loudspeaker -> each sensor, and source -> reference microphone.
struct PlantSet {
  std::vector<FirPath> primary;                 // [sensor]
  std::vector<std::vector<FirPath>> secondary;  // [speaker][sensor]
  FirPath reference;

  std::size_t sensors() const { return primary.size(); }
  std::size_t speakers() const { return secondary.size(); }
  double sample_rate() const { return reference.sample_rate; }
  void validate() const;
};

/// Paths of `scene` with error sensors at `error_points` (stage frame).
PlantSet derive_plant(const AcousticScene& scene, std::span<const Vec3> error_points);

/// Per-speaker FIR taps applied to the reference signal.
struct ControlFilter {
  std::vector<Eigen::VectorXd> taps;  // [speaker]
  GridIndex trained_at;
  double residual_power_db = 0.0;     // residual / uncontrolled power over the last window
  bool converged = false;

  std::size_t channels() const { return taps.size(); }
  std::size_t length() const { return taps.empty() ? 0 : static_cast<std::size_t>(taps.front().size()); }
};

struct TrainingResult {
  ControlFilter filter;
  std::vector<double> window_residual_db;  // one entry per convergence window
  std::size_t iterations = 0;
};

/// Multichannel normalised filtered-x LMS driven by `source_noise` at the
/// primary source. Throws Error(Diverged) if a window's residual rises
/// 20 dB above the best window so far.
TrainingResult run_fxlms(const PlantSet& plant, const Signal& source_noise, const FxlmsConfig& cfg);

/// As run_fxlms with 80-2000 Hz band noise of max_iterations samples.
ControlFilter train_fxlms(const PlantSet& plant, std::uint64_t noise_seed, const FxlmsConfig& cfg);

/// Frequency-domain optimum W(f) = -(S^H S + beta I)^-1 S^H P / R per bin
/// (exactly -P / (S R) for one speaker and one sensor).
struct OracleResponse {
  Eigen::VectorXd frequencies;
  std::vector<Eigen::VectorXcd> filters;  // [bin] -> per-speaker response
};

OracleResponse wiener_oracle(const PlantSet& plant, std::span<const double> frequencies);
OracleResponse wiener_oracle(const PlantSet& plant, double lo, double hi, double resolution = 7.8125);

/// Secondary-path model used by the trainer: exact copy truncated to
/// `secondary_model_taps`, with the configured perturbation applied.
Eigen::VectorXd secondary_estimate(const FirPath& path, const FxlmsConfig& cfg);

}  // namespace headrest
