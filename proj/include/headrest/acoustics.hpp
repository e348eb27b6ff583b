#pragma once

#include <array>
#include <complex>
#include <cstdint>

#include <Eigen/Core>

#include "headrest/geometry.hpp"

namespace headrest {

/// Uniformly sampled real signal.
struct Signal {
  Eigen::VectorXd samples;
  double sample_rate = 8000.0;

  Eigen::Index size() const { return samples.size(); }
};

/// Free-field layout of the active headrest, stage frame (see StageCalibration).
struct AcousticScene {
  Vec3 primary_source;
  std::array<Vec3, 2> secondary_sources;  // left, right loudspeaker
  Vec3 reference_mic;
  double sample_rate = 8000.0;
  double speed_of_sound = 343.0;

  void validate() const;
  /// Primary source 1.5 m from the initial head centre on the median plane,
  /// reference microphone 0.2 m in front of it, loudspeakers beside the ears.
  static AcousticScene default_headrest();
};

/// Finite impulse response of one acoustic transfer path.
struct FirPath {
  Eigen::VectorXd taps;
  double sample_rate = 8000.0;
};

struct Spectrum {
  Eigen::VectorXd frequencies;  // Hz, ascending
  Eigen::VectorXd levels;       // dB re full scale
};

inline constexpr int kFractionalDelayTaps = 33;
inline constexpr double kMinPathDistance = 1e-3;
inline constexpr double kSpectrumFloorDb = -120.0;

/// Free-field path src -> rcv: gain 1/d and a Hann-windowed sinc delay of
/// d/c seconds. Kernel taps falling before t = 0 are dropped.
FirPath impulse_response(const Vec3& src, const Vec3& rcv, const AcousticScene& scene);

/// Linear convolution truncated to the input length.
Signal propagate(const Signal& signal, const FirPath& path);

/// Unit-RMS Gaussian noise restricted to [lo, hi] Hz by zeroing spectral bins.
Signal band_noise(double lo, double hi, double duration, std::uint64_t seed, double sample_rate = 8000.0);

Signal tone(double frequency, double duration, double sample_rate = 8000.0, double amplitude = 1.0,
            double phase = 0.0);

/// A-weighting in dB, exactly 0 dB at 1 kHz.
double a_weight_gain(double frequency);

/// Welch power per bin (Hann window, 50 % overlap), one-sided, bins 0..n/2.
Eigen::VectorXd welch_power(const Signal& signal, Eigen::Index segment_length);

/// 10 log10 of the ratio of A-weighted in-band powers before/after control.
double noise_reduction_dba(const Signal& before, const Signal& after, double lo, double hi);

/// Averaged periodogram at `resolution` Hz bin spacing, floored at -120 dB.
Spectrum spl_spectrum(const Signal& signal, double resolution);

/// Complex frequency response of an FIR at `frequency`.
std::complex<double> frequency_response(const Eigen::VectorXd& taps, double frequency, double sample_rate);

}  // namespace headrest
