#include "headrest/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "headrest/rng.hpp"

namespace headrest {

namespace {

constexpr double kPi = std::numbers::pi;

double sinc(double t) { return std::abs(t) < 1e-12 ? 1.0 : std::sin(kPi * t) / (kPi * t); }

double hann_taper(double t, double half_width) {
  return std::abs(t) >= half_width ? 0.0 : 0.5 * (1.0 + std::cos(kPi * t / half_width));
}

void require_positive_rate(double rate) {
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
}

}  // namespace

void AcousticScene::validate() const {
  if (!(speed_of_sound > 0.0)) throw Error(ErrorCode::InvalidArgument, "speed of sound must be positive");
  // Analysis band tops out at 2 kHz.
  if (!(sample_rate >= 4000.0)) throw Error(ErrorCode::InvalidArgument, "sample rate below twice 2 kHz");
  bool finite = primary_source.allFinite() && reference_mic.allFinite();
  for (const auto& s : secondary_sources) finite = finite && s.allFinite();
  if (!finite) throw Error(ErrorCode::InvalidArgument, "scene positions must be finite");
}

AcousticScene AcousticScene::default_headrest() {
  AcousticScene scene;
  scene.primary_source = Vec3(0.0, 1.2, -0.9);
  scene.reference_mic = scene.primary_source + 0.2 * (Vec3::Zero() - scene.primary_source).normalized();
  scene.secondary_sources = {Vec3(0.20, -0.05, 0.0), Vec3(-0.20, -0.05, 0.0)};
  return scene;
}

FirPath impulse_response(const Vec3& src, const Vec3& rcv, const AcousticScene& scene) {
  scene.validate();
  const double distance = (src - rcv).norm();
  if (!(distance >= kMinPathDistance)) {
    throw Error(ErrorCode::CoincidentPoints, "source and receiver closer than 1 mm");
  }
  const double delay = distance / scene.speed_of_sound * scene.sample_rate;
  const double gain = 1.0 / std::max(distance, kMinPathDistance);
  const int half = kFractionalDelayTaps / 2;
  const auto whole = static_cast<Eigen::Index>(std::floor(delay));

  Eigen::VectorXd taps = Eigen::VectorXd::Zero(whole + kFractionalDelayTaps);
  double kernel_sum = 0.0;
  std::array<double, kFractionalDelayTaps> kernel{};
  for (int m = -half; m <= half; ++m) {
    const double t = static_cast<double>(whole + m) - delay;
    kernel[m + half] = sinc(t) * hann_taper(t, half + 1.0);
    kernel_sum += kernel[m + half];
  }
  for (int m = -half; m <= half; ++m) {
    const Eigen::Index n = whole + m;
    if (n >= 0) taps[n] = gain * kernel[m + half] / kernel_sum;
  }
  return {std::move(taps), scene.sample_rate};
}

Signal propagate(const Signal& signal, const FirPath& path) {
  if (signal.sample_rate != path.sample_rate) {
    throw Error(ErrorCode::SampleRateMismatch, "signal and path sample rates differ");
  }
  const Eigen::Index n = signal.size();
  Signal out{Eigen::VectorXd::Zero(n), signal.sample_rate};
  const Eigen::Index taps = std::min<Eigen::Index>(path.taps.size(), n);
  for (Eigen::Index k = 0; k < taps; ++k) {
    const double h = path.taps[k];
    if (h != 0.0) out.samples.tail(n - k) += h * signal.samples.head(n - k);
  }
  return out;
}

Signal band_noise(double lo, double hi, double duration, std::uint64_t seed, double sample_rate) {
  require_positive_rate(sample_rate);
  if (!(lo > 0.0 && lo < hi && hi < sample_rate / 2.0)) {
    throw Error(ErrorCode::BandOutOfRange, "band must satisfy 0 < lo < hi < fs/2");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "duration too short");

  auto rng = make_engine(seed, 0);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::complex<double>> time(n);
  for (auto& v : time) v = unit(rng);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, time);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t folded = std::min(k, n - k);
    const double f = static_cast<double>(folded) * sample_rate / static_cast<double>(n);
    if (f < lo || f > hi) freq[k] = 0.0;
  }
  fft.inv(time, freq);

  Signal out{Eigen::VectorXd(static_cast<Eigen::Index>(n)), sample_rate};
  for (std::size_t i = 0; i < n; ++i) out.samples[static_cast<Eigen::Index>(i)] = time[i].real();
  const double rms = std::sqrt(out.samples.squaredNorm() / static_cast<double>(n));
  if (rms > 0.0) out.samples /= rms;
  return out;
}

Signal tone(double frequency, double duration, double sample_rate, double amplitude, double phase) {
  require_positive_rate(sample_rate);
  const auto n = static_cast<Eigen::Index>(std::llround(duration * sample_rate));
  Signal out{Eigen::VectorXd(n), sample_rate};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.samples[i] = amplitude * std::sin(2.0 * kPi * frequency * static_cast<double>(i) / sample_rate + phase);
  }
  return out;
}

double a_weight_gain(double frequency) {
  if (!(frequency > 0.0)) throw Error(ErrorCode::InvalidArgument, "A-weighting needs f > 0");
  const auto response = [](double f) {
    const double f2 = f * f;
    const double num = 12194.0 * 12194.0 * f2 * f2;
    const double den = (f2 + 20.6 * 20.6) * std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                       (f2 + 12194.0 * 12194.0);
    return num / den;
  };
  return 20.0 * std::log10(response(frequency) / response(1000.0));
}

Eigen::VectorXd welch_power(const Signal& signal, Eigen::Index segment_length) {
  if (segment_length < 2 || signal.size() < segment_length) {
    throw Error(ErrorCode::SignalTooShort, "signal shorter than one analysis window");
  }
  const Eigen::Index hop = std::max<Eigen::Index>(1, segment_length / 2);
  const auto len = static_cast<std::size_t>(segment_length);
  std::vector<double> window(len);
  double window_sum = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(len)));
    window_sum += window[i];
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> frame(len);
  std::vector<std::complex<double>> spectrum;
  const Eigen::Index bins = segment_length / 2 + 1;
  Eigen::VectorXd power = Eigen::VectorXd::Zero(bins);
  Eigen::Index segments = 0;
  for (Eigen::Index start = 0; start + segment_length <= signal.size(); start += hop, ++segments) {
    for (std::size_t i = 0; i < len; ++i) {
      frame[i] = window[i] * signal.samples[start + static_cast<Eigen::Index>(i)];
    }
    fft.fwd(spectrum, frame);
    for (Eigen::Index k = 0; k < bins; ++k) power[k] += std::norm(spectrum[static_cast<std::size_t>(k)]);
  }
  // Scaled so a tone centred on a bin reports its mean-square power.
  power /= static_cast<double>(segments) * window_sum * window_sum;
  power.segment(1, bins - 2) *= 2.0;
  if (segment_length % 2 != 0) power[bins - 1] *= 2.0;
  return power;
}

namespace {

double a_weighted_band_power(const Eigen::VectorXd& power, double bin_hz, double lo, double hi) {
  double total = 0.0;
  for (Eigen::Index k = 1; k < power.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f < lo || f > hi) continue;
    total += power[k] * std::pow(10.0, a_weight_gain(f) / 10.0);
  }
  return total;
}

}  // namespace

double noise_reduction_dba(const Signal& before, const Signal& after, double lo, double hi) {
  if (before.sample_rate != after.sample_rate) {
    throw Error(ErrorCode::SampleRateMismatch, "before/after sample rates differ");
  }
  if (before.size() != after.size()) throw Error(ErrorCode::InvalidArgument, "before/after lengths differ");
  if (!(lo > 0.0 && lo < hi && hi <= before.sample_rate / 2.0)) {
    throw Error(ErrorCode::BandOutOfRange, "band must satisfy 0 < lo < hi <= fs/2");
  }
  Eigen::Index segment = 1024;
  while (segment > before.size() && segment > 16) segment /= 2;
  const double bin_hz = before.sample_rate / static_cast<double>(segment);
  const double p_before = a_weighted_band_power(welch_power(before, segment), bin_hz, lo, hi);
  const double p_after = a_weighted_band_power(welch_power(after, segment), bin_hz, lo, hi);
  if (!(p_before > 0.0) || !(p_after > 0.0)) {
    throw Error(ErrorCode::ZeroPower, "no in-band power to compare");
  }
  return 10.0 * std::log10(p_before / p_after);
}

Spectrum spl_spectrum(const Signal& signal, double resolution) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  const auto segment = static_cast<Eigen::Index>(std::llround(signal.sample_rate / resolution));
  const Eigen::VectorXd power = welch_power(signal, segment);
  const double bin_hz = signal.sample_rate / static_cast<double>(segment);
  Spectrum out{Eigen::VectorXd(power.size()), Eigen::VectorXd(power.size())};
  for (Eigen::Index k = 0; k < power.size(); ++k) {
    out.frequencies[k] = static_cast<double>(k) * bin_hz;
    out.levels[k] = power[k] > 0.0 ? std::max(10.0 * std::log10(power[k]), kSpectrumFloorDb) : kSpectrumFloorDb;
  }
  return out;
}

std::complex<double> frequency_response(const Eigen::VectorXd& taps, double frequency, double sample_rate) {
  const double omega = 2.0 * kPi * frequency / sample_rate;
  std::complex<double> acc = 0.0;
  for (Eigen::Index n = 0; n < taps.size(); ++n) {
    acc += taps[n] * std::polar(1.0, -omega * static_cast<double>(n));
  }
  return acc;
}

}  // namespace headrest
