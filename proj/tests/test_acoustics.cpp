#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "headrest/acoustics.hpp"
#include "oracles.hpp"

using namespace headrest;

namespace {

constexpr double kPi = std::numbers::pi;

AcousticScene scene() { return AcousticScene::default_headrest(); }

Signal random_signal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Signal s{Eigen::VectorXd(n), 8000.0};
  for (Eigen::Index i = 0; i < n; ++i) s.samples[i] = g(rng);
  return s;
}

// Phase of x at f, from a least-squares fit of sin/cos over the given range.
double phase_at(const Eigen::VectorXd& x, double f, double fs, Eigen::Index from) {
  double c = 0.0;
  double s = 0.0;
  for (Eigen::Index n = from; n < x.size(); ++n) {
    const double w = 2.0 * kPi * f * static_cast<double>(n) / fs;
    c += x[n] * std::cos(w);
    s += x[n] * std::sin(w);
  }
  return std::atan2(c, s);  // x ~ sin(w n + phase)
}

double band_power(const Eigen::VectorXd& power, double bin_hz, double lo, double hi) {
  double p = 0.0;
  for (Eigen::Index k = 0; k < power.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= lo && f <= hi) p += power[k];
  }
  return p;
}

}  // namespace

TEST_CASE("one-sample path has its peak at tap 1 with gain 1/d") {
  auto sc = scene();
  const double d = sc.speed_of_sound / sc.sample_rate;
  const auto path = impulse_response(Vec3::Zero(), Vec3(d, 0, 0), sc);
  Eigen::Index peak = 0;
  path.taps.cwiseAbs().maxCoeff(&peak);
  CHECK(peak == 1);
  CHECK(path.taps[1] == doctest::Approx(1.0 / d).epsilon(1e-12));
  CHECK(path.taps.size() == 1 + kFractionalDelayTaps);
}

TEST_CASE("doubling distance halves gain and doubles delay") {
  auto sc = scene();
  const double d = 40 * sc.speed_of_sound / sc.sample_rate;
  const auto a = impulse_response(Vec3::Zero(), Vec3(0, d, 0), sc);
  const auto b = impulse_response(Vec3::Zero(), Vec3(0, 2 * d, 0), sc);
  Eigen::Index pa = 0;
  Eigen::Index pb = 0;
  a.taps.cwiseAbs().maxCoeff(&pa);
  b.taps.cwiseAbs().maxCoeff(&pb);
  CHECK(pa == 40);
  CHECK(pb == 80);
  CHECK(b.taps.sum() == doctest::Approx(0.5 * a.taps.sum()).epsilon(1e-12));
}

TEST_CASE("coincident points are rejected") {
  try {
    impulse_response(Vec3::Zero(), Vec3(0.0005, 0, 0), scene());
    FAIL("expected CoincidentPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CoincidentPoints);
  }
}

TEST_CASE("a 500 Hz tone is phase shifted by 2 pi f d / c") {
  auto sc = scene();
  for (double d : {0.3, 0.517, 1.234}) {
    CAPTURE(d);
    const auto path = impulse_response(Vec3::Zero(), Vec3(0, 0, d), sc);
    const Signal x = tone(500.0, 1.0, sc.sample_rate);
    const Signal y = propagate(x, path);
    const double expected = -2.0 * kPi * 500.0 * d / sc.speed_of_sound;
    const double measured = phase_at(y.samples, 500.0, sc.sample_rate, 400) - phase_at(x.samples, 500.0, sc.sample_rate, 400);
    const double diff = std::remainder(measured - expected, 2.0 * kPi);
    CHECK(std::abs(diff) < kPi / 180.0);
    // response of the path agrees with a direct DTFT
    CHECK(std::abs(frequency_response(path.taps, 500.0, sc.sample_rate) - oracle::dtft(path.taps, 500.0, sc.sample_rate)) <
          1e-12);
  }
}

TEST_CASE("propagate is convolution, linear and shift invariant") {
  std::mt19937_64 rng(1);
  const auto path = impulse_response(Vec3::Zero(), Vec3(0.2, 0.1, 0.05), scene());
  Signal impulse{Eigen::VectorXd::Zero(200), 8000.0};
  impulse.samples[0] = 1.0;
  const Signal h = propagate(impulse, path);
  CHECK((h.samples.head(path.taps.size()) - path.taps).norm() == 0.0);

  const Signal zero{Eigen::VectorXd::Zero(100), 8000.0};
  CHECK(propagate(zero, path).samples.isZero(0.0));

  const Signal a = random_signal(rng, 1000);
  const Signal b = random_signal(rng, 1000);
  const Signal sum{a.samples + b.samples, 8000.0};
  CHECK((propagate(sum, path).samples - propagate(a, path).samples - propagate(b, path).samples).cwiseAbs().maxCoeff() <
        1e-10);
  CHECK((propagate(a, path).samples - oracle::convolve(a.samples, path.taps)).cwiseAbs().maxCoeff() < 1e-12);

  Signal shifted{Eigen::VectorXd::Zero(1000), 8000.0};
  shifted.samples.tail(900) = a.samples.head(900);
  const Eigen::VectorXd ya = propagate(a, path).samples;
  const Eigen::VectorXd ys = propagate(shifted, path).samples;
  CHECK((ys.tail(900) - ya.head(900)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(propagate(Signal{a.samples, 16000.0}, path), Error);
}

TEST_CASE("band noise is band limited and seeded") {
  const Signal x = band_noise(80.0, 2000.0, 8.0, 3);
  CHECK(std::sqrt(x.samples.squaredNorm() / static_cast<double>(x.size())) == doctest::Approx(1.0));
  const Eigen::VectorXd p = welch_power(x, 1024);
  const double bin = 8000.0 / 1024.0;
  const double in = band_power(p, bin, 80.0, 2000.0) / 1920.0;
  const double out = (band_power(p, bin, 2100.0, 4000.0)) / 1900.0;
  CHECK(10.0 * std::log10(in / out) >= 40.0);
  const Eigen::Index k50 = std::lround(50.0 / bin) - 1;
  const Eigen::Index k500 = std::lround(500.0 / bin);
  CHECK(10.0 * std::log10(p[k500] / p[k50]) >= 40.0);

  CHECK(band_noise(80.0, 2000.0, 0.5, 9).samples == band_noise(80.0, 2000.0, 0.5, 9).samples);
  CHECK(band_noise(80.0, 2000.0, 0.5, 9).samples != band_noise(80.0, 2000.0, 0.5, 10).samples);
  try {
    band_noise(80.0, 4000.0, 1.0, 1);
    FAIL("expected BandOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BandOutOfRange);
  }
  CHECK_THROWS_AS(band_noise(0.0, 100.0, 1.0, 1), Error);
}

TEST_CASE("A-weighting matches the IEC reference values") {
  CHECK(a_weight_gain(1000.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(a_weight_gain(100.0) - -19.1) <= 0.1);
  CHECK(std::abs(a_weight_gain(2000.0) - 1.2) <= 0.1);
  for (double f = 20.0; f < 4000.0; f *= 1.1) CHECK(std::abs(a_weight_gain(f) - oracle::a_weighting_db(f)) < 0.01);
  CHECK_THROWS_AS(a_weight_gain(0.0), Error);
}

TEST_CASE("noise reduction metric") {
  const Signal before = band_noise(80.0, 2000.0, 2.0, 4);
  CHECK(noise_reduction_dba(before, before, 80.0, 2000.0) == doctest::Approx(0.0));
  const Signal quieter{before.samples * std::pow(10.0, -0.5), before.sample_rate};
  CHECK(noise_reduction_dba(before, quieter, 80.0, 2000.0) == doctest::Approx(10.0).epsilon(1e-3));

  const Signal scaled_b{before.samples * 37.0, before.sample_rate};
  const Signal scaled_a{quieter.samples * 37.0, before.sample_rate};
  CHECK(std::abs(noise_reduction_dba(scaled_b, scaled_a, 80, 2000) - noise_reduction_dba(before, quieter, 80, 2000)) <
        1e-9);

  const Signal hum = tone(3000.0, 2.0, 8000.0, 5.0);
  const Signal b2{before.samples + hum.samples, 8000.0};
  const Signal a2{quieter.samples + hum.samples, 8000.0};
  CHECK(std::abs(noise_reduction_dba(b2, a2, 80, 2000) - 10.0) < 0.05);

  const Signal zero{Eigen::VectorXd::Zero(before.size()), 8000.0};
  try {
    noise_reduction_dba(before, zero, 80, 2000);
    FAIL("expected ZeroPower");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroPower);
  }
}

TEST_CASE("SPL spectrum") {
  const double res = 8000.0 / 256.0;
  const Signal t = tone(40 * res, 2.0, 8000.0);
  const Spectrum s = spl_spectrum(t, res);
  Eigen::Index peak = 0;
  s.levels.maxCoeff(&peak);
  CHECK(peak == 40);
  CHECK(s.levels[40] == doctest::Approx(10.0 * std::log10(0.5)).epsilon(1e-6));
  CHECK(s.levels[40] - s.levels[37] >= 30.0);
  CHECK(s.levels[40] - s.levels[43] >= 30.0);
  for (Eigen::Index k = 1; k < s.frequencies.size(); ++k) CHECK(s.frequencies[k] > s.frequencies[k - 1]);

  std::mt19937_64 rng(12);
  const Signal white = random_signal(rng, 256 * 120);
  const Spectrum w = spl_spectrum(white, res);
  const double mean = w.levels.segment(3, 60).mean();
  CHECK((w.levels.segment(3, 60).array() - mean).abs().maxCoeff() <= 2.0);

  const Spectrum z = spl_spectrum(Signal{Eigen::VectorXd::Zero(1024), 8000.0}, res);
  CHECK((z.levels.array() == kSpectrumFloorDb).all());
  try {
    spl_spectrum(Signal{Eigen::VectorXd::Zero(100), 8000.0}, res);
    FAIL("expected SignalTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SignalTooShort);
  }
}
