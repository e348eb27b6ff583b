// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "headrest/byte_io.hpp"
#include "headrest/control.hpp"
#include "headrest/ep_protocol.hpp"
#include "headrest/experiments.hpp"
#include "oracles.hpp"

using namespace headrest;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = elapsed < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s  %-22s %s  [%.1f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), elapsed,
              budget_s, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

Outcome geometry_exactness() {
  const HeadGeometry geom = HeadGeometry::canonical();
  const CameraModel cam;
  const StageCalibration calib = StageCalibration::facing_head();
  const ObservationModel obs = ObservationModel::noiseless();
  double worst = 0.0;
  int occluded = 0;
  int cases = 0;
  for (const Vec3& center : {Vec3(0, 0, 0), Vec3(0, 0, 0.025), Vec3(-0.05, 0.05, 0.025), Vec3(0.075, -0.075, -0.025)}) {
    for (double deg : {15.0, 30.0, 45.0, 60.0}) {
      const HeadPose pose{center, deg * kDeg};
      const auto kp = observe(geom, pose, cam, calib, obs);
      const Vec3 right_truth = oracle::head_to_stage(geom.right_ear, center, pose.yaw);
      const Vec3 right_seen = oracle::camera_to_stage(kp[Keypoint::RightEar], 0.8);
      if ((right_seen - right_truth).norm() > 1e-3) ++occluded;
      const EarEstimate est = infer_true_ears(kp);
      worst = std::max(worst, (oracle::camera_to_stage(est.left, 0.8) -
                               oracle::head_to_stage(geom.left_ear, center, pose.yaw)).norm());
      worst = std::max(worst, (oracle::camera_to_stage(est.right, 0.8) - right_truth).norm());
      ++cases;
    }
  }
  // Occlusion must actually have corrupted the far ear above the threshold.
  return {worst <= 1e-9 && occluded == 12,
          fmt("max_err=%.2e m (tol 1e-9) over %d poses, %d with occluded ear", worst, cases, occluded)};
}

Outcome kernel_invariants() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto vec = [&] { return Vec3(u(rng), u(rng), u(rng)); };
  const CameraModel cam;
  constexpr int kCases = 10000;
  double involution = 0.0;
  double midpoint = 0.0;
  double bisector = 0.0;
  double roundtrip = 0.0;
  for (int n = 0; n < kCases; ++n) {
    const Vec3 p = vec();
    const Plane plane = bisector_plane<double>(vec(), vec());
    const Vec3 r = reflect(p, plane);
    involution = std::max(involution, (reflect(r, plane) - p).norm());
    midpoint = std::max(midpoint, std::abs(plane.signed_distance(0.5 * (p + r))));

    const Vec3 a = vec();
    const Vec3 b = vec();
    if ((a - b).norm() <= kMinEyeSeparation) continue;
    const Plane ab = bisector_plane(a, b);
    const double da = oracle::signed_distance(a, ab.point, ab.normal);
    const double db = oracle::signed_distance(b, ab.point, ab.normal);
    bisector = std::max({bisector, std::abs(std::abs(da) - std::abs(db)), std::abs(da + db)});

    const Vec3 q(0.5 * u(rng), 0.4 * u(rng), 0.3 + 0.85 * (u(rng) + 1.0));
    const Projection pr = project(q, cam);
    roundtrip = std::max(roundtrip, (deproject(pr.pixel, pr.depth, cam) - q).norm() / q.norm());
  }
  return {involution <= 1e-12 && midpoint <= 1e-12 && bisector <= 1e-12 && roundtrip <= 1e-12,
          fmt("%d cases each: involution=%.1e midpoint=%.1e bisector=%.1e projection_rel=%.1e (tol 1e-12)", kCases,
              involution, midpoint, bisector, roundtrip)};
}

Outcome translation_accuracy() {
  const auto rows = run_translation_accuracy(ExperimentConfig{});
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max({worst, std::abs(r.mde_left_mm), std::abs(r.mde_right_mm)});
  return {rows.size() == 17 && worst <= 5.0, fmt("max|MDE|=%.3f mm (tol 5 mm), %zu rows x L/R", worst, rows.size())};
}

Outcome rotation_accuracy() {
  ExperimentConfig cfg;
  const auto noisy = run_rotation_accuracy(cfg);
  cfg.noise = false;
  const auto exact = run_rotation_accuracy(cfg);
  double worst = 0.0;
  double worst_exact = 0.0;
  for (const auto& r : noisy.rows) worst = std::max({worst, r.e_left_mm, r.e_right_mm});
  for (const auto& r : exact.rows) worst_exact = std::max({worst_exact, r.e_left_mm, r.e_right_mm});
  const auto& last = noisy.rows.back();
  return {worst <= 15.0 && worst_exact * 1e-3 <= 1e-9,
          fmt("max E=%.2f mm (tol 15 mm; at 60 deg E_L=%.2f E_R=%.2f), noiseless max E=%.1e m (tol 1e-9)", worst,
              last.e_left_mm, last.e_right_mm, worst_exact * 1e-3)};
}

FirPath delay_path(int samples, double gain) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(samples + 1);
  t[samples] = gain;
  return {t, 8000.0};
}

PlantSet single_channel(FirPath p, FirPath s) {
  PlantSet plant;
  plant.reference = delay_path(0, 1.0);
  plant.primary = {std::move(p)};
  plant.secondary = {{std::move(s)}};
  return plant;
}

FirPath random_path(std::mt19937_64& rng, int length, int lead, double decay) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(length);
  for (int n = lead; n < length; ++n) t[n] = g(rng) * std::exp(-decay * (n - lead));
  return {t, 8000.0};
}

Outcome fxlms_oracle() {
  const PlantSet tone_plant = single_channel(delay_path(8, 1.0), delay_path(4, 0.5));
  const auto tone_run = run_fxlms(tone_plant, tone(500.0, 30.0), FxlmsConfig{});
  const std::complex<double> w = oracle::dtft(tone_run.filter.taps[0], 500.0, 8000.0);
  const std::complex<double> target = -std::polar(1.0, -2.0 * kPi * 500.0 * 8.0 / 8000.0) /
                                      (0.5 * std::polar(1.0, -2.0 * kPi * 500.0 * 4.0 / 8000.0));
  const double mag_err = std::abs(std::abs(w) / std::abs(target) - 1.0);
  const double phase_err = std::abs(std::arg(w / target)) / kDeg;
  const bool tone_ok = mag_err <= 0.01 && phase_err <= 1.0 && tone_run.filter.residual_power_db <= -40.0;

  FxlmsConfig cfg;
  cfg.filter_taps = 64;
  cfg.step_size = 0.05;
  cfg.max_iterations = 8000 * 300;
  cfg.convergence_epsilon = 0.0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 100);
    const PlantSet plant = single_channel(random_path(rng, 64, 12, 0.08), random_path(rng, 64, 2, 0.1));
    const Signal noise = band_noise(kBandLowHz, kBandHighHz, 300.0, seed);
    const auto r = run_fxlms(plant, noise, cfg);
    const Eigen::Index tail = 16000;
    const Eigen::VectorXd x = noise.samples.tail(tail + 200);
    const Eigen::VectorXd d = oracle::convolve(x, plant.primary[0].taps);
    const double ls = oracle::block_ls_residual_db(x, d, plant.secondary[0][0].taps, 64, 200);
    worst_gap = std::max(worst_gap, r.filter.residual_power_db - ls);
  }
  return {tone_ok && worst_gap <= 3.0,
          fmt("tone |W| err=%.3f%% phase err=%.3f deg residual=%.1f dB; broadband worst gap to LS=%.2f dB over 20 "
              "seeds (tol 3 dB)",
              100.0 * mag_err, phase_err, tone_run.filter.residual_power_db, worst_gap)};
}

Outcome ep_noise_reduction() {
  ExperimentConfig clean;
  clean.noise = false;
  const ExperimentConfig noisy;
  const FilterBank bank = train_headrest_bank(clean);
  const AngleBank angles = train_rotation_bank(clean);
  const auto grid_clean = run_anc_translation(clean, bank);
  const auto grid_noisy = run_anc_translation(noisy, bank);
  const auto rot_clean = run_anc_rotation(clean, angles);

  // (a) zero noise: EP-on within 0.5 dB of Ideal at every node and angle.
  double gap_a = 0.0;
  for (const auto* cells : {&grid_clean, &rot_clean}) {
    for (std::size_t n = 0; n < cells->size(); n += 3) {
      gap_a = std::max({gap_a, std::abs((*cells)[n + 2].nr_left - (*cells)[n].nr_left),
                        std::abs((*cells)[n + 2].nr_right - (*cells)[n].nr_right)});
    }
  }
  // (b) default noise, nodes at least 5 cm from the initial position.
  double margin_b = std::numeric_limits<double>::infinity();
  int far_nodes = 0;
  for (std::size_t n = 0; n < grid_noisy.size(); n += 3) {
    if (grid_noisy[n].position.norm() < 0.05 - 1e-9) continue;
    ++far_nodes;
    margin_b = std::min({margin_b, grid_noisy[n + 2].nr_left - grid_noisy[n + 1].nr_left,
                         grid_noisy[n + 2].nr_right - grid_noisy[n + 1].nr_right});
  }
  // (c) EP-off binaural NR strictly decreasing over angle; deficit at 60 deg.
  bool decreasing = true;
  std::string curve;
  for (std::size_t n = 1; n < rot_clean.size(); n += 3) {
    const double mean = 0.5 * (rot_clean[n].nr_left + rot_clean[n].nr_right);
    curve += fmt("%s%.1f", curve.empty() ? "" : ",", mean);
    if (n > 1) decreasing = decreasing && mean < 0.5 * (rot_clean[n - 3].nr_left + rot_clean[n - 3].nr_right);
  }
  const auto& ideal60 = rot_clean[rot_clean.size() - 3];
  const auto& off60 = rot_clean[rot_clean.size() - 2];
  const double deficit = std::min(ideal60.nr_left - off60.nr_left, ideal60.nr_right - off60.nr_right);

  return {gap_a <= 0.5 && far_nodes > 0 && margin_b >= 3.0 && decreasing && deficit >= 10.0,
          fmt("(a) max|on-ideal|=%.3f dB (tol 0.5); (b) min(on-off)=%.1f dB over %d nodes >=5 cm (tol 3); (c) "
              "EP-off binaural %s dBA, 60 deg deficit=%.1f dB (tol 10)",
              gap_a, margin_b, far_nodes, curve.c_str(), deficit)};
}

Outcome quiet_zone() {
  const auto rows = run_quiet_zone(ExperimentConfig{});
  int seeds = 0;
  int narrower = 0;
  double low_min = std::numeric_limits<double>::infinity();
  double high_max = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n + 1 < rows.size(); n += 2) {
    const auto& lo = rows[n];
    const auto& hi = rows[n + 1];
    ++seeds;
    if (hi.nr_probe_left < lo.nr_probe_left && hi.nr_probe_right < lo.nr_probe_right) ++narrower;
    low_min = std::min({low_min, lo.nr_probe_left, lo.nr_probe_right});
    high_max = std::max({high_max, hi.nr_probe_left, hi.nr_probe_right});
  }
  return {seeds == 10 && narrower == seeds,
          fmt("probe NR lower at 2 kHz in %d/%d seeds (200 Hz min %.1f dB, 2 kHz max %.1f dB)", narrower, seeds,
              low_min, high_max)};
}

ErrorCode decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

Outcome protocol() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_real_distribution<float> conf(0.0f, 1.0f);
  int exact = 0;
  constexpr int kTrips = 100000;
  for (int n = 0; n < kTrips; ++n) {
    EarPositionMessage m;
    m.timestamp_us = rng();
    m.left = Vec3(coord(rng), coord(rng), coord(rng));
    m.right = Vec3(coord(rng), coord(rng), coord(rng));
    m.trusted = static_cast<TrustedSide>(rng() % 3);
    m.confidence = conf(rng);
    const auto frame = encode(m);
    const Decoded d = decode(frame);
    if (d.message == m && d.consumed == frame.size()) ++exact;
  }

  std::vector<std::uint8_t> golden{0x00, 0x42, 0x01, 0x00};
  golden.resize(64, 0x00);
  for (std::uint8_t b : {0x11, 0x47, 0x7f, 0xab}) golden.push_back(b);
  const bool golden_ok = encode(EarPositionMessage{}) == golden;

  EarPositionMessage sample;
  sample.timestamp_us = 123456;
  sample.left = Vec3(0.07, 0.01, -0.02);
  sample.confidence = 0.9f;
  const auto frame = encode(sample);
  int faults = 0;
  int designated = 0;
  for (std::size_t cut = 0; cut < frame.size(); ++cut) {
    ++faults;
    designated += decode_error(std::span(frame).first(cut)) == ErrorCode::TruncatedFrame;
  }
  for (std::size_t i = 2; i < frame.size(); ++i) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = frame;
      bad[i] ^= static_cast<std::uint8_t>(1u << bit);
      ++faults;
      designated += decode_error(bad) == ErrorCode::BadCrc;
    }
  }
  for (std::uint8_t v : {0, 2, 3, 255}) {
    auto bad = frame;
    bad[2] = v;
    const std::uint32_t crc = crc32(std::span<const std::uint8_t>(bad).subspan(2, kPayloadSize));
    for (int b = 0; b < 4; ++b) bad[2 + kPayloadSize + b] = static_cast<std::uint8_t>(crc >> (8 * b));
    ++faults;
    designated += decode_error(bad) == ErrorCode::BadVersion;
  }

  // 32 Hz publisher, 10 Hz subscriber polls, 30 s on a virtual clock.
  auto [tx, rx] = make_pipe();
  auto now = std::chrono::steady_clock::time_point{};
  Subscriber sub(*rx, [&] { return now; });
  Publisher pub(*tx);
  std::uint64_t next_us = 0;
  std::uint64_t newest = 0;
  std::uint64_t last_seen = 0;
  int polls = 0;
  int newest_seen = 0;
  bool ordered = true;
  bool no_backlog = true;
  for (std::uint64_t poll_us = 100000; poll_us <= 30000000; poll_us += 100000) {
    for (; next_us <= poll_us; next_us += 31250) {
      EarPositionMessage m;
      m.timestamp_us = next_us;
      m.left.x() = static_cast<double>(next_us);
      pub.publish(m);
      newest = next_us;
    }
    now = std::chrono::steady_clock::time_point{} + std::chrono::microseconds(poll_us);
    sub.pump();
    const auto got = sub.poll();
    ++polls;
    if (got && got->timestamp_us == newest && got->left.x() == static_cast<double>(newest)) ++newest_seen;
    if (got) {
      ordered = ordered && (polls == 1 || got->timestamp_us > last_seen);
      last_seen = got->timestamp_us;
    }
    no_backlog = no_backlog && !sub.poll();
  }
  now += std::chrono::milliseconds(500);
  const bool stale = sub.status() == LinkStatus::Stale;

  return {exact == kTrips && golden_ok && designated == faults && newest_seen == polls && ordered && no_backlog &&
              stale,
          fmt("round-trips %d/%d exact; golden 68-byte frame %s; faults %d/%d designated; latest-wins %d/%d polls "
              "newest, ordered=%s backlog=%s stale_after_500ms=%s",
              exact, kTrips, golden_ok ? "stable" : "CHANGED", designated, faults, newest_seen, polls,
              ordered ? "yes" : "no", no_backlog ? "none" : "YES", stale ? "yes" : "no")};
}

Outcome bank_persistence() {
  const ExperimentConfig cfg;
  const FilterBank bank = train_headrest_bank(cfg);
  const auto path = std::filesystem::temp_directory_path() / "headrest_acceptance_bank.ancb";
  save_bank(bank, path.string());
  const FilterBank loaded = load_bank(path.string());
  std::filesystem::remove(path);

  int identical = 0;
  for (std::size_t n = 0; n < bank.grid.size(); ++n) {
    const GridIndex idx = bank.grid.index_at(n);
    const Vec3 center = bank.grid.node(idx);
    const std::array<Vec3, 2> ears{oracle::head_to_stage(cfg.head.left_ear, center, 0.0),
                                   oracle::head_to_stage(cfg.head.right_ear, center, 0.0)};
    const PlantSet plant = derive_plant(cfg.scene, ears);
    const auto a = control_stage(plant, bank.at(idx), cfg.control_seed(0), 0.5);
    const auto b = control_stage(plant, loaded.at(idx), cfg.control_seed(0), 0.5);
    bool same = true;
    for (std::size_t e = 0; e < 2; ++e) {
      same = same && a.after[e].samples.size() == b.after[e].samples.size() &&
             std::memcmp(a.after[e].samples.data(), b.after[e].samples.data(),
                         sizeof(double) * static_cast<std::size_t>(a.after[e].size())) == 0;
    }
    identical += same;
  }

  // Every position with one corruption value, and every value at a spread
  // of positions.
  const auto bytes = serialize_bank(bank);
  std::size_t tried = 0;
  std::size_t detected = 0;
  const auto corrupt = [&](std::size_t i, std::uint8_t x) {
    auto bad = bytes;
    bad[i] ^= x;
    ++tried;
    try {
      deserialize_bank(bad);
    } catch (const Error&) {
      ++detected;
    }
  };
  for (std::size_t i = 0; i < bytes.size(); ++i) corrupt(i, static_cast<std::uint8_t>(1 + (i * 37) % 255));
  for (std::size_t i = 0; i < bytes.size(); i += bytes.size() / 97) {
    for (int x = 1; x < 256; ++x) corrupt(i, static_cast<std::uint8_t>(x));
  }
  return {identical == static_cast<int>(bank.grid.size()) && detected == tried,
          fmt("%d/%zu nodes bitwise-identical after save/load; %zu/%zu single-byte corruptions detected (%zu-byte file)",
              identical, bank.grid.size(), detected, tried, bytes.size())};
}

}  // namespace

int main() {
  criterion("geometry-exactness", 1, geometry_exactness);
  criterion("kernel-invariants", 5, kernel_invariants);
  criterion("translation-accuracy", 120, translation_accuracy);
  criterion("rotation-accuracy", 60, rotation_accuracy);
  criterion("fxlms-oracle", 120, fxlms_oracle);
  criterion("ep-noise-reduction", 480, ep_noise_reduction);
  criterion("quiet-zone", 60, quiet_zone);
  criterion("protocol", 30, protocol);
  criterion("bank-persistence", 60, bank_persistence);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
