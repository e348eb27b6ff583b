#include "headrest/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "headrest/control.hpp"
#include "headrest/ep_protocol.hpp"
#include "headrest/keypoint_provider.hpp"
#include "headrest/parallel.hpp"
#include "headrest/rng.hpp"

namespace headrest {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Salts separating the observation streams of different experiments.
constexpr std::uint64_t kTranslationSalt = 0x7472616e736cULL;
constexpr std::uint64_t kRotationSalt = 0x726f74617465ULL;
constexpr std::uint64_t kEpSalt = 0x65702d6f6eULL;
constexpr std::uint64_t kQuietSalt = 0x7175696574ULL;

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v == 0.0 ? 0.0 : v);
  return buf;
}

std::array<Vec3, 2> ear_truth(const HeadGeometry& geom, const HeadPose& pose) {
  const auto kp = true_keypoints(geom, pose);
  return {kp[Keypoint::LeftEar], kp[Keypoint::RightEar]};
}

EarEstimate observe_ears(const ExperimentConfig& cfg, const HeadPose& pose, const ObservationModel& obs,
                         std::uint64_t stream) {
  const StageCalibration calib = cfg.calibration();
  const auto kp = observe(cfg.head, pose, cfg.camera, calib, obs, stream);
  return infer_true_ears(transformed(kp, calib.stage_from_camera()));
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j);
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = mean_rank;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const auto n = static_cast<Eigen::Index>(ra.size());
  const Eigen::Map<const Eigen::VectorXd> x(ra.data(), n);
  const Eigen::Map<const Eigen::VectorXd> y(rb.data(), n);
  const Eigen::VectorXd dx = x.array() - x.mean();
  const Eigen::VectorXd dy = y.array() - y.mean();
  const double denom = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  return denom > 0.0 ? dx.dot(dy) / denom : 0.0;
}

std::array<double, 2> binaural_nr(const PlantSet& plant, const ControlFilter& filter, std::uint64_t seed,
                                  double duration) {
  const auto nr = noise_reduction_per_sensor(control_stage(plant, filter, seed, duration));
  return {nr[0], nr[1]};
}

// NR over [lo, hi] with an explicit source signal; the first `skip`
// samples are excluded from the measurement.
std::array<double, 2> band_nr(const PlantSet& plant, const ControlFilter& filter, const Signal& noise,
                              Eigen::Index skip, double lo, double hi) {
  ControlResult r = control_stage(plant, filter, noise);
  std::array<double, 2> out{};
  for (std::size_t e = 0; e < 2; ++e) {
    const Eigen::Index n = r.before[e].size() - skip;
    const Signal before{r.before[e].samples.tail(n), noise.sample_rate};
    const Signal after{r.after[e].samples.tail(n), noise.sample_rate};
    out[e] = noise_reduction_dba(before, after, lo, hi);
  }
  return out;
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Ideal: return "ideal";
    case Condition::EpOff: return "ep_off";
    case Condition::EpOn: return "ep_on";
  }
  return "?";
}

std::vector<MdeRow> run_translation_accuracy(const ExperimentConfig& cfg, unsigned threads) {
  cfg.validate();
  const GridSpec grid = GridSpec::accuracy_grid();
  const auto poses = grid_sweep(grid, 0.0);
  ObservationModel obs = cfg.observation_model();
  obs.seed = splitmix64(cfg.seed ^ kTranslationSalt);
  const auto reps = static_cast<std::uint64_t>(cfg.accuracy_reps);

  std::vector<std::array<Vec3, 2>> sums(poses.size(), {Vec3::Zero(), Vec3::Zero()});
  parallel_for(poses.size(), threads, [&](std::size_t n) {
    const auto truth = ear_truth(cfg.head, poses[n]);
    for (std::uint64_t r = 0; r < reps; ++r) {
      const EarEstimate est = observe_ears(cfg, poses[n], obs, n * reps + r);
      sums[n][0] += est.left - truth[0];
      sums[n][1] += est.right - truth[1];
    }
  });

  std::vector<MdeRow> rows;
  const std::array<int, 3> counts{grid.nx, grid.ny, grid.nz};
  for (int axis = 0; axis < 3; ++axis) {
    for (int slice = 0; slice < counts[static_cast<std::size_t>(axis)]; ++slice) {
      Vec3 left = Vec3::Zero();
      Vec3 right = Vec3::Zero();
      std::size_t members = 0;
      for (std::size_t n = 0; n < poses.size(); ++n) {
        const GridIndex idx = grid.index_at(n);
        const int coord = axis == 0 ? idx.i : axis == 1 ? idx.j : idx.k;
        if (coord != slice) continue;
        left += sums[n][0];
        right += sums[n][1];
        ++members;
      }
      const double samples = static_cast<double>(members * reps);
      GridIndex at{0, 0, 0};
      (axis == 0 ? at.i : axis == 1 ? at.j : at.k) = slice;
      MdeRow row;
      row.axis = "XYZ"[axis];
      row.offset_mm = 1000.0 * (grid.node(at)[axis] - grid.origin[axis]);
      row.offset_mm = std::round(row.offset_mm * 1e6) / 1e6;
      row.mde_left_mm = 1000.0 * left[axis] / samples;
      row.mde_right_mm = 1000.0 * right[axis] / samples;
      rows.push_back(row);
    }
  }
  return rows;
}

RotationAccuracy run_rotation_accuracy(const ExperimentConfig& cfg, unsigned threads) {
  cfg.validate();
  ObservationModel obs = cfg.observation_model();
  obs.seed = splitmix64(cfg.seed ^ kRotationSalt);
  const auto reps = static_cast<std::size_t>(cfg.accuracy_reps);
  const auto& angles = cfg.rotation_angles_deg;

  std::vector<double> err_left(angles.size() * reps);
  std::vector<double> err_right(angles.size() * reps);
  parallel_for(angles.size(), threads, [&](std::size_t a) {
    const HeadPose pose{cfg.accuracy_rotation_center, angles[a] * kDeg};
    const auto truth = ear_truth(cfg.head, pose);
    for (std::size_t r = 0; r < reps; ++r) {
      const EarEstimate est = observe_ears(cfg, pose, obs, a * reps + r);
      err_left[a * reps + r] = (est.left - truth[0]).norm();
      err_right[a * reps + r] = (est.right - truth[1]).norm();
    }
  });

  RotationAccuracy out;
  std::vector<double> theta;
  for (std::size_t a = 0; a < angles.size(); ++a) {
    RotationErrorRow row;
    row.theta_deg = angles[a];
    for (std::size_t r = 0; r < reps; ++r) {
      row.e_left_mm += 1000.0 * err_left[a * reps + r] / static_cast<double>(reps);
      row.e_right_mm += 1000.0 * err_right[a * reps + r] / static_cast<double>(reps);
      row.max_left_mm = std::max(row.max_left_mm, 1000.0 * err_left[a * reps + r]);
      row.max_right_mm = std::max(row.max_right_mm, 1000.0 * err_right[a * reps + r]);
      theta.push_back(angles[a]);
    }
    out.rows.push_back(row);
  }
  out.spearman_left = spearman(theta, err_left);
  out.spearman_right = spearman(theta, err_right);
  std::vector<double> err_mean(err_left.size());
  for (std::size_t i = 0; i < err_mean.size(); ++i) err_mean[i] = 0.5 * (err_left[i] + err_right[i]);
  out.spearman_mean = spearman(theta, err_mean);
  return out;
}

FilterBank train_headrest_bank(const ExperimentConfig& cfg, unsigned threads) {
  cfg.validate();
  return train_bank(cfg.scene, GridSpec::headrest_grid(), cfg.head, cfg.fxlms, cfg.training_seed(), threads);
}

AngleBank train_rotation_bank(const ExperimentConfig& cfg, unsigned threads) {
  cfg.validate();
  std::vector<double> angles;
  for (double a : cfg.anc_angles_deg) angles.push_back(a * kDeg);
  return train_angle_bank(cfg.scene, cfg.anc_rotation_center, angles, cfg.head, cfg.fxlms, cfg.training_seed(),
                          threads);
}

std::vector<EarEstimate> ep_ear_stream(const ExperimentConfig& cfg, const HeadPose& pose, std::uint64_t stream) {
  ObservationModel obs = cfg.observation_model();
  obs.seed = splitmix64(cfg.seed ^ splitmix64(stream ^ kEpSalt));
  const StageCalibration calib = cfg.calibration();
  SyntheticProvider provider(cfg.head, std::vector<HeadPose>(static_cast<std::size_t>(cfg.ep_frames), pose),
                             cfg.camera, calib, obs, cfg.frames_per_second, cfg.confidence_gate);

  auto [tx, rx] = make_pipe();
  Publisher publisher(*tx);
  Subscriber subscriber(*rx);
  const Eigen::Isometry3d stage_from_camera = calib.stage_from_camera();
  std::vector<EarEstimate> out;
  while (const auto frame = provider.next_frame()) {
    const EarEstimate ears = infer_true_ears(transformed(frame->keypoints, stage_from_camera));
    publisher.publish(make_message(ears, frame->timestamp_us, static_cast<float>(frame->keypoints.min_confidence())));
    subscriber.pump();
    while (const auto msg = subscriber.poll()) out.push_back(to_ear_estimate(*msg));
  }
  return out;
}

std::vector<NrCell> run_anc_translation(const ExperimentConfig& cfg, const FilterBank& bank, unsigned threads) {
  cfg.validate();
  bank.validate();
  const GridSpec& grid = bank.grid;
  const GridIndex initial = nearest_grid(Vec3::Zero(), grid);
  const auto seeds = static_cast<std::size_t>(cfg.nr_seeds);
  std::vector<NrCell> cells(grid.size() * 3);

  parallel_for(grid.size(), threads, [&](std::size_t n) {
    const GridIndex idx = grid.index_at(n);
    const HeadPose pose{grid.node(idx), 0.0};
    const auto ears = ear_truth(cfg.head, pose);
    const PlantSet plant = derive_plant(cfg.scene, ears);

    std::array<std::array<double, 2>, 3> sum{};
    int misselected = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      std::map<std::size_t, std::array<double, 2>> cache;
      const auto nr = [&](const ControlFilter& f) {
        const std::size_t key = grid.linear_index(f.trained_at);
        auto it = cache.find(key);
        if (it == cache.end()) {
          it = cache.emplace(key, binaural_nr(plant, f, cfg.control_seed(static_cast<int>(s)), cfg.control_duration))
                   .first;
        }
        return it->second;
      };

      FilterSwitcher switcher(bank);
      for (const auto& e : ep_ear_stream(cfg, pose, n * seeds + s)) switcher.update(e);
      if (!(switcher.current().trained_at == idx)) ++misselected;

      const std::array<std::array<double, 2>, 3> got{nr(bank.at(idx)), nr(bank.at(initial)), nr(switcher.current())};
      for (std::size_t c = 0; c < 3; ++c) {
        sum[c][0] += got[c][0];
        sum[c][1] += got[c][1];
      }
    }
    for (std::size_t c = 0; c < 3; ++c) {
      NrCell& cell = cells[n * 3 + c];
      cell.node = idx;
      cell.position = pose.center;
      cell.condition = static_cast<Condition>(c);
      cell.nr_left = sum[c][0] / static_cast<double>(seeds);
      cell.nr_right = sum[c][1] / static_cast<double>(seeds);
      cell.misselected = c == 2 ? misselected : 0;
    }
  });
  return cells;
}

std::vector<NrCell> run_anc_rotation(const ExperimentConfig& cfg, const AngleBank& bank, unsigned threads) {
  cfg.validate();
  if (bank.filters.empty() || bank.filters.size() != bank.angles.size()) {
    throw Error(ErrorCode::EmptyBank, "angle bank has no filters");
  }
  const std::size_t initial = nearest_angle(0.0, bank.angles);
  const auto seeds = static_cast<std::size_t>(cfg.nr_seeds);
  const auto& angles = cfg.anc_angles_deg;
  std::vector<NrCell> cells(angles.size() * 3);

  parallel_for(angles.size(), threads, [&](std::size_t a) {
    const HeadPose pose{bank.center, angles[a] * kDeg};
    const std::size_t ideal = nearest_angle(pose.yaw, bank.angles);
    const PlantSet plant = derive_plant(cfg.scene, ear_truth(cfg.head, pose));

    std::array<std::array<double, 2>, 3> sum{};
    int misselected = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      std::map<std::size_t, std::array<double, 2>> cache;
      const auto nr = [&](std::size_t which) {
        auto it = cache.find(which);
        if (it == cache.end()) {
          it = cache.emplace(which, binaural_nr(plant, bank.filters[which], cfg.control_seed(static_cast<int>(s)),
                                                cfg.control_duration))
                   .first;
        }
        return it->second;
      };

      std::size_t selected = initial;
      const auto stream = ep_ear_stream(cfg, pose, (1ULL << 32) + a * seeds + s);
      if (!stream.empty()) selected = nearest_angle(yaw_from_ears(stream.back()), bank.angles);
      if (selected != ideal) ++misselected;

      const std::array<std::array<double, 2>, 3> got{nr(ideal), nr(initial), nr(selected)};
      for (std::size_t c = 0; c < 3; ++c) {
        sum[c][0] += got[c][0];
        sum[c][1] += got[c][1];
      }
    }
    for (std::size_t c = 0; c < 3; ++c) {
      NrCell& cell = cells[a * 3 + c];
      cell.position = pose.center;
      cell.theta_deg = angles[a];
      cell.condition = static_cast<Condition>(c);
      cell.nr_left = sum[c][0] / static_cast<double>(seeds);
      cell.nr_right = sum[c][1] / static_cast<double>(seeds);
      cell.misselected = c == 2 ? misselected : 0;
    }
  });
  return cells;
}

std::vector<SpectrumRow> run_spectra(const ExperimentConfig& cfg, const FilterBank& bank) {
  cfg.validate();
  bank.validate();
  const GridIndex idx = bank.grid.node_at(cfg.spectrum_node);
  const HeadPose pose{bank.grid.node(idx), 0.0};
  const PlantSet plant = derive_plant(cfg.scene, ear_truth(cfg.head, pose));

  FilterSwitcher switcher(bank);
  for (const auto& e : ep_ear_stream(cfg, pose, 1ULL << 40)) switcher.update(e);
  const std::array<const ControlFilter*, 3> filters{&bank.at(idx), &bank.at(nearest_grid(Vec3::Zero(), bank.grid)),
                                                    &switcher.current()};

  std::array<ControlResult, 3> results;
  for (std::size_t c = 0; c < 3; ++c) {
    results[c] = control_stage(plant, *filters[c], cfg.control_seed(0), cfg.control_duration);
  }

  std::vector<SpectrumRow> rows;
  for (int ear = 0; ear < 2; ++ear) {
    const auto e = static_cast<std::size_t>(ear);
    const Spectrum before = spl_spectrum(results[0].before[e], cfg.spectrum_resolution);
    std::array<Spectrum, 3> after;
    for (std::size_t c = 0; c < 3; ++c) after[c] = spl_spectrum(results[c].after[e], cfg.spectrum_resolution);
    for (Eigen::Index k = 0; k < before.frequencies.size(); ++k) {
      const double f = before.frequencies[k];
      if (f < kBandLowHz || f > kBandHighHz) continue;
      rows.push_back({ear, f, before.levels[k], after[0].levels[k], after[1].levels[k], after[2].levels[k]});
    }
  }
  return rows;
}

std::vector<QuietZoneRow> run_quiet_zone(const ExperimentConfig& cfg, unsigned threads) {
  cfg.validate();
  const auto ears = ear_truth(cfg.head, {Vec3::Zero(), 0.0});
  const Vec3 forward(0.0, cfg.quiet_zone_offset, 0.0);
  const PlantSet at_ears = derive_plant(cfg.scene, ears);
  const PlantSet at_probes = derive_plant(cfg.scene, std::array<Vec3, 2>{ears[0] + forward, ears[1] + forward});
  const double fs = cfg.scene.sample_rate;
  const auto& freqs = cfg.quiet_zone_frequencies;
  const auto seeds = static_cast<std::size_t>(cfg.quiet_zone_seeds);
  const auto skip = static_cast<Eigen::Index>(std::llround(kControlWarmupSeconds * fs));

  std::vector<QuietZoneRow> rows(seeds * freqs.size());
  parallel_for(rows.size(), threads, [&](std::size_t n) {
    const std::size_t s = n / freqs.size();
    const double f = freqs[n % freqs.size()];
    const double lo = 0.9 * f;
    const double hi = 1.1 * f;
    const std::uint64_t base = splitmix64(cfg.seed ^ kQuietSalt ^ splitmix64(s));
    const Signal train = band_noise(lo, hi, static_cast<double>(cfg.fxlms.max_iterations) / fs, base, fs);
    const ControlFilter filter = run_fxlms(at_ears, train, cfg.fxlms).filter;
    const Signal test = band_noise(lo, hi, cfg.control_duration + kControlWarmupSeconds, splitmix64(base), fs);

    const auto ear_nr = band_nr(at_ears, filter, test, skip, lo, hi);
    const auto probe_nr = band_nr(at_probes, filter, test, skip, lo, hi);
    rows[n] = {static_cast<int>(s), f, ear_nr[0], ear_nr[1], probe_nr[0], probe_nr[1]};
  });
  return rows;
}

void write_provenance(std::ostream& out, const ExperimentConfig& cfg, std::string_view command) {
  std::istringstream ini(to_ini(cfg));
  for (std::string line; std::getline(ini, line);) out << "# " << line << '\n';
  out << "# [provenance]\n";
  out << "# command = " << command << '\n';
  out << "# rng = " << kRngDescription << '\n';
  out << "# observation_seed = " << cfg.seed << '\n';
  out << "# training_seed = " << cfg.training_seed() << '\n';
  out << "# control_seeds =";
  for (int s = 0; s < cfg.nr_seeds; ++s) out << ' ' << cfg.control_seed(s);
  out << '\n';
}

void write_csv(std::ostream& out, const std::vector<MdeRow>& rows) {
  out << "axis,offset_mm,mde_left_mm,mde_right_mm\n";
  for (const auto& r : rows) {
    out << r.axis << ',' << fixed(r.offset_mm, 1) << ',' << fixed(r.mde_left_mm) << ',' << fixed(r.mde_right_mm)
        << '\n';
  }
}

void write_csv(std::ostream& out, const RotationAccuracy& result) {
  out << "theta_deg,e_left_mm,e_right_mm,max_left_mm,max_right_mm\n";
  for (const auto& r : result.rows) {
    out << fixed(r.theta_deg, 1) << ',' << fixed(r.e_left_mm) << ',' << fixed(r.e_right_mm) << ','
        << fixed(r.max_left_mm) << ',' << fixed(r.max_right_mm) << '\n';
  }
  out << "# [summary]\n";
  out << "# spearman_left = " << fixed(result.spearman_left) << '\n';
  out << "# spearman_right = " << fixed(result.spearman_right) << '\n';
  out << "# spearman_mean = " << fixed(result.spearman_mean) << '\n';
}

void write_csv(std::ostream& out, const std::vector<NrCell>& cells) {
  out << "i,j,k,x_mm,y_mm,z_mm,theta_deg,condition,nr_left_dba,nr_right_dba,misselected\n";
  for (const auto& c : cells) {
    out << c.node.i << ',' << c.node.j << ',' << c.node.k << ',' << fixed(1000.0 * c.position.x(), 1) << ','
        << fixed(1000.0 * c.position.y(), 1) << ',' << fixed(1000.0 * c.position.z(), 1) << ','
        << fixed(c.theta_deg, 1) << ',' << to_string(c.condition) << ',' << fixed(c.nr_left, 3) << ','
        << fixed(c.nr_right, 3) << ',' << c.misselected << '\n';
  }
}

void write_csv(std::ostream& out, const std::vector<SpectrumRow>& rows) {
  out << "ear,frequency_hz,before_db,ideal_db,ep_off_db,ep_on_db\n";
  for (const auto& r : rows) {
    out << (r.ear == 0 ? "left" : "right") << ',' << fixed(r.frequency, 4) << ',' << fixed(r.before, 3) << ','
        << fixed(r.ideal, 3) << ',' << fixed(r.ep_off, 3) << ',' << fixed(r.ep_on, 3) << '\n';
  }
}

void write_csv(std::ostream& out, const std::vector<QuietZoneRow>& rows) {
  out << "seed,frequency_hz,nr_ear_left_db,nr_ear_right_db,nr_probe_left_db,nr_probe_right_db\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << fixed(r.frequency, 1) << ',' << fixed(r.nr_ear_left, 3) << ','
        << fixed(r.nr_ear_right, 3) << ',' << fixed(r.nr_probe_left, 3) << ',' << fixed(r.nr_probe_right, 3)
        << '\n';
  }
}

}  // namespace headrest
