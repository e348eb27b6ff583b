#include "headrest/fxlms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace headrest {

void FxlmsConfig::validate() const {
  if (!(step_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
  if (filter_taps < 1 || secondary_model_taps < 1) throw Error(ErrorCode::InvalidArgument, "tap counts must be >= 1");
  if (!(leak >= 0.0 && leak < 1.0)) throw Error(ErrorCode::InvalidArgument, "leak must lie in [0, 1)");
  if (convergence_window < 1 || convergence_window > max_iterations) {
    throw Error(ErrorCode::InvalidArgument, "convergence window must be in [1, max_iterations]");
  }
  if (!(convergence_epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be non-negative");
}

void PlantSet::validate() const {
  if (primary.empty() || secondary.empty()) throw Error(ErrorCode::InvalidArgument, "plant needs paths");
  const double fs = reference.sample_rate;
  const auto check = [&](const FirPath& p) {
    if (p.sample_rate != fs) throw Error(ErrorCode::SampleRateMismatch, "plant paths use different rates");
    if (p.taps.size() < 1 || !p.taps.allFinite()) throw Error(ErrorCode::InvalidArgument, "bad path taps");
  };
  check(reference);
  for (const auto& p : primary) check(p);
  for (const auto& row : secondary) {
    if (row.size() != primary.size()) throw Error(ErrorCode::InvalidArgument, "secondary path matrix incomplete");
    for (const auto& p : row) check(p);
  }
}

PlantSet derive_plant(const AcousticScene& scene, std::span<const Vec3> error_points) {
  PlantSet plant;
  plant.reference = impulse_response(scene.primary_source, scene.reference_mic, scene);
  for (const auto& ear : error_points) plant.primary.push_back(impulse_response(scene.primary_source, ear, scene));
  for (const auto& speaker : scene.secondary_sources) {
    auto& row = plant.secondary.emplace_back();
    for (const auto& ear : error_points) row.push_back(impulse_response(speaker, ear, scene));
  }
  return plant;
}

Eigen::VectorXd secondary_estimate(const FirPath& path, const FxlmsConfig& cfg) {
  const auto len = static_cast<Eigen::Index>(cfg.secondary_model_taps);
  Eigen::VectorXd est = Eigen::VectorXd::Zero(len);
  const Eigen::Index shift = std::max(0, cfg.secondary_delay_error);
  const Eigen::Index n = std::clamp<Eigen::Index>(path.taps.size(), 0, std::max<Eigen::Index>(0, len - shift));
  est.segment(shift, n) = cfg.secondary_gain_error * path.taps.head(n);
  return est;
}

namespace {

Eigen::VectorXd padded_front(const Eigen::VectorXd& v, Eigen::Index zeros) {
  Eigen::VectorXd out(v.size() + zeros);
  out.head(zeros).setZero();
  out.tail(v.size()) = v;
  return out;
}

double power_ratio_db(double residual, double reference) {
  if (reference <= 0.0) return residual <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  if (residual <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(residual / reference);
}

}  // namespace

TrainingResult run_fxlms(const PlantSet& plant, const Signal& source_noise, const FxlmsConfig& cfg) {
  cfg.validate();
  plant.validate();
  if (source_noise.sample_rate != plant.sample_rate()) {
    throw Error(ErrorCode::SampleRateMismatch, "noise and plant sample rates differ");
  }
  const std::size_t speakers = plant.speakers();
  const std::size_t sensors = plant.sensors();
  const auto taps = static_cast<Eigen::Index>(cfg.filter_taps);
  const Eigen::Index total = std::min<Eigen::Index>(source_noise.size(), static_cast<Eigen::Index>(cfg.max_iterations));

  Signal noise{source_noise.samples.head(total), source_noise.sample_rate};
  const Signal reference = propagate(noise, plant.reference);
  std::vector<Eigen::VectorXd> desired;
  for (const auto& p : plant.primary) desired.push_back(propagate(noise, p).samples);

  // Filtered references through the secondary-path model, padded so that
  // window n is segment(n, taps) in ascending time.
  std::vector<std::vector<Eigen::VectorXd>> filtered(speakers);
  Eigen::VectorXd energy_prefix = Eigen::VectorXd::Zero(total + 1);
  {
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(total);
    for (std::size_t m = 0; m < speakers; ++m) {
      for (std::size_t e = 0; e < sensors; ++e) {
        const FirPath model{secondary_estimate(plant.secondary[m][e], cfg), plant.sample_rate()};
        Eigen::VectorXd xf = propagate(reference, model).samples;
        sq += xf.array().square().matrix();
        filtered[m].push_back(padded_front(xf, taps - 1));
      }
    }
    for (Eigen::Index n = 0; n < total; ++n) energy_prefix[n + 1] = energy_prefix[n] + sq[n];
  }
  const Eigen::VectorXd x_padded = padded_front(reference.samples, taps - 1);

  // True secondary paths, time-reversed to dot against ascending history.
  Eigen::Index path_len = 1;
  for (const auto& row : plant.secondary) {
    for (const auto& p : row) path_len = std::max(path_len, p.taps.size());
  }
  std::vector<std::vector<Eigen::VectorXd>> s_rev(speakers);
  for (std::size_t m = 0; m < speakers; ++m) {
    for (std::size_t e = 0; e < sensors; ++e) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(path_len);
      const auto& t = plant.secondary[m][e].taps;
      r.tail(t.size()) = t.reverse();
      s_rev[m].push_back(std::move(r));
    }
  }
  std::vector<Eigen::VectorXd> y_hist(speakers, Eigen::VectorXd::Zero(total + path_len - 1));

  std::vector<Eigen::VectorXd> w_rev(speakers, Eigen::VectorXd::Zero(taps));
  std::vector<Eigen::VectorXd> w_checkpoint = w_rev;
  std::vector<double> error(sensors);

  TrainingResult result;
  double best_db = std::numeric_limits<double>::infinity();
  double win_residual = 0.0;
  double win_desired = 0.0;
  const auto window = static_cast<Eigen::Index>(cfg.convergence_window);
  constexpr double kRegularization = 1e-9;

  Eigen::Index n = 0;
  for (; n < total; ++n) {
    for (std::size_t m = 0; m < speakers; ++m) {
      y_hist[m][n + path_len - 1] = w_rev[m].dot(x_padded.segment(n, taps));
    }
    for (std::size_t e = 0; e < sensors; ++e) {
      double acc = desired[e][n];
      for (std::size_t m = 0; m < speakers; ++m) acc += s_rev[m][e].dot(y_hist[m].segment(n, path_len));
      error[e] = acc;
      win_residual += acc * acc;
      win_desired += desired[e][n] * desired[e][n];
    }

    // Mean window energy per filtered-reference channel.
    const double energy = (energy_prefix[n + 1] - energy_prefix[std::max<Eigen::Index>(0, n + 1 - taps)]) /
                          static_cast<double>(speakers * sensors);
    const double mu = cfg.step_size / (energy + kRegularization);
    for (std::size_t m = 0; m < speakers; ++m) {
      if (cfg.leak > 0.0) w_rev[m] *= 1.0 - cfg.leak;
      for (std::size_t e = 0; e < sensors; ++e) {
        w_rev[m].noalias() -= (mu * error[e]) * filtered[m][e].segment(n, taps);
      }
    }

    if ((n + 1) % window == 0) {
      const double db = power_ratio_db(win_residual, win_desired);
      result.window_residual_db.push_back(db);
      if (!std::isfinite(win_residual) || db > best_db + 20.0) {
        throw Error(ErrorCode::Diverged, "residual grew by more than 20 dB within training");
      }
      best_db = std::min(best_db, db);
      win_residual = win_desired = 0.0;

      double change = 0.0;
      double norm = 0.0;
      for (std::size_t m = 0; m < speakers; ++m) {
        change += (w_rev[m] - w_checkpoint[m]).squaredNorm();
        norm += w_rev[m].squaredNorm();
      }
      w_checkpoint = w_rev;
      if (change <= cfg.convergence_epsilon * cfg.convergence_epsilon * norm) {
        result.filter.converged = true;
        ++n;
        break;
      }
    }
  }

  result.iterations = static_cast<std::size_t>(n);
  for (auto& w : w_rev) result.filter.taps.push_back(w.reverse());
  result.filter.residual_power_db = result.window_residual_db.empty()
                                        ? power_ratio_db(win_residual, win_desired)
                                        : result.window_residual_db.back();
  return result;
}

ControlFilter train_fxlms(const PlantSet& plant, std::uint64_t noise_seed, const FxlmsConfig& cfg) {
  const double duration = static_cast<double>(cfg.max_iterations) / plant.sample_rate();
  const Signal noise = band_noise(kBandLowHz, kBandHighHz, duration, noise_seed, plant.sample_rate());
  return run_fxlms(plant, noise, cfg).filter;
}

OracleResponse wiener_oracle(const PlantSet& plant, std::span<const double> frequencies) {
  plant.validate();
  const auto speakers = static_cast<Eigen::Index>(plant.speakers());
  const auto sensors = static_cast<Eigen::Index>(plant.sensors());
  const double fs = plant.sample_rate();

  OracleResponse out;
  out.frequencies = Eigen::Map<const Eigen::VectorXd>(frequencies.data(), static_cast<Eigen::Index>(frequencies.size()));
  for (const double f : frequencies) {
    const std::complex<double> r = frequency_response(plant.reference.taps, f, fs);
    Eigen::VectorXcd p(sensors);
    Eigen::MatrixXcd s(sensors, speakers);
    for (Eigen::Index e = 0; e < sensors; ++e) {
      p[e] = frequency_response(plant.primary[static_cast<std::size_t>(e)].taps, f, fs) / r;
      for (Eigen::Index m = 0; m < speakers; ++m) {
        s(e, m) = frequency_response(plant.secondary[static_cast<std::size_t>(m)][static_cast<std::size_t>(e)].taps, f, fs);
      }
    }
    if (s.cwiseAbs().maxCoeff() < 1e-6 || std::abs(r) < 1e-6) {
      throw Error(ErrorCode::IllConditioned, "secondary response vanishes in band");
    }
    if (speakers == 1 && sensors == 1) {
      out.filters.push_back(Eigen::VectorXcd::Constant(1, -p[0] / s(0, 0)));
      continue;
    }
    const Eigen::MatrixXcd gram = s.adjoint() * s;
    const double beta = 1e-9 * gram.trace().real() / static_cast<double>(speakers);
    const Eigen::MatrixXcd reg = gram + beta * Eigen::MatrixXcd::Identity(speakers, speakers);
    out.filters.push_back(-reg.ldlt().solve(s.adjoint() * p));
  }
  return out;
}

OracleResponse wiener_oracle(const PlantSet& plant, double lo, double hi, double resolution) {
  std::vector<double> freqs;
  for (double f = std::ceil(lo / resolution) * resolution; f <= hi; f += resolution) freqs.push_back(f);
  return wiener_oracle(plant, freqs);
}

}  // namespace headrest
