#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "headrest/acoustics.hpp"
#include "headrest/fxlms.hpp"
#include "headrest/geometry.hpp"
#include "headrest/head_scene.hpp"

namespace headrest {

/// Everything an experiment run depends on. Serialises to an INI text that
/// parses back to an identical configuration.
struct ExperimentConfig {
  CameraModel camera;
  double camera_distance = 0.8;
  HeadGeometry head;
  ObservationModel observation;
  bool noise = true;
  double frames_per_second = 32.0;
  double confidence_gate = 0.3;
  AcousticScene scene = AcousticScene::default_headrest();
  FxlmsConfig fxlms;

  std::uint64_t seed = 1;
  int accuracy_reps = 100;
  Vec3 accuracy_rotation_center = Vec3::Zero();
  Vec3 anc_rotation_center{0.0, 0.0, 0.025};
  std::vector<double> rotation_angles_deg{15.0, 30.0, 45.0, 60.0};
  std::vector<double> anc_angles_deg{0.0, 15.0, 30.0, 45.0, 60.0};
  int nr_seeds = 5;
  double control_duration = 2.0;  // seconds of fixed-filter control per seed
  int ep_frames = 8;              // provider frames per EP-on measurement
  Vec3 spectrum_node{-0.025, -0.025, 0.025};
  double spectrum_resolution = 7.8125;
  double quiet_zone_offset = 0.05;
  std::vector<double> quiet_zone_frequencies{200.0, 2000.0};
  int quiet_zone_seeds = 10;

  void validate() const;

  StageCalibration calibration() const { return StageCalibration::facing_head(camera_distance); }
  /// Observation model with the configured noise switch and `seed` applied.
  ObservationModel observation_model() const;
  /// Derived seeds; each experiment stage draws from its own stream.
  std::uint64_t training_seed() const;
  std::uint64_t control_seed(int repetition) const;
};

/// Parses INI text. A file whose first line starts with "# [" is taken to be
/// a CSV written by this tool, and only its "# " header lines are read.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
std::string to_ini(const ExperimentConfig& cfg);

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace headrest
