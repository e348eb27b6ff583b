#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "headrest/geometry.hpp"

namespace headrest {

/// Keypoints of a rigid, mirror-symmetric head in its own anatomical frame:
/// +x towards the subject's left, +y up, +z out of the face.
struct HeadGeometry {
  Vec3 nose{0.0, 0.02, 0.10};
  Vec3 left_ear{0.075, 0.0, 0.0};
  Vec3 right_ear{-0.075, 0.0, 0.0};
  Vec3 left_eye{0.032, 0.045, 0.075};
  Vec3 right_eye{-0.032, 0.045, 0.075};
  double skull_radius = 0.095;

  static HeadGeometry canonical() { return {}; }
  void validate() const;
};

/// Head-center position in the stage frame plus yaw about the vertical
/// axis; positive yaw turns the face towards the subject's right.
struct HeadPose {
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;
};

struct GridIndex {
  int i = 0;
  int j = 0;
  int k = 0;
  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Regular 3-D lattice of head-center positions, centred on `origin`.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double spacing = 0.025;
  int nx = 1;
  int ny = 1;
  int nz = 1;

  void validate() const;
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
  Vec3 node(const GridIndex& idx) const;
  bool contains(const GridIndex& idx) const;
  std::size_t linear_index(const GridIndex& idx) const;
  GridIndex index_at(std::size_t linear) const;
  /// Node whose position is `point` to within 1e-9 m, throws NodeOutsideGrid otherwise.
  GridIndex node_at(const Vec3& point) const;

  /// 7x7x3 translation grid of the positioning experiment.
  static GridSpec accuracy_grid();
  /// 5x5x2 translation grid of the headrest experiment: top layer through
  /// the initial head position, second layer 2.5 cm below it.
  static GridSpec headrest_grid();
};

struct ObservationModel {
  double pixel_noise_sigma = 1.0;           // pixels
  double depth_noise_sigma_at_1m = 0.002;   // meters, scales with depth^2
  double occlusion_yaw_threshold = 25.0 * 3.14159265358979323846 / 180.0;
  std::uint64_t seed = 1;

  void validate() const;
  static ObservationModel noiseless();
};

/// Rigid placement of the depth camera relative to the stage frame.
///
/// Stage frame: +x towards the subject's left, +y from the head towards the
/// camera, +z down (so the lower grid layer has positive z). The camera sits
/// on the +y axis looking back at the initial head position.
struct StageCalibration {
  Eigen::Isometry3d camera_from_stage = Eigen::Isometry3d::Identity();

  Eigen::Isometry3d stage_from_camera() const { return camera_from_stage.inverse(); }
  static StageCalibration facing_head(double distance = 0.8);
};

/// Rotation taking head-anatomical axes onto stage axes at zero yaw.
Eigen::Matrix3d stage_from_head_axes();
Eigen::Matrix3d yaw_rotation(double yaw);

/// Ground-truth keypoints in the stage frame.
KeypointSet3D true_keypoints(const HeadGeometry& geom, const HeadPose& pose);

/// Simulated depth-camera observation in the camera frame: pixel and depth
/// noise on every keypoint, and above the occlusion threshold the far ear is
/// replaced by the first hit of its camera ray on the skull sphere.
/// `stream` selects an independent noise stream under `obs.seed`.
KeypointSet3D observe(const HeadGeometry& geom, const HeadPose& pose, const CameraModel& cam,
                      const StageCalibration& calib, const ObservationModel& obs,
                      std::uint64_t stream = 0);

/// Poses at every grid node, i outer, then j, then k.
std::vector<HeadPose> grid_sweep(const GridSpec& grid, double yaw);

}  // namespace headrest
