#include "headrest/head_scene.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "headrest/rng.hpp"

namespace headrest {

void HeadGeometry::validate() const {
  for (const Vec3* p : {&nose, &left_ear, &right_ear, &left_eye, &right_eye}) {
    if (!p->allFinite()) throw Error(ErrorCode::InvalidArgument, "head keypoints must be finite");
  }
  if (!(skull_radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "skull radius must be positive");
  if (left_ear.norm() > skull_radius || right_ear.norm() > skull_radius) {
    throw Error(ErrorCode::InvalidArgument, "ears must lie within the skull sphere");
  }
}

void GridSpec::validate() const {
  if (!(spacing > 0.0) || nx < 1 || ny < 1 || nz < 1 || !origin.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "grid needs positive spacing and node counts");
  }
}

Vec3 GridSpec::node(const GridIndex& idx) const {
  return origin + spacing * Vec3(idx.i - 0.5 * (nx - 1), idx.j - 0.5 * (ny - 1), idx.k - 0.5 * (nz - 1));
}

bool GridSpec::contains(const GridIndex& idx) const {
  return idx.i >= 0 && idx.i < nx && idx.j >= 0 && idx.j < ny && idx.k >= 0 && idx.k < nz;
}

std::size_t GridSpec::linear_index(const GridIndex& idx) const {
  return (static_cast<std::size_t>(idx.i) * ny + idx.j) * nz + idx.k;
}

GridIndex GridSpec::index_at(std::size_t linear) const {
  const auto k = static_cast<int>(linear % nz);
  const auto j = static_cast<int>((linear / nz) % ny);
  const auto i = static_cast<int>(linear / (static_cast<std::size_t>(nz) * ny));
  return {i, j, k};
}

GridIndex GridSpec::node_at(const Vec3& point) const {
  const Vec3 rel = (point - origin) / spacing;
  const GridIndex idx{static_cast<int>(std::lround(rel.x() + 0.5 * (nx - 1))),
                      static_cast<int>(std::lround(rel.y() + 0.5 * (ny - 1))),
                      static_cast<int>(std::lround(rel.z() + 0.5 * (nz - 1)))};
  if (!contains(idx) || (node(idx) - point).norm() > 1e-9) {
    throw Error(ErrorCode::NodeOutsideGrid, "point is not a node of the grid");
  }
  return idx;
}

GridSpec GridSpec::accuracy_grid() { return {Vec3::Zero(), 0.025, 7, 7, 3}; }

GridSpec GridSpec::headrest_grid() { return {Vec3(0.0, 0.0, 0.0125), 0.025, 5, 5, 2}; }

void ObservationModel::validate() const {
  if (!(pixel_noise_sigma >= 0.0) || !(depth_noise_sigma_at_1m >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise sigmas must be non-negative");
  }
  if (!(occlusion_yaw_threshold > 0.0 && occlusion_yaw_threshold < std::numbers::pi / 2)) {
    throw Error(ErrorCode::InvalidArgument, "occlusion threshold must lie in (0, pi/2)");
  }
}

ObservationModel ObservationModel::noiseless() {
  ObservationModel m;
  m.pixel_noise_sigma = 0.0;
  m.depth_noise_sigma_at_1m = 0.0;
  return m;
}

StageCalibration StageCalibration::facing_head(double distance) {
  // camera X = stage x, camera Y = stage z (down), camera Z = distance - stage y
  Eigen::Matrix3d r;
  r << 1, 0, 0,
       0, 0, 1,
       0, -1, 0;
  StageCalibration calib;
  calib.camera_from_stage.linear() = r;
  calib.camera_from_stage.translation() = Vec3(0.0, 0.0, distance);
  return calib;
}

Eigen::Matrix3d stage_from_head_axes() {
  // left -> +x, up -> -z, face -> +y
  Eigen::Matrix3d m;
  m << 1, 0, 0,
       0, 0, 1,
       0, -1, 0;
  return m;
}

Eigen::Matrix3d yaw_rotation(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

KeypointSet3D true_keypoints(const HeadGeometry& geom, const HeadPose& pose) {
  const Eigen::Matrix3d r = yaw_rotation(pose.yaw) * stage_from_head_axes();
  KeypointSet3D kp;
  kp[Keypoint::Nose] = r * geom.nose + pose.center;
  kp[Keypoint::LeftEar] = r * geom.left_ear + pose.center;
  kp[Keypoint::RightEar] = r * geom.right_ear + pose.center;
  kp[Keypoint::LeftEye] = r * geom.left_eye + pose.center;
  kp[Keypoint::RightEye] = r * geom.right_eye + pose.center;
  return kp;
}

namespace {

// First intersection of the ray t*dir (t > 0) with a sphere; the closest
// approach point when the ray misses.
Vec3 first_hit_on_sphere(const Vec3& dir, const Vec3& center, double radius) {
  const double a = dir.squaredNorm();
  const double b = dir.dot(center);
  const double c = center.squaredNorm() - radius * radius;
  const double disc = b * b - a * c;
  const double t = disc >= 0.0 ? (b - std::sqrt(disc)) / a : b / a;
  return t * dir;
}

}  // namespace

KeypointSet3D observe(const HeadGeometry& geom, const HeadPose& pose, const CameraModel& cam,
                      const StageCalibration& calib, const ObservationModel& obs, std::uint64_t stream) {
  const KeypointSet3D truth = transformed(true_keypoints(geom, pose), calib.camera_from_stage);
  const Vec3 head_center = calib.camera_from_stage * pose.center;

  std::size_t occluded = truth.points.size();  // none
  if (std::abs(pose.yaw) > obs.occlusion_yaw_threshold) {
    occluded = static_cast<std::size_t>(pose.yaw > 0.0 ? Keypoint::RightEar : Keypoint::LeftEar);
  }

  auto rng = make_engine(obs.seed, stream);
  std::normal_distribution<double> unit(0.0, 1.0);

  KeypointSet3D out;
  for (std::size_t i = 0; i < truth.points.size(); ++i) {
    // Three draws per keypoint regardless of occlusion keep streams aligned.
    const double du = unit(rng);
    const double dv = unit(rng);
    const double dz = unit(rng);

    const Projection proj = project(truth.points[i], cam);
    const Pixel2 px = proj.pixel + obs.pixel_noise_sigma * Pixel2(du, dv);
    if (!cam.contains(px)) {
      throw Error(ErrorCode::OutOfFrustum, "keypoint projects outside the sensor");
    }
    double depth = proj.depth;
    if (i == occluded) {
      const Vec3 ray = deproject(px, 1.0, cam);
      depth = first_hit_on_sphere(ray, head_center, geom.skull_radius).z();
      out.confidence[i] = 0.6;
    }
    depth += obs.depth_noise_sigma_at_1m * depth * depth * dz;
    out.points[i] = deproject(px, depth, cam);
  }
  return out;
}

std::vector<HeadPose> grid_sweep(const GridSpec& grid, double yaw) {
  grid.validate();
  std::vector<HeadPose> poses;
  poses.reserve(grid.size());
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      for (int k = 0; k < grid.nz; ++k) poses.push_back({grid.node({i, j, k}), yaw});
    }
  }
  return poses;
}

}  // namespace headrest
