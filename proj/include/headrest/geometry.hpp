#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "headrest/error.hpp"

namespace headrest {

template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Pixel2T = Eigen::Matrix<Scalar, 2, 1>;

using Vec3 = Vec3T<double>;
using Pixel2 = Pixel2T<double>;

/// Minimum interocular distance accepted for the symmetry plane (meters).
inline constexpr double kMinEyeSeparation = 0.005;

/// Pinhole intrinsics of the depth camera. Camera frame: +X right in the
/// image, +Y down, +Z along the optical axis.
struct CameraModel {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const;
  bool contains(const Pixel2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
  }
};

template <typename Scalar>
struct ProjectionT {
  Pixel2T<Scalar> pixel;
  Scalar depth;
};
using Projection = ProjectionT<double>;

template <typename Scalar>
ProjectionT<Scalar> project(const Vec3T<Scalar>& p, const CameraModel& cam) {
  if (!(p.z() > Scalar(0))) {
    throw Error(ErrorCode::NonPositiveDepth, "point is at or behind the camera plane");
  }
  const Scalar u = Scalar(cam.fx) * p.x() / p.z() + Scalar(cam.cx);
  const Scalar v = Scalar(cam.fy) * p.y() / p.z() + Scalar(cam.cy);
  return {Pixel2T<Scalar>(u, v), p.z()};
}

template <typename Scalar>
Vec3T<Scalar> deproject(const Pixel2T<Scalar>& px, Scalar depth, const CameraModel& cam) {
  if (!(depth > Scalar(0))) {
    throw Error(ErrorCode::NonPositiveDepth, "depth must be positive");
  }
  return {(px.x() - Scalar(cam.cx)) * depth / Scalar(cam.fx),
          (px.y() - Scalar(cam.cy)) * depth / Scalar(cam.fy), depth};
}

template <typename Scalar>
struct PlaneT {
  Vec3T<Scalar> point;
  Vec3T<Scalar> normal;  // unit length

  Scalar signed_distance(const Vec3T<Scalar>& p) const { return (p - point).dot(normal); }
};
using Plane = PlaneT<double>;

/// Perpendicular bisector plane of the segment a-b, normal pointing a -> b.
template <typename Scalar>
PlaneT<Scalar> bisector_plane(const Vec3T<Scalar>& a, const Vec3T<Scalar>& b) {
  const Vec3T<Scalar> d = b - a;
  const Scalar len = d.norm();
  if (!(len > Scalar(kMinEyeSeparation))) {
    throw Error(ErrorCode::DegenerateEyePair, "eye keypoints closer than the minimum separation");
  }
  return {(a + b) / Scalar(2), d / len};
}

template <typename Scalar>
Vec3T<Scalar> reflect(const Vec3T<Scalar>& p, const PlaneT<Scalar>& plane) {
  return p - Scalar(2) * plane.signed_distance(p) * plane.normal;
}

enum class Keypoint : std::size_t { Nose = 0, LeftEar = 1, RightEar = 2, LeftEye = 3, RightEye = 4 };

/// The five facial keypoints p0..p4 (nose, left ear, right ear, left eye,
/// right eye) in a common metric frame.
struct KeypointSet3D {
  std::array<Vec3, 5> points{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  std::array<double, 5> confidence{1.0, 1.0, 1.0, 1.0, 1.0};

  const Vec3& operator[](Keypoint k) const { return points[static_cast<std::size_t>(k)]; }
  Vec3& operator[](Keypoint k) { return points[static_cast<std::size_t>(k)]; }

  double min_confidence() const;
  double mean_depth() const;  // mean z in the current frame
  bool all_finite() const;
};

enum class Side : unsigned char { Left = 0, Right = 1 };

struct OcclusionDecision {
  double nose_to_left = 0.0;   // |p1 - p0|
  double nose_to_right = 0.0;  // |p2 - p0|
  Side trusted = Side::Left;
};

struct EarEstimate {
  Vec3 left;
  Vec3 right;
  OcclusionDecision decision;

  Vec3 midpoint() const { return 0.5 * (left + right); }
};

/// Recovers both ears from the five keypoints using face symmetry: the ear
/// farther from the nose is taken as observed, the other one is its mirror
/// image across the eye bisector plane. Ties trust the left ear.
EarEstimate infer_true_ears(const KeypointSet3D& kp);

/// Applies a rigid transform to every keypoint, confidences unchanged.
KeypointSet3D transformed(const KeypointSet3D& kp, const Eigen::Isometry3d& transform);

}  // namespace headrest
