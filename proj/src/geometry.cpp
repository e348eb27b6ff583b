#include "headrest/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace headrest {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0 || !(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorCode::InvalidArgument, "principal point must lie inside the sensor");
  }
}

double KeypointSet3D::min_confidence() const {
  return *std::min_element(confidence.begin(), confidence.end());
}

double KeypointSet3D::mean_depth() const {
  double sum = 0.0;
  for (const auto& p : points) sum += p.z();
  return sum / static_cast<double>(points.size());
}

bool KeypointSet3D::all_finite() const {
  return std::all_of(points.begin(), points.end(), [](const Vec3& p) { return p.allFinite(); });
}

EarEstimate infer_true_ears(const KeypointSet3D& kp) {
  if (!kp.all_finite()) {
    throw Error(ErrorCode::NonFiniteKeypoint, "keypoint coordinates must be finite");
  }
  const Vec3& nose = kp[Keypoint::Nose];
  const Vec3& left = kp[Keypoint::LeftEar];
  const Vec3& right = kp[Keypoint::RightEar];

  EarEstimate out;
  out.decision.nose_to_left = (left - nose).norm();
  out.decision.nose_to_right = (right - nose).norm();
  const Plane symmetry = bisector_plane(kp[Keypoint::LeftEye], kp[Keypoint::RightEye]);

  // An occluded ear is reported on the face silhouette, i.e. closer to the nose.
  if (out.decision.nose_to_left >= out.decision.nose_to_right) {
    out.decision.trusted = Side::Left;
    out.left = left;
    out.right = reflect(left, symmetry);
  } else {
    out.decision.trusted = Side::Right;
    out.right = right;
    out.left = reflect(right, symmetry);
  }
  return out;
}

KeypointSet3D transformed(const KeypointSet3D& kp, const Eigen::Isometry3d& transform) {
  KeypointSet3D out = kp;
  for (auto& p : out.points) p = transform * p;
  return out;
}

}  // namespace headrest
