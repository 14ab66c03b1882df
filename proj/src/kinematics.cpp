#include "depthcal/kinematics.hpp"

#include <cmath>
#include <string>

#include "depthcal/errors.hpp"

namespace depthcal {

RigidTransform RigidTransform::from_translation(const Eigen::Vector3d& t) {
  RigidTransform out;
  out.translation = t;
  return out;
}

RigidTransform RigidTransform::from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  RigidTransform out;
  out.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  return out;
}

RigidTransform RigidTransform::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
  RigidTransform out;
  out.rotation = q.normalized().toRotationMatrix();
  out.translation = t;
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

double RigidTransform::orthonormality_error() const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

RigidTransform RevoluteJoint::transform(double theta) const {
  RigidTransform out = RigidTransform::from_axis_angle(axis, theta);
  out.translation = offset;
  return out;
}

KinematicChain::KinematicChain(std::vector<RevoluteJoint> joints, std::vector<KeypointAttachment> attachments)
    : joints_(std::move(joints)), attachments_(std::move(attachments)) {
  if (joints_.empty()) throw ConfigError("kinematic chain needs at least one joint");
  for (const auto& j : joints_) {
    if (!j.axis.allFinite() || j.axis.norm() < 1e-12) throw ConfigError("joint axis must be a finite non-zero vector");
    if (!j.offset.allFinite()) throw ConfigError("joint offset must be finite");
  }
  for (const auto& a : attachments_) {
    if (a.link < 1 || a.link > static_cast<int>(joints_.size()))
      throw ConfigError("keypoint attachment link " + std::to_string(a.link) + " outside [1, n]");
    if (!a.offset.allFinite()) throw ConfigError("keypoint offset must be finite");
  }
}

Eigen::Matrix3d CameraModel::intrinsics() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

bool CameraModel::in_image(const Eigen::Vector2d& px) const {
  return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < width && px.y() < height;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("camera principal point must be finite");
  if (width <= 0 || height <= 0) throw ConfigError("camera image size must be positive");
  if (camera_from_base.orthonormality_error() > 1e-9) throw ConfigError("camera extrinsic rotation is not in SO(3)");
}

std::size_t KeypointObservationSet::visible_count() const {
  std::size_t n = 0;
  for (bool v : visible) n += v ? 1 : 0;
  return n;
}

std::vector<RigidTransform> forward_kinematics(const KinematicChain& chain, std::span<const double> thetas) {
  if (thetas.size() != chain.joint_count())
    throw ArityError("forward_kinematics: expected " + std::to_string(chain.joint_count()) + " joint angles, got " +
                     std::to_string(thetas.size()));
  std::vector<RigidTransform> poses;
  poses.reserve(thetas.size() + 1);
  poses.push_back(RigidTransform::identity());
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    if (!std::isfinite(thetas[i])) throw DomainError("forward_kinematics: joint angle is not finite");
    poses.push_back(poses.back() * chain.joints()[i].transform(thetas[i]));
  }
  return poses;
}

std::vector<Eigen::Vector3d> keypoint_camera_points(const KinematicChain& chain, std::span<const double> thetas,
                                                    const CameraModel& camera) {
  const auto poses = forward_kinematics(chain, thetas);
  std::vector<Eigen::Vector3d> out;
  out.reserve(chain.keypoint_count());
  for (const auto& a : chain.attachments())
    out.push_back(camera.camera_from_base * (poses[static_cast<std::size_t>(a.link)] * a.offset));
  return out;
}

KeypointObservationSet observe_camera_points(std::span<const Eigen::Vector3d> points, const CameraModel& camera) {
  KeypointObservationSet obs;
  for (const auto& p : points) {
    obs.depths.push_back(p.z());
    if (p.z() <= kNearPlane) {
      obs.pixels.emplace_back(std::nan(""), std::nan(""));
      obs.visible.push_back(false);
      continue;
    }
    const Eigen::Vector2d px = project(camera, p);
    obs.pixels.push_back(px);
    obs.visible.push_back(camera.in_image(px));
  }
  return obs;
}

KeypointObservationSet observed_keypoint_depths(const KinematicChain& chain, std::span<const double> thetas,
                                                const CameraModel& camera) {
  const auto pts = keypoint_camera_points(chain, thetas, camera);
  return observe_camera_points(pts, camera);
}

Eigen::Vector2d project(const CameraModel& camera, const Eigen::Vector3d& point) {
  if (!(point.z() > 0.0)) throw BehindCameraError("project: point is not in front of the camera");
  return {camera.fx * point.x() / point.z() + camera.cx, camera.fy * point.y() / point.z() + camera.cy};
}

Eigen::Vector3d backproject(const CameraModel& camera, const Eigen::Vector2d& pixel, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw DomainError("backproject: depth must be positive");
  // K^-1 (u, v, 1) for zero skew.
  return {depth * (pixel.x() - camera.cx) / camera.fx, depth * (pixel.y() - camera.cy) / camera.fy, depth};
}

}  // namespace depthcal
