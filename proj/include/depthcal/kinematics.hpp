#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <vector>

namespace depthcal {

/// Element of SE(3): x -> rotation * x + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Eigen::Vector3d& t);
  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle);
  static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);

  RigidTransform operator*(const RigidTransform& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation); }

  /// max |R^T R - I| and |det R - 1|.
  double orthonormality_error() const;
};

/// Revolute joint: T(theta) = Trans(offset) * Rot(axis, theta).
struct RevoluteJoint {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();

  RigidTransform transform(double theta) const;
};

/// Point rigidly attached to a link. `link` is 1-based (link k moves with joint k).
struct KeypointAttachment {
  int link = 1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

class KinematicChain {
 public:
  KinematicChain(std::vector<RevoluteJoint> joints, std::vector<KeypointAttachment> attachments);

  std::size_t joint_count() const { return joints_.size(); }
  std::size_t keypoint_count() const { return attachments_.size(); }
  const std::vector<RevoluteJoint>& joints() const { return joints_; }
  const std::vector<KeypointAttachment>& attachments() const { return attachments_; }

 private:
  std::vector<RevoluteJoint> joints_;
  std::vector<KeypointAttachment> attachments_;
};

inline constexpr double kNearPlane = 0.01;

struct CameraModel {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  RigidTransform camera_from_base;

  Eigen::Matrix3d intrinsics() const;
  bool in_image(const Eigen::Vector2d& px) const;
  void validate() const;
};

struct KeypointObservationSet {
  std::vector<Eigen::Vector2d> pixels;
  std::vector<double> depths;
  std::vector<bool> visible;

  std::size_t size() const { return depths.size(); }
  std::size_t visible_count() const;
};

/// Base-frame pose of every link; element 0 is the base (identity), element k
/// is the product of the first k joint transforms.
std::vector<RigidTransform> forward_kinematics(const KinematicChain& chain, std::span<const double> thetas);

/// Camera-frame position of every keypoint attachment.
std::vector<Eigen::Vector3d> keypoint_camera_points(const KinematicChain& chain, std::span<const double> thetas,
                                                    const CameraModel& camera);

/// Kinematic depth reference of every keypoint: z of the camera-frame point,
/// its projection, and visibility (in front of the near plane and inside the image).
KeypointObservationSet observed_keypoint_depths(const KinematicChain& chain, std::span<const double> thetas,
                                                const CameraModel& camera);

/// Observation set for points already expressed in the camera frame.
KeypointObservationSet observe_camera_points(std::span<const Eigen::Vector3d> points, const CameraModel& camera);

Eigen::Vector2d project(const CameraModel& camera, const Eigen::Vector3d& point);
Eigen::Vector3d backproject(const CameraModel& camera, const Eigen::Vector2d& pixel, double depth);

}  // namespace depthcal
