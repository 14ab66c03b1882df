#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "depthcal/control.hpp"
#include "depthcal/estimator.hpp"
#include "depthcal/kinematics.hpp"

namespace depthcal {

enum class WarpKind { inverse_quadratic, disparity, affine };

std::string_view warp_name(WarpKind k);
std::optional<WarpKind> parse_warp(std::string_view name);

/// Ground-truth monotone map from metric depth to relative depth.
///   inverse_quadratic: r solves beta2 r^2 + beta1 r + beta0 = Z on the branch
///                      where the slope has the sign of beta1
///   disparity:         r = a / Z + b
///   affine:            r = a Z + b
struct WarpModel {
  WarpKind kind = WarpKind::inverse_quadratic;
  std::vector<double> params = {0.5, 1.2, 0.1};

  /// Throws ConfigError when the warp is not strictly monotone at Z.
  double apply(double metric_depth) const;
  bool valid_at(double metric_depth) const;
  std::size_t arity() const;
  void validate() const;
};

struct Plane {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Ones();
};

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.1;
};

/// Static scene surfaces in the robot base frame.
struct SceneGeometry {
  std::vector<Plane> planes;
  std::vector<Box> boxes;
  std::vector<Sphere> spheres;
  double far_depth = 5.0;          // returned when a ray hits nothing
  double keypoint_radius_px = 12.0; // robot keypoints render as fronto-parallel discs

  /// Camera-frame depth of the nearest surface along the pixel's ray.
  double ray_depth(const CameraModel& camera, const Eigen::Vector2d& pixel) const;
};

enum class TrajectoryKind { sinusoid, waypoints };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::sinusoid;
  std::vector<double> center;
  std::vector<double> amplitude;
  std::vector<double> frequency;  // cycles over the whole trial
  std::vector<double> phase;
  bool randomize = true;          // draw amplitude/frequency/phase from the seed
  double amplitude_min = 0.1;
  double amplitude_max = 0.3;
  double frequency_min = 0.5;
  double frequency_max = 1.5;
  std::vector<std::vector<double>> waypoints;  // evenly spaced in time
};

/// Pixel rectangle [u0, u1) x [v0, v1) sampled every `stride` pixels.
struct PixelMask {
  double u0 = 0, v0 = 0, u1 = 640, v1 = 480;
  double stride = 8;

  std::vector<Eigen::Vector2d> samples() const;
};

struct SceneConfig {
  std::string name = "default";
  std::shared_ptr<const KinematicChain> chain;
  CameraModel camera;
  WarpModel warp;
  double warp_drift_std = 0.0;
  double tracker_noise_px = 0.0;
  double obs_noise_m = 0.0;
  TrajectorySpec trajectory;
  SceneGeometry geometry;
  PixelMask mask;
  ControlConfig control;
  double goal_jitter_px = 0.0;
  EstimatorConfig estimator;
  int frames = 300;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Camera-from-base transform of a camera at `eye` whose optical axis points
/// at `target`, image x axis horizontal.
RigidTransform look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target);

/// Reference scene: six-joint arm with five keypoints on its distal links,
/// tabletop with a few objects, camera facing the workspace.
SceneConfig default_scene();

/// One simulated timestep.
struct Frame {
  int t = 0;
  std::vector<double> thetas;
  std::vector<Eigen::Vector3d> keypoint_points;  // camera frame, ground truth
  KeypointObservationSet truth;    // exact pixels and kinematic depths; occlusion-aware visibility
  KeypointObservationSet tracked;  // tracker-noise pixels, depth-noise observations
  WarpModel warp;                  // warp in effect at t (after drift)

  std::shared_ptr<const SceneGeometry> geometry;
  CameraModel camera;

  /// Ground-truth metric depth including the robot keypoint discs.
  double true_depth(const Eigen::Vector2d& pixel) const;
  /// Ground-truth depth of the static scene only (robot removed).
  double scene_depth(const Eigen::Vector2d& pixel) const;
  double relative_depth(const Eigen::Vector2d& pixel) const { return warp.apply(true_depth(pixel)); }
  double scene_relative_depth(const Eigen::Vector2d& pixel) const { return warp.apply(scene_depth(pixel)); }

  /// Relative depth at each tracked keypoint pixel; 0 where not visible.
  std::vector<double> tracked_relative() const;

  /// Relative-depth image sampled every `stride` pixels (row-major rows = v).
  Eigen::MatrixXd relative_depth_map(int stride = 1) const;
};

/// Deterministic frame generator for one scene and seed.
class World {
 public:
  explicit World(SceneConfig cfg);

  const SceneConfig& config() const { return cfg_; }
  int frames() const { return cfg_.frames; }

  std::vector<double> joint_angles(int t) const;
  const WarpModel& warp_at(int t) const { return warps_.at(static_cast<std::size_t>(t)); }

  /// Frame t. `ee_override` replaces the camera-frame position of the last
  /// keypoint (the end effector) when the controller is driving it.
  Frame generate_frame(int t, const std::optional<Eigen::Vector3d>& ee_override = std::nullopt) const;

 private:
  SceneConfig cfg_;
  std::shared_ptr<const SceneGeometry> geometry_;
  std::vector<WarpModel> warps_;
  TrajectorySpec trajectory_;
};

/// Stateless seed mixing for independent random streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace depthcal
