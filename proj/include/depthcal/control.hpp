#pragma once

#include <Eigen/Core>
#include <string_view>

#include "depthcal/kinematics.hpp"
#include "depthcal/regressor.hpp"

namespace depthcal {

struct ControlConfig {
  Eigen::Matrix3d state_cost = Eigen::Matrix3d::Identity();         // Q
  Eigen::Matrix3d action_cost = 0.1 * Eigen::Matrix3d::Identity();  // R
  Eigen::Vector2d goal_pixel = Eigen::Vector2d(320.0, 240.0);
  double success_epsilon = 0.02;  // meters
  double action_limit = 0.05;     // max |u_k| per step, meters
  int start_frame = 0;            // controller holds before this frame while the estimator settles

  void validate() const;
};

struct LqrSolution {
  Eigen::Matrix3d gain;
  Eigen::Matrix3d cost_to_go;
  int sweeps = 0;
};

/// Infinite-horizon discrete LQR for x_{t+1} = x_t + u_t, solved by
/// fixed-point Riccati iteration from P = Q.
LqrSolution solve_lqr(const Eigen::Matrix3d& q, const Eigen::Matrix3d& r, int max_sweeps = 100000,
                      double tolerance = 1e-12);

/// max |P - (Q + P - P (R + P)^-1 P)|.
double riccati_residual(const Eigen::Matrix3d& p, const Eigen::Matrix3d& q, const Eigen::Matrix3d& r);

/// Largest |eigenvalue| of I - gain.
double closed_loop_spectral_radius(const Eigen::Matrix3d& gain);

/// Back-projects a pixel at its regressed depth. Throws InvalidTargetError when
/// the regressed depth is not positive.
Eigen::Vector3d compute_goal(const CameraModel& camera, const DepthRegressorParams& beta, double rel_depth,
                             const Eigen::Vector2d& goal_pixel);
Eigen::Vector3d compute_state(const CameraModel& camera, const DepthRegressorParams& beta, double rel_depth,
                              const Eigen::Vector2d& ee_pixel);

enum class ControlStatus { ok, invalid_goal, invalid_state, waiting };
std::string_view status_name(ControlStatus s);

struct ControlState {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  Eigen::Vector3d u = Eigen::Vector3d::Zero();
  Eigen::Matrix3d gain = Eigen::Matrix3d::Zero();
  ControlStatus status = ControlStatus::ok;

  static ControlState create(const ControlConfig& cfg);
};

/// One receding-horizon step: recomputes goal and state with the latest
/// coefficients and returns u = -K (x - g), scaled down so |u|_inf does not
/// exceed the action limit. On an invalid goal or state the action is zero
/// and the status is flagged.
Eigen::Vector3d control_step(ControlState& ctrl, const ControlConfig& cfg, const CameraModel& camera,
                             const DepthRegressorParams& beta, double rel_depth_ee, const Eigen::Vector2d& ee_pixel,
                             double rel_depth_goal, const Eigen::Vector2d& goal_pixel);

}  // namespace depthcal
