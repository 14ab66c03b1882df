#pragma once

#include <Eigen/Core>
#include <span>

#include "depthcal/kinematics.hpp"
#include "depthcal/regressor.hpp"

namespace depthcal {

/// Gaussian belief over the regressor coefficients.
struct KalmanBelief {
  DepthRegressorParams mean = DepthRegressorParams::identity();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sigma0 = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sigma_motion = 0.5 * Eigen::Matrix3d::Identity();
  double sigma_obs = 0.03;  // variance of one depth observation
};

struct KalmanConfig {
  Eigen::Matrix3d sigma0 = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d sigma_motion = 0.5 * Eigen::Matrix3d::Identity();
  double sigma_obs = 0.03;
};

KalmanBelief kf_init(const KalmanConfig& cfg = {});

/// Random-walk prediction: mean kept, covariance inflated by the motion noise.
KalmanBelief kf_predict(const KalmanBelief& b);

/// Update with observation rows [r^2, r, 1] and measured depths.
KalmanBelief kf_update(const KalmanBelief& b, std::span<const double> rel, std::span<const double> depths);

/// Update with the visible entries of `obs`; `rel` is indexed like `obs`.
KalmanBelief kf_update(const KalmanBelief& b, const KeypointObservationSet& obs, std::span<const double> rel);

}  // namespace depthcal
