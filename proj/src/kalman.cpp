#include "depthcal/kalman.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "depthcal/errors.hpp"

namespace depthcal {

KalmanBelief kf_init(const KalmanConfig& cfg) {
  KalmanBelief b;
  b.mean = DepthRegressorParams::identity();
  b.covariance = cfg.sigma0;
  b.sigma0 = cfg.sigma0;
  b.sigma_motion = cfg.sigma_motion;
  b.sigma_obs = cfg.sigma_obs;
  return b;
}

KalmanBelief kf_predict(const KalmanBelief& b) {
  KalmanBelief out = b;
  out.covariance = b.covariance + b.sigma_motion;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

KalmanBelief kf_update(const KalmanBelief& b, std::span<const double> rel, std::span<const double> depths) {
  if (rel.size() != depths.size()) throw ArityError("kf_update: relative depths and observations differ in length");
  if (rel.empty()) throw NoObservationError("kf_update: no visible keypoints");
  const auto m = static_cast<Eigen::Index>(rel.size());

  Eigen::MatrixXd h(m, 3);
  Eigen::VectorXd o(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = rel[static_cast<std::size_t>(i)];
    const double z = depths[static_cast<std::size_t>(i)];
    if (!std::isfinite(r) || !std::isfinite(z)) throw DomainError("kf_update: non-finite observation");
    h.row(i) = regressor_row(r);
    o(i) = z;
  }

  const Eigen::Matrix3d& p = b.covariance;
  const Eigen::MatrixXd obs_noise = b.sigma_obs * Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd s = h * p * h.transpose() + obs_noise;
  s = 0.5 * (s + s.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || lo < 1e-14 * hi) throw ConditioningError("kf_update: innovation covariance is singular");

  Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  const Eigen::MatrixXd gain = ldlt.solve(h * p).transpose();  // P H^T S^-1
  const Eigen::Vector3d mean = b.mean.vec();
  const Eigen::VectorXd innovation = o - h * mean;

  KalmanBelief out = b;
  out.mean = DepthRegressorParams::from_vec(mean + gain * innovation);
  // Joseph form keeps the posterior symmetric positive semi-definite.
  const Eigen::Matrix3d ikh = Eigen::Matrix3d::Identity() - gain * h;
  Eigen::Matrix3d post = ikh * p * ikh.transpose() + gain * obs_noise * gain.transpose();
  out.covariance = 0.5 * (post + post.transpose());
  return out;
}

KalmanBelief kf_update(const KalmanBelief& b, const KeypointObservationSet& obs, std::span<const double> rel) {
  if (rel.size() != obs.size()) throw ArityError("kf_update: relative depths must be indexed like the observations");
  std::vector<double> r, z;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!obs.visible[i]) continue;
    r.push_back(rel[i]);
    z.push_back(obs.depths[i]);
  }
  return kf_update(b, r, z);
}

}  // namespace depthcal
