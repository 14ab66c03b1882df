#include "depthcal/control.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "depthcal/errors.hpp"

namespace depthcal {

namespace {

bool symmetric(const Eigen::Matrix3d& m) { return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12; }

double min_eigenvalue(const Eigen::Matrix3d& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

void check_costs(const Eigen::Matrix3d& q, const Eigen::Matrix3d& r) {
  if (!q.allFinite() || !symmetric(q) || min_eigenvalue(q) < -1e-12)
    throw DomainError("LQR state cost must be symmetric positive semi-definite");
  if (!r.allFinite() || !symmetric(r) || !(min_eigenvalue(r) > 0.0))
    throw DomainError("LQR action cost must be symmetric positive definite");
}

}  // namespace

void ControlConfig::validate() const {
  check_costs(state_cost, action_cost);
  if (!(success_epsilon > 0.0)) throw ConfigError("control: success epsilon must be positive");
  if (!(action_limit > 0.0)) throw ConfigError("control: action limit must be positive");
  if (start_frame < 0) throw ConfigError("control: start frame must be non-negative");
  if (!goal_pixel.allFinite()) throw ConfigError("control: goal pixel must be finite");
}

LqrSolution solve_lqr(const Eigen::Matrix3d& q, const Eigen::Matrix3d& r, int max_sweeps, double tolerance) {
  check_costs(q, r);
  Eigen::Matrix3d p = q;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    const Eigen::Matrix3d s = r + p;
    Eigen::Matrix3d next = q + p - p * s.ldlt().solve(p);
    next = 0.5 * (next + next.transpose()).eval();
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (change < tolerance) {
      LqrSolution sol;
      sol.cost_to_go = p;
      sol.gain = (r + p).ldlt().solve(p);
      sol.sweeps = sweep;
      return sol;
    }
  }
  throw ConvergenceError("solve_lqr: Riccati iteration did not converge",
                         std::vector<double>(p.data(), p.data() + p.size()));
}

double riccati_residual(const Eigen::Matrix3d& p, const Eigen::Matrix3d& q, const Eigen::Matrix3d& r) {
  const Eigen::Matrix3d rhs = q + p - p * (r + p).ldlt().solve(p);
  return (p - rhs).cwiseAbs().maxCoeff();
}

double closed_loop_spectral_radius(const Eigen::Matrix3d& gain) {
  const Eigen::Matrix3d a = Eigen::Matrix3d::Identity() - gain;
  return Eigen::EigenSolver<Eigen::Matrix3d>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::Vector3d compute_goal(const CameraModel& camera, const DepthRegressorParams& beta, double rel_depth,
                             const Eigen::Vector2d& goal_pixel) {
  const double depth = eval_regressor(beta, rel_depth);
  if (!(depth > 0.0)) throw InvalidTargetError("compute_goal: regressed depth is not positive");
  return backproject(camera, goal_pixel, depth);
}

Eigen::Vector3d compute_state(const CameraModel& camera, const DepthRegressorParams& beta, double rel_depth,
                              const Eigen::Vector2d& ee_pixel) {
  const double depth = eval_regressor(beta, rel_depth);
  if (!(depth > 0.0)) throw InvalidTargetError("compute_state: regressed depth is not positive");
  return backproject(camera, ee_pixel, depth);
}

std::string_view status_name(ControlStatus s) {
  switch (s) {
    case ControlStatus::ok: return "ok";
    case ControlStatus::invalid_goal: return "invalid_goal";
    case ControlStatus::invalid_state: return "invalid_state";
    case ControlStatus::waiting: return "waiting";
  }
  return "?";
}

ControlState ControlState::create(const ControlConfig& cfg) {
  cfg.validate();
  ControlState s;
  s.gain = solve_lqr(cfg.state_cost, cfg.action_cost).gain;
  return s;
}

Eigen::Vector3d control_step(ControlState& ctrl, const ControlConfig& cfg, const CameraModel& camera,
                             const DepthRegressorParams& beta, double rel_depth_ee, const Eigen::Vector2d& ee_pixel,
                             double rel_depth_goal, const Eigen::Vector2d& goal_pixel) {
  ctrl.u.setZero();
  try {
    ctrl.g = compute_goal(camera, beta, rel_depth_goal, goal_pixel);
  } catch (const DomainError&) {
    ctrl.status = ControlStatus::invalid_goal;
    return ctrl.u;
  }
  try {
    ctrl.x = compute_state(camera, beta, rel_depth_ee, ee_pixel);
  } catch (const DomainError&) {
    ctrl.status = ControlStatus::invalid_state;
    return ctrl.u;
  }
  ctrl.status = ControlStatus::ok;
  Eigen::Vector3d u = -ctrl.gain * (ctrl.x - ctrl.g);
  const double peak = u.cwiseAbs().maxCoeff();
  if (peak > cfg.action_limit) u *= cfg.action_limit / peak;
  ctrl.u = u;
  return u;
}

}  // namespace depthcal
