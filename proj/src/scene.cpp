#include "depthcal/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "depthcal/errors.hpp"

namespace depthcal {

namespace {

constexpr std::uint64_t kStreamDrift = 1;
constexpr std::uint64_t kStreamTrajectory = 2;
constexpr std::uint64_t kStreamNoise = 3;
constexpr std::uint64_t kStreamGoal = 4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

std::string_view warp_name(WarpKind k) {
  switch (k) {
    case WarpKind::inverse_quadratic: return "inverse_quadratic";
    case WarpKind::disparity: return "disparity";
    case WarpKind::affine: return "affine";
  }
  return "?";
}

std::optional<WarpKind> parse_warp(std::string_view name) {
  for (auto k : {WarpKind::inverse_quadratic, WarpKind::disparity, WarpKind::affine})
    if (warp_name(k) == name) return k;
  return std::nullopt;
}

std::size_t WarpModel::arity() const { return kind == WarpKind::inverse_quadratic ? 3 : 2; }

void WarpModel::validate() const {
  if (params.size() != arity()) throw ConfigError("warp: wrong parameter count for " + std::string(warp_name(kind)));
  for (double p : params)
    if (!std::isfinite(p)) throw ConfigError("warp: parameters must be finite");
  const double slope = kind == WarpKind::inverse_quadratic ? params[1] : params[0];
  if (slope == 0.0) throw ConfigError("warp: degenerate (zero slope) warp");
}

bool WarpModel::valid_at(double z) const {
  if (!(z > 0.0) || !std::isfinite(z)) return false;
  switch (kind) {
    case WarpKind::inverse_quadratic: {
      const double b2 = params[0], b1 = params[1], b0 = params[2];
      return b1 != 0.0 && b1 * b1 - 4.0 * b2 * (b0 - z) > 0.0;
    }
    case WarpKind::disparity:
    case WarpKind::affine: return params[0] != 0.0;
  }
  return false;
}

double WarpModel::apply(double z) const {
  if (!valid_at(z)) throw ConfigError("warp is not strictly monotone at depth " + std::to_string(z));
  switch (kind) {
    case WarpKind::inverse_quadratic: {
      const double b2 = params[0], b1 = params[1], b0 = params[2];
      const double disc = b1 * b1 - 4.0 * b2 * (b0 - z);
      // Root on the branch whose slope 2 b2 r + b1 has the sign of b1, written
      // without the cancellation of the textbook formula.
      return 2.0 * (z - b0) / (b1 + std::copysign(std::sqrt(disc), b1));
    }
    case WarpKind::disparity: return params[0] / z + params[1];
    case WarpKind::affine: return params[0] * z + params[1];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double SceneGeometry::ray_depth(const CameraModel& camera, const Eigen::Vector2d& pixel) const {
  // Ray parametrized by camera-frame depth d: p_base(d) = origin + d * dir.
  const RigidTransform base_from_camera = camera.camera_from_base.inverse();
  const Eigen::Vector3d ray_cam((pixel.x() - camera.cx) / camera.fx, (pixel.y() - camera.cy) / camera.fy, 1.0);
  const Eigen::Vector3d origin = base_from_camera.translation;
  const Eigen::Vector3d dir = base_from_camera.rotation * ray_cam;

  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double d) {
    if (d > kNearPlane && d < best) best = d;
  };

  for (const auto& pl : planes) {
    const double denom = pl.normal.dot(dir);
    if (std::abs(denom) < 1e-15) continue;
    consider(pl.normal.dot(pl.point - origin) / denom);
  }
  for (const auto& s : spheres) {
    const Eigen::Vector3d oc = origin - s.center;
    const double a = dir.squaredNorm();
    const double b = 2.0 * dir.dot(oc);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    const double d0 = (-b - sq) / (2.0 * a);
    const double d1 = (-b + sq) / (2.0 * a);
    if (d0 > kNearPlane)
      consider(d0);
    else
      consider(d1);
  }
  for (const auto& bx : boxes) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int i = 0; i < 3 && !miss; ++i) {
      if (std::abs(dir(i)) < 1e-15) {
        miss = origin(i) < bx.min(i) || origin(i) > bx.max(i);
        continue;
      }
      double t1 = (bx.min(i) - origin(i)) / dir(i);
      double t2 = (bx.max(i) - origin(i)) / dir(i);
      if (t1 > t2) std::swap(t1, t2);
      t_near = std::max(t_near, t1);
      t_far = std::min(t_far, t2);
    }
    if (miss || t_near > t_far) continue;
    consider(t_near > kNearPlane ? t_near : t_far);
  }
  return std::isfinite(best) ? best : far_depth;
}

std::vector<Eigen::Vector2d> PixelMask::samples() const {
  std::vector<Eigen::Vector2d> out;
  if (!(stride > 0.0)) return out;
  for (double v = v0; v < v1; v += stride)
    for (double u = u0; u < u1; u += stride) out.emplace_back(u, v);
  return out;
}

void SceneConfig::validate() const {
  if (!chain) throw ConfigError("scene: missing kinematic chain");
  camera.validate();
  warp.validate();
  if (!(warp_drift_std >= 0.0) || !(tracker_noise_px >= 0.0) || !(obs_noise_m >= 0.0))
    throw ConfigError("scene: noise standard deviations must be non-negative");
  if (frames < 1) throw ConfigError("scene: frame count must be at least 1");
  if (!(goal_jitter_px >= 0.0)) throw ConfigError("scene: goal jitter must be non-negative");
  if (!(geometry.keypoint_radius_px >= 0.0) || !(geometry.far_depth > kNearPlane))
    throw ConfigError("scene: invalid geometry settings");
  const std::size_t n = chain->joint_count();
  if (trajectory.kind == TrajectoryKind::sinusoid) {
    if (trajectory.center.size() != n) throw ConfigError("trajectory: center needs one angle per joint");
    if (!trajectory.randomize) {
      if (trajectory.amplitude.size() != n || trajectory.frequency.size() != n || trajectory.phase.size() != n)
        throw ConfigError("trajectory: amplitude/frequency/phase need one entry per joint");
    }
    if (trajectory.amplitude_min > trajectory.amplitude_max || trajectory.frequency_min > trajectory.frequency_max)
      throw ConfigError("trajectory: empty randomization range");
  } else {
    if (trajectory.waypoints.empty()) throw ConfigError("trajectory: waypoint list is empty");
    for (const auto& w : trajectory.waypoints)
      if (w.size() != n) throw ConfigError("trajectory: waypoint needs one angle per joint");
  }
  if (mask.samples().empty()) throw ConfigError("scene: task-space mask is empty");
  control.validate();
  estimator.training.validate();
  if (estimator.training.keypoints != static_cast<int>(chain->keypoint_count()))
    throw ConfigError("scene: estimator keypoint count must match the chain's attachments");
  // The ground-truth warp must be invertible over every depth the scene can produce.
  for (double z = kNearPlane * 10; z <= geometry.far_depth; z += 0.01)
    if (!warp.valid_at(z)) throw ConfigError("scene: warp is not strictly monotone over the depth range");
}

RigidTransform look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d y = z.cross(x);
  RigidTransform t;
  t.rotation.row(0) = x.transpose();
  t.rotation.row(1) = y.transpose();
  t.rotation.row(2) = z.transpose();
  t.translation = -(t.rotation * eye);
  return t;
}

SceneConfig default_scene() {
  SceneConfig s;
  const Eigen::Vector3d ux = Eigen::Vector3d::UnitX(), uy = Eigen::Vector3d::UnitY(), uz = Eigen::Vector3d::UnitZ();
  std::vector<RevoluteJoint> joints = {
      {uz, {0, 0, 0.333}}, {uy, {0, 0, 0}},   {uy, {0, 0, 0.316}},
      {uy, {0, 0, 0.384}}, {uz, {0, 0, 0.1}}, {uy, {0, 0, 0.05}},
  };
  // Keypoints spread over the distal half; the last one is the end effector.
  std::vector<KeypointAttachment> kps = {
      {3, {0, 0, 0.12}}, {3, {0, 0, 0.3}}, {4, {0, 0, 0.05}}, {5, {0, 0, 0.0}}, {6, {0, 0, 0.12}},
  };
  s.chain = std::make_shared<KinematicChain>(std::move(joints), std::move(kps));

  s.camera.camera_from_base = look_at({1.35, -0.75, 0.85}, {0.4, 0.0, 0.25});

  s.warp = WarpModel{WarpKind::inverse_quadratic, {0.5, 1.2, 0.1}};
  s.trajectory.center = {0.0, 0.5, 1.3, 0.9, 0.0, 0.0};

  s.geometry.planes = {Plane{{0, 0, 0}, uz}, Plane{{-0.6, 0, 0}, ux}};
  s.geometry.boxes = {Box{{0.34, 0.14, 0.0}, {0.50, 0.30, 0.12}}, Box{{0.50, -0.25, 0.0}, {0.58, -0.17, 0.10}}};
  s.geometry.spheres = {Sphere{{0.25, 0.35, 0.06}, 0.06}};

  s.mask = PixelMask{180, 210, 484, 416, 8};

  // Top face of the small box.
  s.control.goal_pixel = project(s.camera, s.camera.camera_from_base * Eigen::Vector3d(0.54, -0.21, 0.10));
  s.estimator.training.keypoints = 5;
  return s;
}

std::vector<double> Frame::tracked_relative() const {
  std::vector<double> out(tracked.size(), 0.0);
  for (std::size_t i = 0; i < tracked.size(); ++i)
    if (tracked.visible[i]) out[i] = relative_depth(tracked.pixels[i]);
  return out;
}

double Frame::scene_depth(const Eigen::Vector2d& pixel) const { return geometry->ray_depth(camera, pixel); }

double Frame::true_depth(const Eigen::Vector2d& pixel) const {
  double d = scene_depth(pixel);
  const double r2 = geometry->keypoint_radius_px * geometry->keypoint_radius_px;
  for (std::size_t i = 0; i < keypoint_points.size(); ++i) {
    const double z = keypoint_points[i].z();
    if (z <= kNearPlane || z >= d) continue;
    const Eigen::Vector2d& c = truth.pixels[i];
    if ((pixel - c).squaredNorm() <= r2) d = z;
  }
  return d;
}

Eigen::MatrixXd Frame::relative_depth_map(int stride) const {
  if (stride < 1) throw DomainError("relative_depth_map: stride must be positive");
  const int rows = (camera.height + stride - 1) / stride;
  const int cols = (camera.width + stride - 1) / stride;
  Eigen::MatrixXd map(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) map(i, j) = relative_depth({double(j * stride), double(i * stride)});
  return map;
}

World::World(SceneConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  geometry_ = std::make_shared<const SceneGeometry>(cfg_.geometry);

  warps_.reserve(static_cast<std::size_t>(cfg_.frames));
  warps_.push_back(cfg_.warp);
  std::mt19937_64 drift_rng(mix_seed(cfg_.seed, kStreamDrift));
  std::normal_distribution<double> drift(0.0, 1.0);
  for (int t = 1; t < cfg_.frames; ++t) {
    WarpModel w = warps_.back();
    for (double& p : w.params) p += cfg_.warp_drift_std * drift(drift_rng);
    warps_.push_back(std::move(w));
  }

  trajectory_ = cfg_.trajectory;
  if (trajectory_.kind == TrajectoryKind::sinusoid && trajectory_.randomize) {
    const std::size_t n = cfg_.chain->joint_count();
    std::mt19937_64 rng(mix_seed(cfg_.seed, kStreamTrajectory));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    trajectory_.amplitude.assign(n, 0.0);
    trajectory_.frequency.assign(n, 0.0);
    trajectory_.phase.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      trajectory_.amplitude[j] =
          trajectory_.amplitude_min + (trajectory_.amplitude_max - trajectory_.amplitude_min) * unit(rng);
      trajectory_.frequency[j] =
          trajectory_.frequency_min + (trajectory_.frequency_max - trajectory_.frequency_min) * unit(rng);
      trajectory_.phase[j] = 2.0 * std::numbers::pi * unit(rng);
    }
  }

  if (cfg_.goal_jitter_px > 0.0) {
    std::mt19937_64 rng(mix_seed(cfg_.seed, kStreamGoal));
    std::uniform_real_distribution<double> jitter(-cfg_.goal_jitter_px, cfg_.goal_jitter_px);
    cfg_.control.goal_pixel += Eigen::Vector2d(jitter(rng), jitter(rng));
  }
}

std::vector<double> World::joint_angles(int t) const {
  const std::size_t n = cfg_.chain->joint_count();
  std::vector<double> th(n);
  if (trajectory_.kind == TrajectoryKind::sinusoid) {
    const double s = static_cast<double>(t) / static_cast<double>(cfg_.frames);
    for (std::size_t j = 0; j < n; ++j)
      th[j] = trajectory_.center[j] +
              trajectory_.amplitude[j] * std::sin(2.0 * std::numbers::pi * trajectory_.frequency[j] * s +
                                                  trajectory_.phase[j]);
    return th;
  }
  const auto& wp = trajectory_.waypoints;
  if (wp.size() == 1 || cfg_.frames == 1) return wp.front();
  const double pos = static_cast<double>(t) * static_cast<double>(wp.size() - 1) / static_cast<double>(cfg_.frames - 1);
  const auto k = std::min(static_cast<std::size_t>(pos), wp.size() - 2);
  const double a = pos - static_cast<double>(k);
  for (std::size_t j = 0; j < n; ++j) th[j] = (1.0 - a) * wp[k][j] + a * wp[k + 1][j];
  return th;
}

Frame World::generate_frame(int t, const std::optional<Eigen::Vector3d>& ee_override) const {
  if (t < 0 || t >= cfg_.frames) throw DomainError("generate_frame: frame index out of range");
  Frame f;
  f.t = t;
  f.thetas = joint_angles(t);
  f.warp = warps_[static_cast<std::size_t>(t)];
  f.geometry = geometry_;
  f.camera = cfg_.camera;
  f.keypoint_points = keypoint_camera_points(*cfg_.chain, f.thetas, cfg_.camera);
  if (ee_override) f.keypoint_points.back() = *ee_override;

  f.truth = observe_camera_points(f.keypoint_points, cfg_.camera);
  // A keypoint hidden behind a nearer surface or another keypoint is not visible. Points in contact
  // with a surface (within the margin) still count as visible.
  constexpr double kContactMargin = 0.01;
  for (std::size_t i = 0; i < f.truth.size(); ++i) {
    if (!f.truth.visible[i]) continue;
    if (f.true_depth(f.truth.pixels[i]) < f.truth.depths[i] - kContactMargin) f.truth.visible[i] = false;
  }

  std::mt19937_64 rng(mix_seed(cfg_.seed, kStreamNoise, static_cast<std::uint64_t>(t)));
  std::normal_distribution<double> unit(0.0, 1.0);
  f.tracked = f.truth;
  for (std::size_t i = 0; i < f.tracked.size(); ++i) {
    const double du = unit(rng), dv = unit(rng), dz = unit(rng);
    if (!f.truth.visible[i]) continue;
    f.tracked.pixels[i] += cfg_.tracker_noise_px * Eigen::Vector2d(du, dv);
    f.tracked.depths[i] += cfg_.obs_noise_m * dz;
    if (!cfg_.camera.in_image(f.tracked.pixels[i])) f.tracked.visible[i] = false;
  }
  return f;
}

}  // namespace depthcal
