#include "depthcal/config_io.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <initializer_list>
#include <set>

#include <fmt/format.h>

#include "depthcal/errors.hpp"

namespace depthcal {

namespace {

void check_keys(const Json& j, std::string_view where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!ok.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
  }
}

double number(const Json& j, std::string_view where) {
  if (!j.is_number()) throw ConfigError(fmt::format("{}: expected a number", where));
  return j.get<double>();
}

template <class T>
void read(const Json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("{}.{}: wrong type", where, key));
  }
}

Eigen::Vector3d vec3(const Json& j, std::string_view where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(fmt::format("{}: expected 3 numbers", where));
  return {number(j[0], where), number(j[1], where), number(j[2], where)};
}

Eigen::Vector2d vec2(const Json& j, std::string_view where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(fmt::format("{}: expected 2 numbers", where));
  return {number(j[0], where), number(j[1], where)};
}

Json vec_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

/// A number means a multiple of the identity, 3 numbers a diagonal, 3x3 a full matrix.
Eigen::Matrix3d matrix3(const Json& j, std::string_view where) {
  if (j.is_number()) return number(j, where) * Eigen::Matrix3d::Identity();
  if (j.is_array() && j.size() == 3 && j[0].is_number()) return vec3(j, where).asDiagonal();
  return matrix_from_json(j, 3, 3);
}

RigidTransform transform_from_json(const Json& j, const RigidTransform& base) {
  check_keys(j, "camera.extrinsics", {"quaternion", "translation", "eye", "target"});
  if (j.contains("eye") || j.contains("target")) {
    if (!j.contains("eye") || !j.contains("target"))
      throw ConfigError("camera.extrinsics: eye and target must be given together");
    return look_at(vec3(j["eye"], "camera.extrinsics.eye"), vec3(j["target"], "camera.extrinsics.target"));
  }
  RigidTransform t = base;
  if (j.contains("quaternion")) {
    const auto& q = j["quaternion"];
    if (!q.is_array() || q.size() != 4) throw ConfigError("camera.extrinsics.quaternion: expected [w, x, y, z]");
    Eigen::Quaterniond quat(number(q[0], "quaternion"), number(q[1], "quaternion"), number(q[2], "quaternion"),
                            number(q[3], "quaternion"));
    if (!(quat.norm() > 0.0)) throw ConfigError("camera.extrinsics.quaternion: zero quaternion");
    t.rotation = quat.normalized().toRotationMatrix();
  }
  if (j.contains("translation")) t.translation = vec3(j["translation"], "camera.extrinsics.translation");
  return t;
}

std::shared_ptr<const KinematicChain> chain_from_json(const Json& j, const KinematicChain* base) {
  check_keys(j, "chain", {"joints", "keypoints"});
  std::vector<RevoluteJoint> joints = base ? base->joints() : std::vector<RevoluteJoint>{};
  std::vector<KeypointAttachment> kps = base ? base->attachments() : std::vector<KeypointAttachment>{};
  if (j.contains("joints")) {
    joints.clear();
    for (const auto& jj : j["joints"]) {
      check_keys(jj, "chain.joints[]", {"axis", "offset"});
      RevoluteJoint rj;
      if (jj.contains("axis")) rj.axis = vec3(jj["axis"], "chain.joints[].axis");
      if (jj.contains("offset")) rj.offset = vec3(jj["offset"], "chain.joints[].offset");
      joints.push_back(rj);
    }
  }
  if (j.contains("keypoints")) {
    kps.clear();
    for (const auto& kj : j["keypoints"]) {
      check_keys(kj, "chain.keypoints[]", {"link", "offset"});
      KeypointAttachment a;
      read(kj, "link", a.link, "chain.keypoints[]");
      if (kj.contains("offset")) a.offset = vec3(kj["offset"], "chain.keypoints[].offset");
      kps.push_back(a);
    }
  }
  return std::make_shared<const KinematicChain>(std::move(joints), std::move(kps));
}

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

}  // namespace

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ConfigError(fmt::format("expected a {}x{} matrix", rows, cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(fmt::format("expected a {}x{} matrix", rows, cols));
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], "matrix");
  }
  return m;
}

Json training_to_json(const TrainingConfig& c) {
  return Json{{"keypoints", c.keypoints},
              {"history", c.history},
              {"hidden_size", c.hidden_size},
              {"head_hidden", c.head_hidden},
              {"inner_steps", c.inner_steps},
              {"learning_rate", c.learning_rate},
              {"huber_delta", c.huber_delta},
              {"alpha1", c.alpha1},
              {"alpha2", c.alpha2},
              {"grad_clip_norm", c.grad_clip_norm},
              {"optimizer", std::string(optimizer_name(c.optimizer))},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"seed", c.seed}};
}

TrainingConfig training_from_json(const Json& j, const TrainingConfig& base) {
  check_keys(j, "training",
             {"keypoints", "history", "hidden_size", "head_hidden", "inner_steps", "learning_rate", "huber_delta",
              "alpha1", "alpha2", "grad_clip_norm", "optimizer", "adam_beta1", "adam_beta2", "adam_epsilon", "seed"});
  TrainingConfig c = base;
  read(j, "keypoints", c.keypoints, "training");
  read(j, "history", c.history, "training");
  read(j, "hidden_size", c.hidden_size, "training");
  read(j, "head_hidden", c.head_hidden, "training");
  read(j, "inner_steps", c.inner_steps, "training");
  read(j, "learning_rate", c.learning_rate, "training");
  read(j, "huber_delta", c.huber_delta, "training");
  read(j, "alpha1", c.alpha1, "training");
  read(j, "alpha2", c.alpha2, "training");
  read(j, "grad_clip_norm", c.grad_clip_norm, "training");
  read(j, "adam_beta1", c.adam_beta1, "training");
  read(j, "adam_beta2", c.adam_beta2, "training");
  read(j, "adam_epsilon", c.adam_epsilon, "training");
  read(j, "seed", c.seed, "training");
  if (j.contains("optimizer")) {
    const std::string name = j["optimizer"].is_string() ? j["optimizer"].get<std::string>() : "";
    if (name == "sgd")
      c.optimizer = OptimizerKind::sgd;
    else if (name == "adam")
      c.optimizer = OptimizerKind::adam;
    else
      throw ConfigError("training.optimizer: expected \"sgd\" or \"adam\"");
  }
  return c;
}

Json kalman_to_json(const KalmanConfig& c) {
  return Json{{"sigma0", matrix_to_json(c.sigma0)},
              {"sigma_motion", matrix_to_json(c.sigma_motion)},
              {"sigma_obs", c.sigma_obs}};
}

KalmanConfig kalman_from_json(const Json& j, const KalmanConfig& base) {
  check_keys(j, "kalman", {"sigma0", "sigma_motion", "sigma_obs"});
  KalmanConfig c = base;
  if (j.contains("sigma0")) c.sigma0 = matrix3(j["sigma0"], "kalman.sigma0");
  if (j.contains("sigma_motion")) c.sigma_motion = matrix3(j["sigma_motion"], "kalman.sigma_motion");
  read(j, "sigma_obs", c.sigma_obs, "kalman");
  if (!(c.sigma_obs > 0.0)) throw ConfigError("kalman.sigma_obs must be positive");
  return c;
}

SceneConfig scene_from_json(const Json& j) { return scene_from_json(j, default_scene()); }

SceneConfig scene_from_json(const Json& j, const SceneConfig& base) {
  check_keys(j, "scene",
             {"name", "frames", "seed", "chain", "camera", "warp", "noise", "trajectory", "geometry", "mask",
              "control", "estimator"});
  SceneConfig s = base;
  read(j, "name", s.name, "scene");
  read(j, "frames", s.frames, "scene");
  read(j, "seed", s.seed, "scene");

  if (j.contains("chain")) s.chain = chain_from_json(j["chain"], base.chain.get());

  if (j.contains("camera")) {
    const auto& c = j["camera"];
    check_keys(c, "camera", {"fx", "fy", "cx", "cy", "width", "height", "extrinsics"});
    read(c, "fx", s.camera.fx, "camera");
    read(c, "fy", s.camera.fy, "camera");
    read(c, "cx", s.camera.cx, "camera");
    read(c, "cy", s.camera.cy, "camera");
    read(c, "width", s.camera.width, "camera");
    read(c, "height", s.camera.height, "camera");
    if (c.contains("extrinsics")) s.camera.camera_from_base = transform_from_json(c["extrinsics"], s.camera.camera_from_base);
  }

  if (j.contains("warp")) {
    const auto& w = j["warp"];
    check_keys(w, "warp", {"kind", "params", "drift_std"});
    if (w.contains("kind")) {
      const auto kind = w["kind"].is_string() ? parse_warp(w["kind"].get<std::string>()) : std::nullopt;
      if (!kind) throw ConfigError("warp.kind: expected inverse_quadratic, disparity or affine");
      s.warp.kind = *kind;
    }
    read(w, "params", s.warp.params, "warp");
    read(w, "drift_std", s.warp_drift_std, "warp");
  }

  if (j.contains("noise")) {
    const auto& n = j["noise"];
    check_keys(n, "noise", {"tracker_px", "obs_m"});
    read(n, "tracker_px", s.tracker_noise_px, "noise");
    read(n, "obs_m", s.obs_noise_m, "noise");
  }

  if (j.contains("trajectory")) {
    const auto& t = j["trajectory"];
    check_keys(t, "trajectory",
               {"kind", "center", "amplitude", "frequency", "phase", "randomize", "amplitude_range", "frequency_range",
                "waypoints"});
    auto& tr = s.trajectory;
    if (t.contains("kind")) {
      const std::string k = t["kind"].is_string() ? t["kind"].get<std::string>() : "";
      if (k == "sinusoid")
        tr.kind = TrajectoryKind::sinusoid;
      else if (k == "waypoints")
        tr.kind = TrajectoryKind::waypoints;
      else
        throw ConfigError("trajectory.kind: expected sinusoid or waypoints");
    }
    read(t, "center", tr.center, "trajectory");
    read(t, "amplitude", tr.amplitude, "trajectory");
    read(t, "frequency", tr.frequency, "trajectory");
    read(t, "phase", tr.phase, "trajectory");
    read(t, "randomize", tr.randomize, "trajectory");
    read(t, "waypoints", tr.waypoints, "trajectory");
    if (t.contains("amplitude_range")) {
      const auto r = vec2(t["amplitude_range"], "trajectory.amplitude_range");
      tr.amplitude_min = r.x();
      tr.amplitude_max = r.y();
    }
    if (t.contains("frequency_range")) {
      const auto r = vec2(t["frequency_range"], "trajectory.frequency_range");
      tr.frequency_min = r.x();
      tr.frequency_max = r.y();
    }
  }

  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    check_keys(g, "geometry", {"planes", "boxes", "spheres", "far_depth", "keypoint_radius_px"});
    if (g.contains("planes")) {
      s.geometry.planes.clear();
      for (const auto& p : g["planes"]) {
        check_keys(p, "geometry.planes[]", {"point", "normal"});
        Plane pl;
        if (p.contains("point")) pl.point = vec3(p["point"], "plane.point");
        if (p.contains("normal")) pl.normal = vec3(p["normal"], "plane.normal");
        if (!(pl.normal.norm() > 0.0)) throw ConfigError("plane.normal must be non-zero");
        pl.normal.normalize();
        s.geometry.planes.push_back(pl);
      }
    }
    if (g.contains("boxes")) {
      s.geometry.boxes.clear();
      for (const auto& b : g["boxes"]) {
        check_keys(b, "geometry.boxes[]", {"min", "max"});
        Box bx{vec3(b.at("min"), "box.min"), vec3(b.at("max"), "box.max")};
        if ((bx.max - bx.min).minCoeff() <= 0.0) throw ConfigError("box: max must exceed min on every axis");
        s.geometry.boxes.push_back(bx);
      }
    }
    if (g.contains("spheres")) {
      s.geometry.spheres.clear();
      for (const auto& sp : g["spheres"]) {
        check_keys(sp, "geometry.spheres[]", {"center", "radius"});
        Sphere so{vec3(sp.at("center"), "sphere.center"), number(sp.at("radius"), "sphere.radius")};
        if (!(so.radius > 0.0)) throw ConfigError("sphere.radius must be positive");
        s.geometry.spheres.push_back(so);
      }
    }
    read(g, "far_depth", s.geometry.far_depth, "geometry");
    read(g, "keypoint_radius_px", s.geometry.keypoint_radius_px, "geometry");
  }

  if (j.contains("mask")) {
    const auto& m = j["mask"];
    check_keys(m, "mask", {"u0", "v0", "u1", "v1", "stride"});
    read(m, "u0", s.mask.u0, "mask");
    read(m, "v0", s.mask.v0, "mask");
    read(m, "u1", s.mask.u1, "mask");
    read(m, "v1", s.mask.v1, "mask");
    read(m, "stride", s.mask.stride, "mask");
    if (!(s.mask.stride > 0.0)) throw ConfigError("mask.stride must be positive");
  }

  if (j.contains("control")) {
    const auto& c = j["control"];
    check_keys(c, "control",
               {"Q", "R", "goal_pixel", "goal_point", "goal_jitter_px", "success_epsilon", "action_limit", "start_frame"});
    if (c.contains("Q")) s.control.state_cost = matrix3(c["Q"], "control.Q");
    if (c.contains("R")) s.control.action_cost = matrix3(c["R"], "control.R");
    if (c.contains("goal_pixel") && c.contains("goal_point"))
      throw ConfigError("control: give either goal_pixel or goal_point, not both");
    if (c.contains("goal_pixel")) s.control.goal_pixel = vec2(c["goal_pixel"], "control.goal_pixel");
    if (c.contains("goal_point")) {
      const Eigen::Vector3d pc = s.camera.camera_from_base * vec3(c["goal_point"], "control.goal_point");
      if (!(pc.z() > kNearPlane)) throw ConfigError("control.goal_point is behind the camera");
      s.control.goal_pixel = project(s.camera, pc);
    }
    read(c, "goal_jitter_px", s.goal_jitter_px, "control");
    read(c, "success_epsilon", s.control.success_epsilon, "control");
    read(c, "action_limit", s.control.action_limit, "control");
    read(c, "start_frame", s.control.start_frame, "control");
  }

  if (j.contains("estimator")) {
    const auto& e = j["estimator"];
    check_keys(e, "estimator", {"kalman", "training"});
    if (e.contains("kalman")) s.estimator.kalman = kalman_from_json(e["kalman"], s.estimator.kalman);
    if (e.contains("training")) s.estimator.training = training_from_json(e["training"], s.estimator.training);
  }
  // The network input width always follows the chain.
  if (s.chain) s.estimator.training.keypoints = static_cast<int>(s.chain->keypoint_count());

  s.validate();
  return s;
}

Json scene_to_json(const SceneConfig& s) {
  Json j;
  j["name"] = s.name;
  j["frames"] = s.frames;
  j["seed"] = s.seed;
  if (s.chain) {
    Json joints = Json::array(), kps = Json::array();
    for (const auto& rj : s.chain->joints()) joints.push_back({{"axis", vec_json(rj.axis)}, {"offset", vec_json(rj.offset)}});
    for (const auto& a : s.chain->attachments()) kps.push_back({{"link", a.link}, {"offset", vec_json(a.offset)}});
    j["chain"] = {{"joints", joints}, {"keypoints", kps}};
  }
  const Eigen::Quaterniond q = s.camera.camera_from_base.quaternion();
  j["camera"] = {{"fx", s.camera.fx},
                 {"fy", s.camera.fy},
                 {"cx", s.camera.cx},
                 {"cy", s.camera.cy},
                 {"width", s.camera.width},
                 {"height", s.camera.height},
                 {"extrinsics",
                  {{"quaternion", {q.w(), q.x(), q.y(), q.z()}},
                   {"translation", vec_json(s.camera.camera_from_base.translation)}}}};
  j["warp"] = {{"kind", std::string(warp_name(s.warp.kind))}, {"params", s.warp.params}, {"drift_std", s.warp_drift_std}};
  j["noise"] = {{"tracker_px", s.tracker_noise_px}, {"obs_m", s.obs_noise_m}};
  const auto& t = s.trajectory;
  j["trajectory"] = {{"kind", t.kind == TrajectoryKind::sinusoid ? "sinusoid" : "waypoints"},
                     {"center", t.center},
                     {"amplitude", t.amplitude},
                     {"frequency", t.frequency},
                     {"phase", t.phase},
                     {"randomize", t.randomize},
                     {"amplitude_range", {t.amplitude_min, t.amplitude_max}},
                     {"frequency_range", {t.frequency_min, t.frequency_max}},
                     {"waypoints", t.waypoints}};
  Json planes = Json::array(), boxes = Json::array(), spheres = Json::array();
  for (const auto& p : s.geometry.planes) planes.push_back({{"point", vec_json(p.point)}, {"normal", vec_json(p.normal)}});
  for (const auto& b : s.geometry.boxes) boxes.push_back({{"min", vec_json(b.min)}, {"max", vec_json(b.max)}});
  for (const auto& sp : s.geometry.spheres) spheres.push_back({{"center", vec_json(sp.center)}, {"radius", sp.radius}});
  j["geometry"] = {{"planes", planes},
                   {"boxes", boxes},
                   {"spheres", spheres},
                   {"far_depth", s.geometry.far_depth},
                   {"keypoint_radius_px", s.geometry.keypoint_radius_px}};
  j["mask"] = {{"u0", s.mask.u0}, {"v0", s.mask.v0}, {"u1", s.mask.u1}, {"v1", s.mask.v1}, {"stride", s.mask.stride}};
  j["control"] = {{"Q", matrix_to_json(s.control.state_cost)},
                  {"R", matrix_to_json(s.control.action_cost)},
                  {"goal_pixel", {s.control.goal_pixel.x(), s.control.goal_pixel.y()}},
                  {"goal_jitter_px", s.goal_jitter_px},
                  {"success_epsilon", s.control.success_epsilon},
                  {"action_limit", s.control.action_limit},
                  {"start_frame", s.control.start_frame}};
  j["estimator"] = {{"kalman", kalman_to_json(s.estimator.kalman)}, {"training", training_to_json(s.estimator.training)}};
  return j;
}

SceneConfig load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: invalid JSON ({})", path.string(), e.what()));
  }
  SceneConfig s = scene_from_json(j);
  if (!j.contains("name")) s.name = path.stem().string();
  return s;
}

std::string config_hash(const Json& j) {
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json RunManifest::to_json() const {
  return Json{{"command", command},     {"config_hash", config_hash}, {"seeds", seeds},
              {"tool_version", tool_version}, {"timestamp", timestamp}, {"outputs", outputs}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json().dump(2) << "\n";
}

}  // namespace depthcal
