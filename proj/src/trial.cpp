#include "depthcal/trial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "depthcal/csv.hpp"
#include "depthcal/errors.hpp"

namespace depthcal {

ExternalDepthSource ExternalDepthSource::read_csv(std::istream& in) {
  ExternalDepthSource src;
  CsvReader reader(in);
  reader.expect_header({"frame", "u", "v", "z"});
  while (auto row = reader.next()) {
    const int frame = static_cast<int>(reader.number(*row, 0));
    const double z = reader.number(*row, 3);
    if (!(z > 0.0)) throw ParseError("external depth must be positive", reader.line());
    src.add(frame, {reader.number(*row, 1), reader.number(*row, 2)}, z);
  }
  return src;
}

ExternalDepthSource ExternalDepthSource::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return read_csv(in);
}

void ExternalDepthSource::add(int frame, const Eigen::Vector2d& pixel, double depth) {
  frames_[frame].push_back(Sample{pixel, depth});
}

double ExternalDepthSource::depth(int frame, const Eigen::Vector2d& pixel) const {
  const auto it = frames_.find(frame);
  if (it == frames_.end() || it->second.empty())
    throw ConfigError("external depth source has no samples for frame " + std::to_string(frame));
  double best = std::numeric_limits<double>::infinity();
  double z = 0.0;
  for (const auto& s : it->second) {
    const double d = (s.pixel - pixel).squaredNorm();
    if (d < best) {
      best = d;
      z = s.z;
    }
  }
  return z;
}

FrameErrors frame_errors(const FrameErrorInputs& in) {
  if (in.mask_predicted.empty() || in.mask_predicted.size() != in.mask_truth.size())
    throw ConfigError("evaluate_errors: task-space mask is empty");
  FrameErrors out;
  for (const auto& kp : in.keypoints) {
    if (kp)
      out.keypoint_abs.emplace_back(std::abs(kp->first - kp->second));
    else
      out.keypoint_abs.emplace_back(std::nullopt);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < in.mask_truth.size(); ++i) sum += std::abs(in.mask_predicted[i] - in.mask_truth[i]);
  out.scene_mae = sum / static_cast<double>(in.mask_truth.size());
  return out;
}

namespace {

double aggregate(std::vector<double> v, Aggregate agg) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (agg == Aggregate::mean) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ErrorMetrics evaluate_errors(std::span<const FrameErrors> frames, Aggregate agg) {
  if (frames.empty()) throw ConfigError("evaluate_errors: no frames");
  ErrorMetrics m;
  const std::size_t kps = frames.front().keypoint_abs.size();
  std::vector<std::vector<double>> per_kp(kps);
  std::vector<double> scene;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < kps && i < f.keypoint_abs.size(); ++i)
      if (f.keypoint_abs[i]) per_kp[i].push_back(*f.keypoint_abs[i]);
    scene.push_back(f.scene_mae);
  }
  for (auto& v : per_kp) m.per_keypoint.push_back(aggregate(std::move(v), agg));
  m.overall = aggregate(std::move(scene), agg);
  return m;
}

ErrorMetrics evaluate_errors(std::span<const FrameErrorInputs> frames, Aggregate agg) {
  std::vector<FrameErrors> fe;
  fe.reserve(frames.size());
  for (const auto& f : frames) fe.push_back(frame_errors(f));
  return evaluate_errors(std::span<const FrameErrors>(fe), agg);
}

TrialReport run_trial(const SceneConfig& scene_in, const TrialOptions& opts) {
  SceneConfig scene = scene_in;
  scene.estimator.training.seed = mix_seed(scene.seed, 5, scene_in.estimator.training.seed);

  TrialReport report;
  report.scene = scene.name;
  report.method = opts.method;
  report.seed = scene.seed;
  report.with_control = opts.with_control;
  report.keypoints = scene.chain ? static_cast<int>(scene.chain->keypoint_count()) : 0;

  if (opts.method == Method::external_baseline && !opts.external)
    throw ConfigError("external_baseline needs a recorded depth source");
  if (opts.method == Method::external_baseline && opts.with_control)
    throw ConfigError("closed-loop control needs a regressor-based method");

  const World world(scene);
  const SceneConfig& cfg = world.config();
  OnlineEstimator estimator(opts.method, cfg.estimator);
  const auto mask = cfg.mask.samples();

  std::optional<ControlState> ctrl;
  Eigen::Vector3d x_true = Eigen::Vector3d::Zero();
  Eigen::Vector3d g_true = Eigen::Vector3d::Zero();
  const Eigen::Vector2d goal_pixel = cfg.control.goal_pixel;
  if (opts.with_control) {
    ctrl = ControlState::create(cfg.control);
    x_true = keypoint_camera_points(*cfg.chain, world.joint_angles(0), cfg.camera).back();
    const Frame f0 = world.generate_frame(0, x_true);
    g_true = backproject(cfg.camera, goal_pixel, f0.scene_depth(goal_pixel));
  }

  try {
    for (int t = 0; t < cfg.frames; ++t) {
      const Frame frame = opts.with_control ? world.generate_frame(t, x_true) : world.generate_frame(t);
      const std::vector<double> rel = frame.tracked_relative();
      const DepthRegressorParams beta = estimator.step(rel, frame.tracked);
      report.beta_trajectory.push_back(beta);

      auto predict = [&](const Eigen::Vector2d& px, double r) {
        return opts.method == Method::external_baseline ? opts.external->depth(t, px) : eval_regressor(beta, r);
      };
      FrameErrorInputs in;
      for (std::size_t i = 0; i < frame.tracked.size(); ++i) {
        if (!frame.tracked.visible[i]) {
          in.keypoints.emplace_back(std::nullopt);
          continue;
        }
        const Eigen::Vector2d& px = frame.tracked.pixels[i];
        in.keypoints.emplace_back(std::make_pair(predict(px, rel[i]), frame.true_depth(px)));
      }
      in.mask_predicted.reserve(mask.size());
      in.mask_truth.reserve(mask.size());
      for (const auto& px : mask) {
        const double z = frame.true_depth(px);
        in.mask_truth.push_back(z);
        in.mask_predicted.push_back(predict(px, frame.warp.apply(z)));
      }
      report.frame_errors.push_back(frame_errors(in));

      if (ctrl) {
        ControlLogRow row;
        row.frame = t;
        Eigen::Vector3d u = Eigen::Vector3d::Zero();
        const std::size_t ee = frame.tracked.size() - 1;
        if (t < cfg.control.start_frame) {
          ctrl->status = ControlStatus::waiting;
          ctrl->u.setZero();
        } else if (!frame.tracked.visible[ee]) {
          ctrl->status = ControlStatus::invalid_state;
          ctrl->u.setZero();
        } else {
          u = control_step(*ctrl, cfg.control, cfg.camera, beta, rel[ee], frame.tracked.pixels[ee],
                           frame.scene_relative_depth(goal_pixel), goal_pixel);
        }
        x_true += u;
        // Rigid contact: the end effector cannot pass behind the visible scene surface.
        if (x_true.z() > kNearPlane) {
          const Eigen::Vector2d px = project(cfg.camera, x_true);
          if (cfg.camera.in_image(px)) {
            const double surface = frame.scene_depth(px);
            if (x_true.z() > surface) x_true *= surface / x_true.z();
          }
        }
        row.x = ctrl->x;
        row.g = ctrl->g;
        row.u = u;
        row.distance = (ctrl->x - ctrl->g).norm();
        row.true_distance = (x_true - g_true).norm();
        row.x_true = x_true;
        row.status = ctrl->status;
        report.control_log.push_back(row);
      }
      report.frames_completed = t + 1;
    }
  } catch (const Error& e) {
    report.failed = true;
    report.failure = e.what();
  }

  if (!report.frame_errors.empty()) report.metrics = evaluate_errors(report.frame_errors, opts.aggregate);
  if (opts.with_control) {
    report.final_distance = (x_true - g_true).norm();
    report.success = !report.failed && report.final_distance <= cfg.control.success_epsilon;
  }
  return report;
}

namespace {

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.12g}", v) : std::string{}; }

}  // namespace

std::string summary_header(int keypoints) {
  std::string h = "scene,method,seed,frames";
  for (int i = 1; i <= keypoints; ++i) h += fmt::format(",kp{}_error", i);
  h += ",overall_error,success,final_distance,status,message";
  return h;
}

std::string summary_row(const TrialReport& r) {
  std::string s = fmt::format("{},{},{},{}", csv_escape(r.scene), method_name(r.method), r.seed, r.frames_completed);
  for (int i = 0; i < r.keypoints; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    s += "," + (iu < r.metrics.per_keypoint.size() ? num(r.metrics.per_keypoint[iu]) : std::string{});
  }
  s += "," + num(r.metrics.overall);
  s += r.with_control ? fmt::format(",{},{}", r.success ? 1 : 0, num(r.final_distance)) : ",,";
  s += fmt::format(",{},{}", r.failed ? "failed" : "ok", csv_escape(r.failure));
  return s;
}

void write_trial_outputs(const TrialReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "beta.csv");
    out << "frame,beta2,beta1,beta0\n";
    for (std::size_t t = 0; t < r.beta_trajectory.size(); ++t) {
      const auto& b = r.beta_trajectory[t];
      out << fmt::format("{},{},{},{}\n", t, num(b.beta2), num(b.beta1), num(b.beta0));
    }
  }
  {
    std::ofstream out(dir / "errors.csv");
    out << "frame";
    for (int i = 1; i <= r.keypoints; ++i) out << fmt::format(",kp{}_error", i);
    out << ",scene_error\n";
    for (std::size_t t = 0; t < r.frame_errors.size(); ++t) {
      const auto& f = r.frame_errors[t];
      out << t;
      for (const auto& e : f.keypoint_abs) out << "," << (e ? num(*e) : std::string{});
      out << "," << num(f.scene_mae) << "\n";
    }
  }
  {
    std::ofstream out(dir / "summary.csv");
    out << summary_header(r.keypoints) << "\n" << summary_row(r) << "\n";
  }
  if (r.with_control) {
    std::ofstream out(dir / "control.csv");
    out << "frame,x0,x1,x2,g0,g1,g2,u0,u1,u2,dist,status,true_dist,xt0,xt1,xt2\n";
    for (const auto& row : r.control_log) {
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", row.frame, num(row.x(0)), num(row.x(1)),
                         num(row.x(2)), num(row.g(0)), num(row.g(1)), num(row.g(2)), num(row.u(0)), num(row.u(1)),
                         num(row.u(2)), num(row.distance), status_name(row.status), num(row.true_distance),
                         num(row.x_true(0)), num(row.x_true(1)), num(row.x_true(2)));
    }
  }
}

}  // namespace depthcal
