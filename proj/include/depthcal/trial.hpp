#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthcal/scene.hpp"

namespace depthcal {

/// Pre-recorded metric depth predictions scored by the same metrics as the
/// online estimators. CSV with header `frame,u,v,z`; queries return the
/// nearest recorded sample of that frame.
class ExternalDepthSource {
 public:
  static ExternalDepthSource read_csv_file(const std::string& path);
  static ExternalDepthSource read_csv(std::istream& in);

  void add(int frame, const Eigen::Vector2d& pixel, double depth);
  double depth(int frame, const Eigen::Vector2d& pixel) const;

 private:
  struct Sample {
    Eigen::Vector2d pixel;
    double z;
  };
  std::map<int, std::vector<Sample>> frames_;
};

/// One frame's worth of (prediction, truth) pairs.
struct FrameErrorInputs {
  std::vector<std::optional<std::pair<double, double>>> keypoints;  // empty when not visible
  std::vector<double> mask_predicted;
  std::vector<double> mask_truth;
};

struct FrameErrors {
  std::vector<std::optional<double>> keypoint_abs;  // per keypoint
  double scene_mae = 0.0;
};

enum class Aggregate { mean, median };

struct ErrorMetrics {
  std::vector<double> per_keypoint;  // NaN for a keypoint never visible
  double overall = 0.0;
};

FrameErrors frame_errors(const FrameErrorInputs& in);

/// Per-keypoint error: aggregate over frames of |prediction - truth| at the
/// tracked pixel. Overall scene error: aggregate over frames of the mean
/// absolute error over the task-space mask.
ErrorMetrics evaluate_errors(std::span<const FrameErrors> frames, Aggregate agg = Aggregate::mean);
ErrorMetrics evaluate_errors(std::span<const FrameErrorInputs> frames, Aggregate agg = Aggregate::mean);

struct ControlLogRow {
  int frame = 0;
  Eigen::Vector3d x, g, u;
  double distance = 0.0;  // |x - g| of the controller's estimates
  double true_distance = 0.0;
  Eigen::Vector3d x_true;  // simulated end-effector position after the action
  ControlStatus status = ControlStatus::ok;
};

struct TrialOptions {
  Method method = Method::kf;
  bool with_control = false;
  Aggregate aggregate = Aggregate::mean;
  std::shared_ptr<const ExternalDepthSource> external;
};

struct TrialReport {
  std::string scene;
  Method method = Method::kf;
  std::uint64_t seed = 0;
  int keypoints = 0;
  bool with_control = false;

  ErrorMetrics metrics;
  std::vector<DepthRegressorParams> beta_trajectory;
  std::vector<FrameErrors> frame_errors;
  std::vector<ControlLogRow> control_log;

  bool success = false;
  double final_distance = 0.0;
  bool failed = false;
  std::string failure;
  int frames_completed = 0;
};

/// Runs one trial of the online estimation loop: per frame, read the relative
/// depth and joint state, form kinematic depth observations, update the
/// selected estimator, and optionally take one control action. Estimator or
/// controller errors end the trial and are recorded in the report.
TrialReport run_trial(const SceneConfig& scene, const TrialOptions& opts);

/// Writes beta.csv, errors.csv, summary.csv and (with control) control.csv.
void write_trial_outputs(const TrialReport& report, const std::filesystem::path& dir);

std::string summary_header(int keypoints);
std::string summary_row(const TrialReport& report);

}  // namespace depthcal
