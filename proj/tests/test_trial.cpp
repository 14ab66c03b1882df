#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "depthcal/config_io.hpp"
#include "depthcal/errors.hpp"
#include "depthcal/trial.hpp"

using namespace depthcal;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("depthcal_trial_" + name);
  fs::remove_all(p);
  return p;
}

double tail_mean_scene_error(const TrialReport& r, int last) {
  double s = 0.0;
  for (int i = 0; i < last; ++i) s += r.frame_errors[r.frame_errors.size() - 1 - i].scene_mae;
  return s / last;
}

TrialOptions opts(Method m, bool control = false) {
  TrialOptions o;
  o.method = m;
  o.with_control = control;
  return o;
}

}  // namespace

TEST(FrameErrors, ToyCase) {
  FrameErrorInputs in;
  in.keypoints = {std::make_pair(1.1, 1.0), std::nullopt, std::make_pair(0.5, 0.7)};
  in.mask_predicted = {1.0, 2.0, 3.0};
  in.mask_truth = {1.0, 2.5, 2.0};
  const FrameErrors e = frame_errors(in);
  ASSERT_EQ(e.keypoint_abs.size(), 3u);
  EXPECT_NEAR(*e.keypoint_abs[0], 0.1, 1e-15);
  EXPECT_FALSE(e.keypoint_abs[1].has_value());
  EXPECT_NEAR(*e.keypoint_abs[2], 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(e.scene_mae, 0.5);
}

TEST(FrameErrors, EmptyMaskIsAnError) {
  FrameErrorInputs in;
  in.keypoints = {std::make_pair(1.0, 1.0)};
  EXPECT_THROW(frame_errors(in), ConfigError);
  in.mask_predicted = {1.0};
  in.mask_truth = {1.0, 2.0};
  EXPECT_THROW(frame_errors(in), ConfigError);
  EXPECT_THROW(evaluate_errors(std::span<const FrameErrors>{}), ConfigError);
}

TEST(EvaluateErrors, MeanMedianAndNeverVisible) {
  std::vector<FrameErrorInputs> frames;
  const double kp0[] = {0.1, 0.4, 0.2, 1.0};
  for (int t = 0; t < 4; ++t) {
    FrameErrorInputs in;
    in.keypoints = {std::make_pair(1.0 + kp0[t], 1.0), std::nullopt};
    in.mask_predicted = {double(t)};
    in.mask_truth = {0.0};
    frames.push_back(in);
  }
  const ErrorMetrics mean = evaluate_errors(std::span<const FrameErrorInputs>(frames), Aggregate::mean);
  EXPECT_NEAR(mean.per_keypoint[0], 0.425, 1e-12);
  EXPECT_TRUE(std::isnan(mean.per_keypoint[1]));
  EXPECT_DOUBLE_EQ(mean.overall, 1.5);
  const ErrorMetrics med = evaluate_errors(std::span<const FrameErrorInputs>(frames), Aggregate::median);
  EXPECT_NEAR(med.per_keypoint[0], 0.3, 1e-12);
  EXPECT_DOUBLE_EQ(med.overall, 1.5);
}

TEST(EvaluateErrors, ConstantBiasPassesThrough) {
  std::vector<FrameErrorInputs> frames;
  for (int t = 0; t < 10; ++t) {
    FrameErrorInputs in;
    for (int i = 0; i < 3; ++i) in.keypoints.emplace_back(std::make_pair(1.0 + 0.1 * i + t - 0.05, 1.0 + 0.1 * i + t));
    for (int k = 0; k < 20; ++k) {
      in.mask_truth.push_back(0.5 + 0.1 * k);
      in.mask_predicted.push_back(0.5 + 0.1 * k + 0.05);
    }
    frames.push_back(in);
  }
  const ErrorMetrics m = evaluate_errors(std::span<const FrameErrorInputs>(frames));
  for (double e : m.per_keypoint) EXPECT_NEAR(e, 0.05, 1e-12);
  EXPECT_NEAR(m.overall, 0.05, 1e-12);
}

TEST(ExternalDepthSource, NearestSampleLookup) {
  std::istringstream in("frame,u,v,z\n0,10,10,1.5\n0,100,100,2.5\n1,50,50,3.0\n");
  const auto src = ExternalDepthSource::read_csv(in);
  EXPECT_EQ(src.depth(0, {12, 9}), 1.5);
  EXPECT_EQ(src.depth(0, {90, 95}), 2.5);
  EXPECT_EQ(src.depth(1, {0, 0}), 3.0);
  EXPECT_THROW(src.depth(2, {0, 0}), ConfigError);

  std::istringstream bad_header("frame,u,z\n0,1,1\n");
  EXPECT_THROW(ExternalDepthSource::read_csv(bad_header), ParseError);
  std::istringstream bad_depth("frame,u,v,z\n0,1,1,-2\n");
  EXPECT_THROW(ExternalDepthSource::read_csv(bad_depth), ParseError);
  EXPECT_THROW(ExternalDepthSource::read_csv_file("/nonexistent/depth.csv"), ParseError);
}

TEST(RunTrial, ExternalTruthScoresZero) {
  SceneConfig s = default_scene();
  s.frames = 10;
  const World w(s);
  auto src = std::make_shared<ExternalDepthSource>();
  for (int t = 0; t < s.frames; ++t) {
    const Frame f = w.generate_frame(t);
    for (const auto& px : s.mask.samples()) src->add(t, px, f.true_depth(px));
    for (std::size_t i = 0; i < f.tracked.size(); ++i)
      if (f.tracked.visible[i]) src->add(t, f.tracked.pixels[i], f.true_depth(f.tracked.pixels[i]));
  }
  const auto r = run_trial(s, TrialOptions{Method::external_baseline, false, Aggregate::mean, src});
  EXPECT_FALSE(r.failed) << r.failure;
  EXPECT_EQ(r.metrics.overall, 0.0);
  for (double e : r.metrics.per_keypoint) EXPECT_EQ(e, 0.0);

  EXPECT_THROW(run_trial(s, opts(Method::external_baseline)), ConfigError);
  EXPECT_THROW(run_trial(s, TrialOptions{Method::external_baseline, true, Aggregate::mean, src}), ConfigError);
}

TEST(RunTrial, KalmanConvergesOnNoiselessScene) {
  SceneConfig s = default_scene();
  s.frames = 200;
  const auto r = run_trial(s, opts(Method::kf));
  ASSERT_FALSE(r.failed) << r.failure;
  ASSERT_EQ(r.frames_completed, 200);
  EXPECT_LT(tail_mean_scene_error(r, 20), 0.2 * r.frame_errors.front().scene_mae);
  EXPECT_LT(tail_mean_scene_error(r, 20), 0.02);
}

TEST(RunTrial, StaticScaleWorseThanKalmanUnderDrift) {
  SceneConfig s = load_scene(fs::path(DEPTHCAL_CONFIG_DIR) / "drift_affine.json");
  s.seed = 3;
  const auto kf = run_trial(s, opts(Method::kf));
  const auto st = run_trial(s, opts(Method::static_scale));
  ASSERT_FALSE(kf.failed || st.failed);
  EXPECT_LT(kf.metrics.overall, st.metrics.overall);
}

TEST(RunTrial, ControlHoldsBeforeStartFrame) {
  SceneConfig s = default_scene();
  s.frames = 30;
  s.control.start_frame = 10;
  const auto r = run_trial(s, opts(Method::kf, true));
  ASSERT_EQ(r.control_log.size(), 30u);
  for (int t = 0; t < 10; ++t) {
    EXPECT_EQ(r.control_log[t].status, ControlStatus::waiting);
    EXPECT_TRUE(r.control_log[t].u.isZero());
    EXPECT_EQ(r.control_log[t].x_true, r.control_log[0].x_true);
  }
  EXPECT_FALSE(r.control_log[10].u.isZero());
}

TEST(RunTrial, OutputsAreByteIdentical) {
  SceneConfig s = default_scene();
  s.frames = 40;
  s.tracker_noise_px = 1.0;
  s.obs_noise_m = 0.01;
  s.warp_drift_std = 0.002;
  const fs::path a = scratch("a"), b = scratch("b");
  write_trial_outputs(run_trial(s, opts(Method::kf, true)), a);
  write_trial_outputs(run_trial(s, opts(Method::kf, true)), b);
  for (const char* name : {"beta.csv", "errors.csv", "summary.csv", "control.csv"}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Summary, HeaderAndRowShape) {
  EXPECT_EQ(summary_header(2), "scene,method,seed,frames,kp1_error,kp2_error,overall_error,success,final_distance,"
                               "status,message");
  SceneConfig s = default_scene();
  s.frames = 5;
  const auto r = run_trial(s, opts(Method::static_scale));
  const std::string row = summary_row(r), header = summary_header(5);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_EQ(row.rfind("default,static_scale,1,5,", 0), 0u);
}
