#include <gtest/gtest.h>

#include <random>

#include "depthcal/errors.hpp"
#include "depthcal/estimator.hpp"

using namespace depthcal;

namespace {

KeypointObservationSet observations(const std::vector<double>& depths, std::vector<bool> visible = {}) {
  KeypointObservationSet obs;
  obs.depths = depths;
  obs.visible = visible.empty() ? std::vector<bool>(depths.size(), true) : std::move(visible);
  obs.pixels.assign(depths.size(), Eigen::Vector2d(100, 100));
  return obs;
}

// Zero network whose coefficient head always answers `beta`; lr 0 keeps it frozen.
LstmEstimator constant_lstm(const DepthRegressorParams& beta, int keypoints = 3) {
  TrainingConfig cfg;
  cfg.keypoints = keypoints;
  cfg.hidden_size = 4;
  cfg.head_hidden = 3;
  cfg.history = 2;
  cfg.learning_rate = 0.0;
  auto e = LstmEstimator::create(cfg);
  e.weights = LstmWeights::zeros(cfg);
  e.weights.beta_head.out.b = beta.vec();
  return e;
}

}  // namespace

TEST(Method, NamesRoundTrip) {
  for (auto m : {Method::kf, Method::lstm, Method::hybrid, Method::static_scale, Method::external_baseline})
    EXPECT_EQ(parse_method(method_name(m)), m);
  EXPECT_FALSE(parse_method("ekf").has_value());
}

TEST(HybridStep, PerfectPredictorAndNoiselessObservations) {
  const DepthRegressorParams truth{0.5, 1.2, 0.1};
  auto e = constant_lstm(truth);
  KalmanBelief b = kf_init();
  const std::vector<double> rel = {0.3, 0.6, 0.9};
  std::vector<double> z;
  for (double r : rel) z.push_back(eval_regressor(truth, r));
  for (int t = 0; t < 5; ++t) {
    const auto beta = hybrid_step(e, b, rel, observations(z));
    EXPECT_LT((beta.vec() - truth.vec()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(HybridStep, ConstantNetworkReducesToKalmanWithFixedMotionMean) {
  const DepthRegressorParams prior{0.1, 0.9, 0.2};
  auto e = constant_lstm(prior);
  KalmanBelief hyb = kf_init();
  KalmanBelief ref = kf_init();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ur(0.2, 1.2), uz(0.8, 2.5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> rel = {ur(rng), ur(rng), ur(rng)};
    std::vector<double> z = {uz(rng), uz(rng), uz(rng)};
    const auto beta = hybrid_step(e, hyb, rel, observations(z));
    ref.mean = prior;
    ref = kf_update(kf_predict(ref), rel, z);
    EXPECT_LT((beta.vec() - ref.mean.vec()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((hyb.covariance - ref.covariance).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(OnlineEstimator, KalmanBranchMatchesManualLoop) {
  OnlineEstimator est(Method::kf, EstimatorConfig{});
  KalmanBelief ref = kf_init();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ur(0.2, 1.2), uz(0.8, 2.5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> rel(5), z(5);
    for (int i = 0; i < 5; ++i) {
      rel[i] = ur(rng);
      z[i] = uz(rng);
    }
    std::vector<bool> vis = {true, t % 2 == 0, true, true, false};
    const auto beta = est.step(rel, observations(z, vis));
    ref = kf_predict(ref);
    std::vector<double> rv, zv;
    for (int i = 0; i < 5; ++i)
      if (vis[i]) {
        rv.push_back(rel[i]);
        zv.push_back(z[i]);
      }
    ref = kf_update(ref, rv, zv);
    EXPECT_EQ(beta, ref.mean);
  }
}

TEST(OnlineEstimator, KalmanSkipsUpdateWithoutObservations) {
  OnlineEstimator est(Method::kf, EstimatorConfig{});
  const std::vector<double> rel = {0.5, 0.5, 0.5, 0.5, 0.5};
  const auto beta = est.step(rel, observations({1, 1, 1, 1, 1}, {false, false, false, false, false}));
  EXPECT_EQ(beta, DepthRegressorParams::identity());
  EXPECT_EQ(est.kalman()->covariance, 1.5 * Eigen::Matrix3d::Identity());
}

TEST(OnlineEstimator, StaticScaleFitsOnceThenFreezes) {
  OnlineEstimator est(Method::static_scale, EstimatorConfig{});
  const std::vector<double> rel = {0.5, 1.0, 2.0, 9.0, 0.25};
  const std::vector<bool> vis = {true, true, true, false, true};
  const std::vector<double> z = {1.1, 1.9, 4.2, 100.0, 0.6};
  double num = 0, den = 0;
  for (int i = 0; i < 5; ++i)
    if (vis[i]) {
      num += rel[i] * z[i];
      den += rel[i] * rel[i];
    }
  const auto beta = est.step(rel, observations(z, vis));
  EXPECT_DOUBLE_EQ(beta.beta1, num / den);
  EXPECT_EQ(beta.beta2, 0.0);
  EXPECT_EQ(beta.beta0, 0.0);
  EXPECT_TRUE(est.static_fitted());
  const auto later = est.step(std::vector<double>{3, 3, 3, 3, 3}, observations({9, 9, 9, 9, 9}));
  EXPECT_EQ(later, beta);
}

TEST(OnlineEstimator, StaticScaleWaitsForAVisibleFrame) {
  OnlineEstimator est(Method::static_scale, EstimatorConfig{});
  const std::vector<double> rel = {1, 1, 1, 1, 1};
  est.step(rel, observations({2, 2, 2, 2, 2}, {false, false, false, false, false}));
  EXPECT_FALSE(est.static_fitted());
  EXPECT_DOUBLE_EQ(est.step(rel, observations({2, 2, 2, 2, 2})).beta1, 2.0);
}

TEST(OnlineEstimator, ArityAndOwnership) {
  OnlineEstimator est(Method::hybrid, EstimatorConfig{});
  EXPECT_TRUE(est.kalman().has_value());
  EXPECT_TRUE(est.lstm().has_value());
  EXPECT_THROW(est.step(std::vector<double>{1.0}, observations({1, 1})), ArityError);
  OnlineEstimator lstm(Method::lstm, EstimatorConfig{});
  EXPECT_FALSE(lstm.kalman().has_value());
  OnlineEstimator ext(Method::external_baseline, EstimatorConfig{});
  EXPECT_EQ(ext.step(std::vector<double>{1, 1, 1, 1, 1}, observations({3, 3, 3, 3, 3})),
            DepthRegressorParams::identity());
}

TEST(OnlineEstimator, DeterministicTrajectories) {
  for (Method m : {Method::kf, Method::lstm, Method::hybrid}) {
    OnlineEstimator a(m, EstimatorConfig{}), b(m, EstimatorConfig{});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ur(0.5, 1.5);
    for (int t = 0; t < 5; ++t) {
      std::vector<double> rel(5), z(5);
      for (int i = 0; i < 5; ++i) {
        rel[i] = ur(rng);
        z[i] = 0.5 * rel[i] * rel[i] + 1.2 * rel[i] + 0.1;
      }
      EXPECT_EQ(a.step(rel, observations(z)), b.step(rel, observations(z))) << method_name(m);
    }
  }
}
