#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "depthcal/kalman.hpp"
#include "depthcal/lstm.hpp"

namespace depthcal {

enum class Method { kf, lstm, hybrid, static_scale, external_baseline };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

/// Kalman filter whose motion-model mean is the recurrent network's
/// prediction: trains the network on the frame, replaces the predicted mean by
/// its output, inflates the covariance by the motion noise, then applies the
/// depth-observation update. Returns the posterior mean.
DepthRegressorParams hybrid_step(LstmEstimator& e, KalmanBelief& b, std::span<const double> rel,
                                 const KeypointObservationSet& obs);

struct EstimatorConfig {
  KalmanConfig kalman;
  TrainingConfig training;
};

/// Per-frame coefficient estimator for one trial. Single owner; frames must be
/// fed in order.
class OnlineEstimator {
 public:
  OnlineEstimator(Method method, const EstimatorConfig& cfg);

  /// Consumes one frame (relative depths indexed like `obs`) and returns the
  /// coefficient estimate for that frame.
  DepthRegressorParams step(std::span<const double> rel, const KeypointObservationSet& obs);

  Method method() const { return method_; }
  const DepthRegressorParams& beta() const { return beta_; }
  const std::optional<KalmanBelief>& kalman() const { return kalman_; }
  const std::optional<LstmEstimator>& lstm() const { return lstm_; }
  bool static_fitted() const { return static_fitted_; }

  // Checkpoint access.
  std::optional<KalmanBelief>& kalman_mut() { return kalman_; }
  std::optional<LstmEstimator>& lstm_mut() { return lstm_; }
  void restore(const DepthRegressorParams& beta, bool static_fitted) {
    beta_ = beta;
    static_fitted_ = static_fitted;
  }

 private:
  Method method_;
  std::optional<KalmanBelief> kalman_;
  std::optional<LstmEstimator> lstm_;
  DepthRegressorParams beta_ = DepthRegressorParams::identity();
  bool static_fitted_ = false;
};

}  // namespace depthcal
