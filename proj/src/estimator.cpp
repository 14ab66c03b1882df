#include "depthcal/estimator.hpp"

#include "depthcal/errors.hpp"

namespace depthcal {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kf: return "kf";
    case Method::lstm: return "lstm";
    case Method::hybrid: return "hybrid";
    case Method::static_scale: return "static_scale";
    case Method::external_baseline: return "external_baseline";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  for (auto m : {Method::kf, Method::lstm, Method::hybrid, Method::static_scale, Method::external_baseline})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

DepthRegressorParams hybrid_step(LstmEstimator& e, KalmanBelief& b, std::span<const double> rel,
                                 const KeypointObservationSet& obs) {
  if (obs.visible_count() == 0) return b.mean;
  b.mean = lstm_train_step(e, rel, obs);
  b = kf_update(kf_predict(b), obs, rel);
  return b.mean;
}

OnlineEstimator::OnlineEstimator(Method method, const EstimatorConfig& cfg) : method_(method) {
  if (method == Method::kf || method == Method::hybrid) kalman_ = kf_init(cfg.kalman);
  if (method == Method::lstm || method == Method::hybrid) lstm_ = LstmEstimator::create(cfg.training);
}

DepthRegressorParams OnlineEstimator::step(std::span<const double> rel, const KeypointObservationSet& obs) {
  if (rel.size() != obs.size()) throw ArityError("estimator: relative depths must be indexed like the observations");
  const bool any_visible = obs.visible_count() > 0;
  switch (method_) {
    case Method::kf:
      *kalman_ = kf_predict(*kalman_);
      if (any_visible) *kalman_ = kf_update(*kalman_, obs, rel);
      beta_ = kalman_->mean;
      break;
    case Method::lstm:
      beta_ = lstm_train_step(*lstm_, rel, obs);
      break;
    case Method::hybrid:
      beta_ = hybrid_step(*lstm_, *kalman_, rel, obs);
      break;
    case Method::static_scale:
      // Least-squares scale on the first frame with a visible keypoint, then frozen.
      if (!static_fitted_ && any_visible) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < obs.size(); ++i) {
          if (!obs.visible[i]) continue;
          num += rel[i] * obs.depths[i];
          den += rel[i] * rel[i];
        }
        if (den > 0.0) {
          beta_ = DepthRegressorParams{0.0, num / den, 0.0};
          static_fitted_ = true;
        }
      }
      break;
    case Method::external_baseline:
      break;
  }
  return beta_;
}

}  // namespace depthcal
