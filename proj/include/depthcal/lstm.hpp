#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "depthcal/kinematics.hpp"
#include "depthcal/regressor.hpp"

namespace depthcal {

enum class OptimizerKind { sgd, adam };

struct TrainingConfig {
  int keypoints = 5;         // M
  int history = 10;          // N
  int hidden_size = 128;     // H
  int head_hidden = 64;      // width of the single tanh layer in each head
  int inner_steps = 20;      // tau
  double learning_rate = 1e-2;
  double huber_delta = 1.0;
  double alpha1 = 1.0;       // per-keypoint coefficient heads
  double alpha2 = 1.0;       // direct depth head
  double grad_clip_norm = 10.0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;

  int input_size() const { return keypoints * (history + 1); }
  void validate() const;
};

/// Affine layer y = w x + b.
struct Dense {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

/// hidden = tanh(w1 h + b1); out = w2 hidden + b2.
struct MlpHead {
  Dense hidden;
  Dense out;
};

/// Every trainable tensor. Gate rows are stacked [input, forget, candidate, output].
struct LstmWeights {
  Eigen::MatrixXd w_input;      // 4H x D
  Eigen::MatrixXd w_recurrent;  // 4H x H
  Eigen::VectorXd b_gates;      // 4H
  MlpHead beta_head;            // H -> 3
  MlpHead keypoint_beta_head;   // H -> 3M
  MlpHead depth_head;           // H -> M

  static LstmWeights zeros(const TrainingConfig& cfg);

  /// Calls f(name, tensor) for every tensor; tensor is a MatrixXd or VectorXd.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  double squared_norm() const;
  bool all_finite() const;
  Eigen::Index parameter_count() const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f("w_input", s.w_input);
    f("w_recurrent", s.w_recurrent);
    f("b_gates", s.b_gates);
    f("beta_head.w1", s.beta_head.hidden.w);
    f("beta_head.b1", s.beta_head.hidden.b);
    f("beta_head.w2", s.beta_head.out.w);
    f("beta_head.b2", s.beta_head.out.b);
    f("keypoint_beta_head.w1", s.keypoint_beta_head.hidden.w);
    f("keypoint_beta_head.b1", s.keypoint_beta_head.hidden.b);
    f("keypoint_beta_head.w2", s.keypoint_beta_head.out.w);
    f("keypoint_beta_head.b2", s.keypoint_beta_head.out.b);
    f("depth_head.w1", s.depth_head.hidden.w);
    f("depth_head.b1", s.depth_head.hidden.b);
    f("depth_head.w2", s.depth_head.out.w);
    f("depth_head.b2", s.depth_head.out.b);
  }
};

struct LstmOutput {
  DepthRegressorParams beta;
  Eigen::MatrixXd keypoint_betas;  // M x 3, rows (beta2, beta1, beta0)
  Eigen::VectorXd depths;          // M
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

/// Online-trained recurrent estimator of the regressor coefficients.
struct LstmEstimator {
  TrainingConfig config;
  LstmWeights weights;
  Eigen::VectorXd h;
  Eigen::VectorXd c;
  Eigen::MatrixXd history;  // M x N, column 0 is the most recent past frame
  DepthRegressorParams last_beta = DepthRegressorParams::identity();
  std::int64_t step_count = 0;
  std::int64_t frame_count = 0;
  LstmWeights adam_m;
  LstmWeights adam_v;

  static LstmEstimator create(const TrainingConfig& cfg);

  /// Input vector of length M (N + 1): per keypoint, current r then the N
  /// stored past values. Invisible keypoints are zero-filled.
  Eigen::VectorXd build_input(std::span<const double> rel, const std::vector<bool>& visible) const;
};

/// One recurrent step from (h_prev, c_prev) followed by the three heads.
LstmOutput lstm_forward(const LstmWeights& w, const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                        const Eigen::VectorXd& c_prev);
LstmOutput lstm_forward(const LstmEstimator& e, const Eigen::VectorXd& input);

/// Per-frame supervision: current relative depths, kinematic depths, mask.
struct FrameTargets {
  std::span<const double> rel;
  std::span<const double> depths;
  const std::vector<bool>* visible = nullptr;
};

struct LossWeights {
  double main = 1.0;
  double keypoint_beta = 1.0;
  double depth = 1.0;
  double delta = 1.0;
};

struct LossGradient {
  double loss = 0.0;
  LstmWeights grad;
};

/// Total loss (main Huber term plus weighted auxiliaries) and its gradient
/// with respect to every weight, for one forward step from (h_prev, c_prev).
LossGradient lstm_loss_gradient(const LstmWeights& w, const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                                const Eigen::VectorXd& c_prev, const FrameTargets& targets, const LossWeights& lw);

/// Loss only (no backward pass).
double lstm_loss(const LstmWeights& w, const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                 const Eigen::VectorXd& c_prev, const FrameTargets& targets, const LossWeights& lw);

LossWeights loss_weights(const TrainingConfig& cfg);

/// Runs `inner_steps` gradient updates on the current frame, each from the
/// frame-entry recurrent state, then commits the recurrent state of a final
/// forward pass and returns its coefficient prediction. Frames with no visible
/// keypoint leave the estimator untouched. Throws NumericalOverflowError after
/// restoring the frame-entry state.
DepthRegressorParams lstm_train_step(LstmEstimator& e, std::span<const double> rel, const KeypointObservationSet& obs);

}  // namespace depthcal
