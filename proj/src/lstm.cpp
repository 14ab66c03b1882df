#include "depthcal/lstm.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "depthcal/errors.hpp"
#include "depthcal/huber.hpp"

namespace depthcal {

void TrainingConfig::validate() const {
  if (keypoints < 1) throw ConfigError("training: keypoint count must be positive");
  if (history < 0) throw ConfigError("training: history length must be non-negative");
  if (hidden_size < 1 || head_hidden < 1) throw ConfigError("training: layer sizes must be positive");
  if (inner_steps < 0) throw ConfigError("training: inner step count must be non-negative");
  if (!(learning_rate >= 0.0) || !(huber_delta > 0.0)) throw ConfigError("training: invalid learning rate or delta");
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0)) throw ConfigError("training: auxiliary weights must be non-negative");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("training: gradient clip norm must be positive");
}

namespace {

MlpHead zero_head(int in, int hidden, int out) {
  return MlpHead{Dense{Eigen::MatrixXd::Zero(hidden, in), Eigen::VectorXd::Zero(hidden)},
                 Dense{Eigen::MatrixXd::Zero(out, hidden), Eigen::VectorXd::Zero(out)}};
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

void init_head(MlpHead& head, std::mt19937_64& rng) {
  const double b1 = 1.0 / std::sqrt(static_cast<double>(head.hidden.w.cols()));
  fill_uniform(head.hidden.w, b1, rng);
  fill_uniform(head.hidden.b, b1, rng);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(head.out.w.cols()));
  fill_uniform(head.out.w, b2, rng);
  fill_uniform(head.out.b, b2, rng);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct HeadCache {
  Eigen::VectorXd act;  // tanh hidden activation
  Eigen::VectorXd out;
};

struct StepCache {
  Eigen::VectorXd in_gate, forget_gate, cand, out_gate;
  Eigen::VectorXd c, tanh_c, h;
  HeadCache beta, kp, depth;
};

HeadCache head_forward(const MlpHead& head, const Eigen::VectorXd& h) {
  HeadCache hc;
  hc.act = (head.hidden.w * h + head.hidden.b).array().tanh().matrix();
  hc.out = head.out.w * hc.act + head.out.b;
  return hc;
}

StepCache step_forward(const LstmWeights& w, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                       const Eigen::VectorXd& c_prev) {
  const Eigen::Index hs = h_prev.size();
  const Eigen::VectorXd z = w.w_input * x + w.w_recurrent * h_prev + w.b_gates;
  StepCache sc;
  sc.in_gate = z.segment(0, hs).unaryExpr(&sigmoid);
  sc.forget_gate = z.segment(hs, hs).unaryExpr(&sigmoid);
  sc.cand = z.segment(2 * hs, hs).array().tanh().matrix();
  sc.out_gate = z.segment(3 * hs, hs).unaryExpr(&sigmoid);
  sc.c = sc.forget_gate.cwiseProduct(c_prev) + sc.in_gate.cwiseProduct(sc.cand);
  sc.tanh_c = sc.c.array().tanh().matrix();
  sc.h = sc.out_gate.cwiseProduct(sc.tanh_c);
  sc.beta = head_forward(w.beta_head, sc.h);
  sc.kp = head_forward(w.keypoint_beta_head, sc.h);
  sc.depth = head_forward(w.depth_head, sc.h);
  return sc;
}

// Writes the head's gradients and returns dL/dh.
Eigen::VectorXd head_backward(const MlpHead& head, const HeadCache& hc, const Eigen::VectorXd& h,
                              const Eigen::VectorXd& d_out, MlpHead& grad) {
  grad.out.w.noalias() = d_out * hc.act.transpose();
  grad.out.b = d_out;
  const Eigen::VectorXd d_pre =
      (head.out.w.transpose() * d_out).cwiseProduct((1.0 - hc.act.array().square()).matrix());
  grad.hidden.w.noalias() = d_pre * h.transpose();
  grad.hidden.b = d_pre;
  return head.hidden.w.transpose() * d_pre;
}

struct HeadGradients {
  double loss = 0.0;
  Eigen::VectorXd d_beta, d_kp, d_depth;
};

HeadGradients loss_terms(const StepCache& sc, const FrameTargets& t, const LossWeights& lw, int keypoints) {
  HeadGradients g;
  g.d_beta = Eigen::VectorXd::Zero(3);
  g.d_kp = Eigen::VectorXd::Zero(3 * keypoints);
  g.d_depth = Eigen::VectorXd::Zero(keypoints);
  const DepthRegressorParams beta{sc.beta.out(0), sc.beta.out(1), sc.beta.out(2)};
  for (int i = 0; i < keypoints; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    if (t.visible && !(*t.visible)[iu]) continue;
    const double r = t.rel[iu];
    const double o = t.depths[iu];
    const Eigen::Vector3d row(r * r, r, 1.0);

    const double p_main = (beta.beta2 * r + beta.beta1) * r + beta.beta0;
    g.loss += lw.main * huber_loss(o, p_main, lw.delta);
    g.d_beta += lw.main * huber_grad(o, p_main, lw.delta) * row;

    const double p_kp = sc.kp.out.segment(3 * i, 3).dot(row);
    g.loss += lw.keypoint_beta * huber_loss(o, p_kp, lw.delta);
    g.d_kp.segment(3 * i, 3) += lw.keypoint_beta * huber_grad(o, p_kp, lw.delta) * row;

    const double p_depth = sc.depth.out(i);
    g.loss += lw.depth * huber_loss(o, p_depth, lw.delta);
    g.d_depth(i) += lw.depth * huber_grad(o, p_depth, lw.delta);
  }
  return g;
}

void backward(const LstmWeights& w, const StepCache& sc, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
              const Eigen::VectorXd& c_prev, const HeadGradients& hg, LossGradient& out) {
  const Eigen::Index hs = h_prev.size();
  out.loss = hg.loss;
  LstmWeights& g = out.grad;

  Eigen::VectorXd dh = head_backward(w.beta_head, sc.beta, sc.h, hg.d_beta, g.beta_head);
  dh += head_backward(w.keypoint_beta_head, sc.kp, sc.h, hg.d_kp, g.keypoint_beta_head);
  dh += head_backward(w.depth_head, sc.depth, sc.h, hg.d_depth, g.depth_head);

  const Eigen::ArrayXd d_out_gate = dh.array() * sc.tanh_c.array();
  const Eigen::ArrayXd dc = dh.array() * sc.out_gate.array() * (1.0 - sc.tanh_c.array().square());
  Eigen::VectorXd dz(4 * hs);
  dz.segment(0, hs) = (dc * sc.cand.array() * sc.in_gate.array() * (1.0 - sc.in_gate.array())).matrix();
  dz.segment(hs, hs) = (dc * c_prev.array() * sc.forget_gate.array() * (1.0 - sc.forget_gate.array())).matrix();
  dz.segment(2 * hs, hs) = (dc * sc.in_gate.array() * (1.0 - sc.cand.array().square())).matrix();
  dz.segment(3 * hs, hs) = (d_out_gate * sc.out_gate.array() * (1.0 - sc.out_gate.array())).matrix();

  g.w_input.noalias() = dz * x.transpose();
  g.w_recurrent.noalias() = dz * h_prev.transpose();
  g.b_gates = dz;
}

LstmOutput to_output(const StepCache& sc, int keypoints) {
  LstmOutput out;
  out.beta = DepthRegressorParams{sc.beta.out(0), sc.beta.out(1), sc.beta.out(2)};
  out.keypoint_betas = Eigen::MatrixXd(keypoints, 3);
  for (int i = 0; i < keypoints; ++i) out.keypoint_betas.row(i) = sc.kp.out.segment(3 * i, 3).transpose();
  out.depths = sc.depth.out;
  out.h = sc.h;
  out.c = sc.c;
  return out;
}

void check_targets(const FrameTargets& t, Eigen::Index keypoints) {
  const auto m = static_cast<std::size_t>(keypoints);
  if (t.rel.size() != m || t.depths.size() != m || (t.visible && t.visible->size() != m))
    throw ArityError("lstm: targets must have one entry per keypoint");
}

}  // namespace

LstmWeights LstmWeights::zeros(const TrainingConfig& cfg) {
  const int h = cfg.hidden_size;
  return LstmWeights{Eigen::MatrixXd::Zero(4 * h, cfg.input_size()),
                     Eigen::MatrixXd::Zero(4 * h, h),
                     Eigen::VectorXd::Zero(4 * h),
                     zero_head(h, cfg.head_hidden, 3),
                     zero_head(h, cfg.head_hidden, 3 * cfg.keypoints),
                     zero_head(h, cfg.head_hidden, cfg.keypoints)};
}

double LstmWeights::squared_norm() const {
  double s = 0.0;
  visit([&](std::string_view, const auto& t) { s += t.squaredNorm(); });
  return s;
}

bool LstmWeights::all_finite() const {
  bool ok = true;
  visit([&](std::string_view, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

Eigen::Index LstmWeights::parameter_count() const {
  Eigen::Index n = 0;
  visit([&](std::string_view, const auto& t) { n += t.size(); });
  return n;
}

LstmEstimator LstmEstimator::create(const TrainingConfig& cfg) {
  cfg.validate();
  LstmEstimator e;
  e.config = cfg;
  e.weights = LstmWeights::zeros(cfg);
  std::mt19937_64 rng(cfg.seed);
  const int h = cfg.hidden_size;
  const double gate_bound = 1.0 / std::sqrt(static_cast<double>(cfg.input_size() + h));
  fill_uniform(e.weights.w_input, gate_bound, rng);
  fill_uniform(e.weights.w_recurrent, gate_bound, rng);
  fill_uniform(e.weights.b_gates, gate_bound, rng);
  e.weights.b_gates.segment(h, h).setConstant(1.0);
  init_head(e.weights.beta_head, rng);
  init_head(e.weights.keypoint_beta_head, rng);
  init_head(e.weights.depth_head, rng);
  // Coefficient heads start at the identity scale (0, 1, 0).
  e.weights.beta_head.out.b = DepthRegressorParams::identity().vec();
  for (int i = 0; i < cfg.keypoints; ++i)
    e.weights.keypoint_beta_head.out.b.segment(3 * i, 3) = DepthRegressorParams::identity().vec();

  e.h = Eigen::VectorXd::Zero(h);
  e.c = Eigen::VectorXd::Zero(h);
  e.history = Eigen::MatrixXd::Zero(cfg.keypoints, cfg.history);
  e.adam_m = LstmWeights::zeros(cfg);
  e.adam_v = LstmWeights::zeros(cfg);
  return e;
}

Eigen::VectorXd LstmEstimator::build_input(std::span<const double> rel, const std::vector<bool>& visible) const {
  const int m = config.keypoints;
  const int n = config.history;
  if (rel.size() != static_cast<std::size_t>(m) || visible.size() != static_cast<std::size_t>(m))
    throw ArityError("lstm: input needs one relative depth per keypoint");
  Eigen::VectorXd x(config.input_size());
  for (int i = 0; i < m; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    x(i * (n + 1)) = visible[iu] ? rel[iu] : 0.0;
    for (int k = 0; k < n; ++k) x(i * (n + 1) + 1 + k) = history(i, k);
  }
  if (!x.allFinite()) throw DomainError("lstm: non-finite relative depth at a visible keypoint");
  return x;
}

LstmOutput lstm_forward(const LstmWeights& w, const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                        const Eigen::VectorXd& c_prev) {
  if (input.size() != w.w_input.cols()) throw ArityError("lstm_forward: input size mismatch");
  const StepCache sc = step_forward(w, input, h_prev, c_prev);
  const int keypoints = static_cast<int>(w.depth_head.out.w.rows());
  LstmOutput out = to_output(sc, keypoints);
  if (!out.h.allFinite() || !out.c.allFinite() || !out.keypoint_betas.allFinite() || !out.depths.allFinite() ||
      !out.beta.finite())
    throw NumericalOverflowError("lstm_forward: non-finite activation");
  return out;
}

LstmOutput lstm_forward(const LstmEstimator& e, const Eigen::VectorXd& input) {
  return lstm_forward(e.weights, input, e.h, e.c);
}

LossWeights loss_weights(const TrainingConfig& cfg) {
  return LossWeights{1.0, cfg.alpha1, cfg.alpha2, cfg.huber_delta};
}

LossGradient lstm_loss_gradient(const LstmWeights& w, const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                                const Eigen::VectorXd& c_prev, const FrameTargets& targets, const LossWeights& lw) {
  const Eigen::Index m = w.depth_head.out.w.rows();
  check_targets(targets, m);
  const StepCache sc = step_forward(w, input, h_prev, c_prev);
  const HeadGradients hg = loss_terms(sc, targets, lw, static_cast<int>(m));
  LossGradient out;
  backward(w, sc, input, h_prev, c_prev, hg, out);
  return out;
}

double lstm_loss(const LstmWeights& w, const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                 const Eigen::VectorXd& c_prev, const FrameTargets& targets, const LossWeights& lw) {
  const Eigen::Index m = w.depth_head.out.w.rows();
  check_targets(targets, m);
  const StepCache sc = step_forward(w, input, h_prev, c_prev);
  return loss_terms(sc, targets, lw, static_cast<int>(m)).loss;
}

namespace {

void apply_update(LstmEstimator& e, LstmWeights& grad) {
  const TrainingConfig& cfg = e.config;
  const double norm = std::sqrt(grad.squared_norm());
  if (norm > cfg.grad_clip_norm) {
    const double scale = cfg.grad_clip_norm / norm;
    grad.visit([&](std::string_view, auto& t) { t *= scale; });
  }
  ++e.step_count;
  if (cfg.optimizer == OptimizerKind::sgd) {
    // Walk weights and gradients in lockstep; both visit in the same order.
    std::vector<double*> gp;
    std::vector<Eigen::Index> gs;
    grad.visit([&](std::string_view, auto& t) {
      gp.push_back(t.data());
      gs.push_back(t.size());
    });
    std::size_t k = 0;
    e.weights.visit([&](std::string_view, auto& t) {
      Eigen::Map<const Eigen::VectorXd> g(gp[k], gs[k]);
      Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) -= cfg.learning_rate * g;
      ++k;
    });
    return;
  }

  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(e.step_count));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(e.step_count));
  std::vector<double*> gp, mp, vp;
  grad.visit([&](std::string_view, auto& t) { gp.push_back(t.data()); });
  e.adam_m.visit([&](std::string_view, auto& t) { mp.push_back(t.data()); });
  e.adam_v.visit([&](std::string_view, auto& t) { vp.push_back(t.data()); });
  std::size_t k = 0;
  e.weights.visit([&](std::string_view, auto& t) {
    double* wd = t.data();
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double g = gp[k][i];
      mp[k][i] = cfg.adam_beta1 * mp[k][i] + (1.0 - cfg.adam_beta1) * g;
      vp[k][i] = cfg.adam_beta2 * vp[k][i] + (1.0 - cfg.adam_beta2) * g * g;
      wd[i] -= cfg.learning_rate * (mp[k][i] / bc1) / (std::sqrt(vp[k][i] / bc2) + cfg.adam_epsilon);
    }
    ++k;
  });
}

}  // namespace

DepthRegressorParams lstm_train_step(LstmEstimator& e, std::span<const double> rel, const KeypointObservationSet& obs) {
  const auto m = static_cast<std::size_t>(e.config.keypoints);
  if (rel.size() != m || obs.size() != m) throw ArityError("lstm_train_step: expected one entry per keypoint");
  if (obs.visible_count() == 0) return e.last_beta;

  const Eigen::VectorXd x = e.build_input(rel, obs.visible);
  const FrameTargets targets{rel, obs.depths, &obs.visible};
  const LossWeights lw = loss_weights(e.config);

  LstmEstimator snapshot = e;
  LossGradient lg;  // reused across inner steps
  try {
    for (int k = 0; k < e.config.inner_steps; ++k) {
      const StepCache sc = step_forward(e.weights, x, e.h, e.c);
      backward(e.weights, sc, x, e.h, e.c, loss_terms(sc, targets, lw, e.config.keypoints), lg);
      if (!std::isfinite(lg.loss)) throw NumericalOverflowError("lstm_train_step: non-finite loss");
      apply_update(e, lg.grad);
    }
    // A non-finite gradient shows up in the weights; rollback is to the frame entry either way.
    if (!e.weights.all_finite()) throw NumericalOverflowError("lstm_train_step: non-finite weights");
    const LstmOutput out = lstm_forward(e, x);
    e.h = out.h;
    e.c = out.c;
    e.last_beta = out.beta;
  } catch (const NumericalOverflowError&) {
    e = std::move(snapshot);
    throw;
  }

  const int n = e.config.history;
  if (n > 0) {
    for (int k = n - 1; k > 0; --k) e.history.col(k) = e.history.col(k - 1);
    for (std::size_t i = 0; i < m; ++i) e.history(static_cast<Eigen::Index>(i), 0) = obs.visible[i] ? rel[i] : 0.0;
  }
  ++e.frame_count;
  return e.last_beta;
}

}  // namespace depthcal
