#include "depthcal/checkpoint.hpp"

#include <fstream>

#include "depthcal/errors.hpp"

namespace depthcal {

namespace {

constexpr const char* kFormat = "depthcal-estimator";

Json tensor_json(const Eigen::MatrixXd& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(m.data()[i]);
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

template <class Tensor>
void tensor_read(const Json& j, Tensor& t) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows != t.rows() || cols != t.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("checkpoint: tensor shape does not match the configuration");
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
}

Json weights_json(const LstmWeights& w) {
  Json j = Json::object();
  w.visit([&](const char* name, const auto& t) { j[name] = tensor_json(t); });
  return j;
}

void weights_read(const Json& j, LstmWeights& w) {
  w.visit([&](const char* name, auto& t) { tensor_read(j.at(name), t); });
}

Json beta_json(const DepthRegressorParams& b) { return Json::array({b.beta2, b.beta1, b.beta0}); }

DepthRegressorParams beta_read(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("checkpoint: coefficient vector must have 3 entries");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Json checkpoint_to_json(const OnlineEstimator& e) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kCheckpointVersion;
  j["method"] = std::string(method_name(e.method()));
  j["beta"] = beta_json(e.beta());
  j["static_fitted"] = e.static_fitted();
  if (const auto& k = e.kalman()) {
    j["kalman"] = {{"mean", beta_json(k->mean)},
                   {"covariance", tensor_json(k->covariance)},
                   {"sigma0", tensor_json(k->sigma0)},
                   {"sigma_motion", tensor_json(k->sigma_motion)},
                   {"sigma_obs", k->sigma_obs}};
  }
  if (const auto& l = e.lstm()) {
    j["lstm"] = {{"config", training_to_json(l->config)},
                 {"weights", weights_json(l->weights)},
                 {"adam_m", weights_json(l->adam_m)},
                 {"adam_v", weights_json(l->adam_v)},
                 {"h", tensor_json(l->h)},
                 {"c", tensor_json(l->c)},
                 {"history", tensor_json(l->history)},
                 {"last_beta", beta_json(l->last_beta)},
                 {"step_count", l->step_count},
                 {"frame_count", l->frame_count}};
  }
  return j;
}

OnlineEstimator checkpoint_from_json(const Json& j) {
  try {
    if (j.value("format", "") != kFormat) throw ConfigError("checkpoint: not an estimator checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw ConfigError("checkpoint: unsupported version " + j.at("version").dump());
    const auto method = parse_method(j.at("method").get<std::string>());
    if (!method) throw ConfigError("checkpoint: unknown method");

    EstimatorConfig cfg;
    if (j.contains("lstm")) cfg.training = training_from_json(j["lstm"].at("config"));
    if (j.contains("kalman")) {
      Eigen::Matrix3d m;
      tensor_read(j["kalman"].at("sigma0"), m);
      cfg.kalman.sigma0 = m;
      tensor_read(j["kalman"].at("sigma_motion"), m);
      cfg.kalman.sigma_motion = m;
      cfg.kalman.sigma_obs = j["kalman"].at("sigma_obs").get<double>();
    }
    OnlineEstimator e(*method, cfg);
    e.restore(beta_read(j.at("beta")), j.at("static_fitted").get<bool>());

    if (e.kalman_mut().has_value() != j.contains("kalman") || e.lstm_mut().has_value() != j.contains("lstm"))
      throw ConfigError("checkpoint: state sections do not match the method");
    if (auto& k = e.kalman_mut()) {
      const auto& kj = j["kalman"];
      k->mean = beta_read(kj.at("mean"));
      tensor_read(kj.at("covariance"), k->covariance);
    }
    if (auto& l = e.lstm_mut()) {
      const auto& lj = j["lstm"];
      weights_read(lj.at("weights"), l->weights);
      weights_read(lj.at("adam_m"), l->adam_m);
      weights_read(lj.at("adam_v"), l->adam_v);
      tensor_read(lj.at("h"), l->h);
      tensor_read(lj.at("c"), l->c);
      tensor_read(lj.at("history"), l->history);
      l->last_beta = beta_read(lj.at("last_beta"));
      l->step_count = lj.at("step_count").get<std::int64_t>();
      l->frame_count = lj.at("frame_count").get<std::int64_t>();
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("checkpoint: malformed (") + ex.what() + ")");
  }
}

void save_checkpoint(const OnlineEstimator& e, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << checkpoint_to_json(e).dump() << "\n";
}

OnlineEstimator load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("checkpoint: invalid JSON (") + e.what() + ")");
  }
  return checkpoint_from_json(j);
}

}  // namespace depthcal
