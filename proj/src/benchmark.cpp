#include "depthcal/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "depthcal/config_io.hpp"
#include "depthcal/csv.hpp"
#include "depthcal/errors.hpp"

namespace depthcal {

std::vector<std::uint64_t> default_seeds(int count) {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= count; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

namespace {

std::vector<std::filesystem::path> scene_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

SuiteConfig load_suite(const std::filesystem::path& path) {
  SuiteConfig suite;
  suite.seeds = default_seeds();
  if (std::filesystem::is_directory(path)) {
    suite.name = path.filename().string();
    for (const auto& f : scene_files(path)) suite.scenes.push_back(load_scene(f));
    if (suite.scenes.empty()) throw ConfigError("suite directory has no scene files: " + path.string());
    return suite;
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open suite config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: invalid JSON ({})", path.string(), e.what()));
  }
  if (!j.is_object()) throw ConfigError("suite: expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "name" && key != "scenes" && key != "methods" && key != "seeds" && key != "control" &&
        key != "aggregate")
      throw ConfigError("suite: unknown key '" + key + "'");
  }
  try {
    suite.name = j.value("name", path.stem().string());
    const auto base = path.parent_path();
    for (const auto& s : j.value("scenes", Json::array())) {
      if (s.is_string())
        suite.scenes.push_back(load_scene(base / s.get<std::string>()));
      else
        suite.scenes.push_back(scene_from_json(s));
    }
    if (j.contains("methods")) {
      suite.methods.clear();
      for (const auto& m : j["methods"]) {
        const auto method = parse_method(m.get<std::string>());
        if (!method) throw ConfigError("suite: unknown method " + m.dump());
        suite.methods.push_back(*method);
      }
    }
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      if (s.is_number_integer()) {
        suite.seeds = default_seeds(s.get<int>());
      } else {
        suite.seeds.clear();
        for (const auto& v : s) suite.seeds.push_back(v.get<std::uint64_t>());
      }
    }
    suite.with_control = j.value("control", false);
    const std::string agg = j.value("aggregate", "mean");
    if (agg == "mean")
      suite.aggregate = Aggregate::mean;
    else if (agg == "median")
      suite.aggregate = Aggregate::median;
    else
      throw ConfigError("suite: aggregate must be mean or median");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("suite: wrong type (") + e.what() + ")");
  }
  if (suite.scenes.empty()) throw ConfigError("suite has no scenes");
  if (suite.methods.empty()) throw ConfigError("suite has no methods");
  if (suite.seeds.empty()) throw ConfigError("suite has no seeds");
  return suite;
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values)
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  if (n == 0) return {std::nan(""), std::nan("")};
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  return {mean, n > 1 ? std::sqrt(ss / (n - 1)) : 0.0};
}

const CellSummary* SuiteResult::cell(const std::string& scene, Method method) const {
  for (const auto& c : cells)
    if (c.scene == scene && c.method == method) return &c;
  return nullptr;
}

bool SuiteResult::all_failed() const {
  for (const auto& t : trials)
    if (!t.failed) return false;
  return true;
}

SuiteResult run_benchmark_suite(const SuiteConfig& suite, int jobs, const ProgressFn& progress) {
  if (suite.scenes.empty() || suite.methods.empty() || suite.seeds.empty())
    throw ConfigError("suite needs at least one scene, method and seed");

  struct Job {
    std::size_t scene, method, seed;
  };
  std::vector<Job> work;
  for (std::size_t s = 0; s < suite.scenes.size(); ++s)
    for (std::size_t m = 0; m < suite.methods.size(); ++m)
      for (std::size_t k = 0; k < suite.seeds.size(); ++k) work.push_back({s, m, k});

  SuiteResult result;
  result.config = suite;
  result.trials.resize(work.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      const Job& job = work[i];
      SceneConfig scene = suite.scenes[job.scene];
      scene.seed = suite.seeds[job.seed];
      TrialOptions opts;
      opts.method = suite.methods[job.method];
      opts.with_control = suite.with_control;
      opts.aggregate = suite.aggregate;
      TrialReport report;
      try {
        report = run_trial(scene, opts);
      } catch (const std::exception& e) {
        report.scene = scene.name;
        report.method = opts.method;
        report.seed = scene.seed;
        report.with_control = opts.with_control;
        report.failed = true;
        report.failure = e.what();
      }
      // A trial that produced no metrics at all counts as failed for the tables.
      if (report.frame_errors.empty()) report.failed = true;
      result.trials[i] = std::move(report);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(result.trials[i]);
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::size_t i = 0;
  for (const auto& scene : suite.scenes) {
    for (Method method : suite.methods) {
      CellSummary c;
      c.scene = scene.name;
      c.method = method;
      c.keypoints = static_cast<int>(scene.chain->keypoint_count());
      std::vector<std::vector<double>> kp(static_cast<std::size_t>(c.keypoints));
      std::vector<double> overall;
      for (std::size_t k = 0; k < suite.seeds.size(); ++k, ++i) {
        const TrialReport& t = result.trials[i];
        ++c.trials;
        if (t.failed) {
          ++c.failures;
          c.failure_messages.push_back(fmt::format("seed {}: {}", t.seed, t.failure));
        }
        if (t.success) ++c.successes;
        if (t.frame_errors.empty()) continue;
        overall.push_back(t.metrics.overall);
        for (std::size_t q = 0; q < kp.size() && q < t.metrics.per_keypoint.size(); ++q)
          kp[q].push_back(t.metrics.per_keypoint[q]);
      }
      std::tie(c.overall_mean, c.overall_std) = mean_std(overall);
      for (const auto& v : kp) {
        const auto [m, s] = mean_std(v);
        c.keypoint_mean.push_back(m);
        c.keypoint_std.push_back(s);
      }
      result.cells.push_back(std::move(c));
    }
  }
  return result;
}

namespace {

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.6g}", v) : std::string{}; }

int max_keypoints(const SuiteResult& r) {
  int m = 0;
  for (const auto& c : r.cells) m = std::max(m, c.keypoints);
  return m;
}

}  // namespace

void write_error_table(const SuiteResult& r, std::ostream& out) {
  const int m = max_keypoints(r);
  out << "scene,method,trials,failures";
  for (int i = 1; i <= m; ++i) out << fmt::format(",kp{0}_mean,kp{0}_std", i);
  out << ",overall_mean,overall_std\n";
  for (const auto& c : r.cells) {
    out << fmt::format("{},{},{},{}", csv_escape(c.scene), method_name(c.method), c.trials, c.failures);
    for (int i = 0; i < m; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      if (iu < c.keypoint_mean.size())
        out << "," << num(c.keypoint_mean[iu]) << "," << num(c.keypoint_std[iu]);
      else
        out << ",,";
    }
    out << "," << num(c.overall_mean) << "," << num(c.overall_std) << "\n";
  }
}

void write_success_table(const SuiteResult& r, std::ostream& out) {
  out << "scene,method,trials,successes,success_rate\n";
  for (const auto& c : r.cells) {
    const double rate = c.trials ? static_cast<double>(c.successes) / c.trials : 0.0;
    out << fmt::format("{},{},{},{},{}\n", csv_escape(c.scene), method_name(c.method), c.trials, c.successes, num(rate));
  }
}

void write_trials_table(const SuiteResult& r, std::ostream& out) {
  out << summary_header(max_keypoints(r)) << "\n";
  for (const auto& t : r.trials) out << summary_row(t) << "\n";
}

std::vector<std::string> check_ordering(const SuiteResult& r) {
  std::vector<std::string> violations;
  const Method order[] = {Method::hybrid, Method::kf, Method::static_scale};
  for (const auto& scene : r.config.scenes) {
    const CellSummary* prev = nullptr;
    for (Method m : order) {
      const CellSummary* c = r.cell(scene.name, m);
      if (!c) continue;
      if (prev && !(prev->overall_mean <= c->overall_mean))
        violations.push_back(fmt::format("{}: {} mean error {:.6g} exceeds {} mean error {:.6g}", scene.name,
                                         method_name(prev->method), prev->overall_mean, method_name(m),
                                         c->overall_mean));
      prev = c;
    }
  }
  return violations;
}

}  // namespace depthcal
