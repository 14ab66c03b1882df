#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "depthcal/trial.hpp"

namespace depthcal {

struct SuiteConfig {
  std::string name = "suite";
  std::vector<SceneConfig> scenes;
  std::vector<Method> methods = {Method::static_scale, Method::kf, Method::hybrid};
  std::vector<std::uint64_t> seeds;  // one trial per seed; defaults to 1..25
  bool with_control = false;
  Aggregate aggregate = Aggregate::mean;
};

std::vector<std::uint64_t> default_seeds(int count = 25);

/// Reads a suite file (JSON with `scenes`, `methods`, `seeds`, `control`,
/// `aggregate`; scene paths resolve against the suite file's directory) or a
/// directory of scene files run with the default methods and seeds.
SuiteConfig load_suite(const std::filesystem::path& path);

struct CellSummary {
  std::string scene;
  Method method = Method::kf;
  int trials = 0;
  int failures = 0;
  int keypoints = 0;
  std::vector<double> keypoint_mean, keypoint_std;
  double overall_mean = 0.0;
  double overall_std = 0.0;
  int successes = 0;
  std::vector<std::string> failure_messages;
};

struct SuiteResult {
  SuiteConfig config;
  std::vector<TrialReport> trials;  // ordered scene, method, seed
  std::vector<CellSummary> cells;   // ordered scene, method

  const CellSummary* cell(const std::string& scene, Method method) const;
  bool all_failed() const;
};

using ProgressFn = std::function<void(const TrialReport&)>;

/// Runs every (scene, method, seed) trial on up to `jobs` threads. A failing
/// trial is recorded and the suite continues.
SuiteResult run_benchmark_suite(const SuiteConfig& suite, int jobs = 1, const ProgressFn& progress = {});

/// Sample mean and standard deviation, skipping NaN entries.
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Per-cell keypoint and overall errors as mean and standard deviation over seeds.
void write_error_table(const SuiteResult& r, std::ostream& out);
/// Per-cell reach success counts and rates.
void write_success_table(const SuiteResult& r, std::ostream& out);
/// One summary row per trial.
void write_trials_table(const SuiteResult& r, std::ostream& out);

/// Checks hybrid <= kf <= static_scale on mean overall error for every scene
/// that ran those methods. Returns one message per violated pair.
std::vector<std::string> check_ordering(const SuiteResult& r);

}  // namespace depthcal
