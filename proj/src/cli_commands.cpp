#include "depthcal/cli_commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "depthcal/benchmark.hpp"
#include "depthcal/config_io.hpp"
#include "depthcal/csv.hpp"
#include "depthcal/errors.hpp"
#include "depthcal/trial.hpp"

namespace depthcal {

namespace fs = std::filesystem;

namespace {

/// Usage or configuration problem detected by a command.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.10g}", v) : std::string{}; }

Aggregate parse_aggregate(const std::string& s) {
  if (s == "mean") return Aggregate::mean;
  if (s == "median") return Aggregate::median;
  throw UsageError("--aggregate must be mean or median");
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string config;
  std::string method = "hybrid";
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  bool control = false;
  std::string out = "out";
  std::string aggregate = "mean";
  std::string external;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  if (!fs::exists(a.config)) throw UsageError("config not found: " + a.config);
  SceneConfig scene = load_scene(a.config);
  if (a.seed) scene.seed = *a.seed;
  if (a.frames) {
    scene.frames = *a.frames;
    scene.validate();
  }
  const auto method = parse_method(a.method);
  if (!method) throw UsageError("unknown method: " + a.method);

  TrialOptions opts;
  opts.method = *method;
  opts.with_control = a.control;
  opts.aggregate = parse_aggregate(a.aggregate);
  if (!a.external.empty())
    opts.external = std::make_shared<const ExternalDepthSource>(ExternalDepthSource::read_csv_file(a.external));

  const TrialReport report = run_trial(scene, opts);
  const fs::path dir(a.out);
  write_trial_outputs(report, dir);

  RunManifest m;
  m.command = fmt::format("run --method {}{}", a.method, a.control ? " --control" : "");
  m.config_hash = config_hash(scene_to_json(scene));
  m.seeds = {scene.seed};
  m.timestamp = utc_timestamp();
  m.outputs = {"beta.csv", "errors.csv", "summary.csv"};
  if (a.control) m.outputs.emplace_back("control.csv");
  m.write(dir / "manifest.json");

  out << fmt::format("{} {} seed {}: overall error {} m", report.scene, method_name(report.method), report.seed,
                     num(report.metrics.overall));
  if (report.with_control)
    out << fmt::format(", final distance {} m, {}", num(report.final_distance), report.success ? "success" : "miss");
  out << "\n";
  if (report.failed) {
    out << fmt::format("trial failed after {} frames: {}\n", report.frames_completed, report.failure);
    return kExitTrialFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- suite

struct SuiteArgs {
  std::string config;
  int jobs = 1;
  std::string out = "suite_out";
  bool assert_ordering = false;
  std::optional<int> seeds;
};

int cmd_suite(const SuiteArgs& a, std::ostream& out) {
  if (!fs::exists(a.config)) throw UsageError("suite config not found: " + a.config);
  SuiteConfig suite = load_suite(a.config);
  if (a.seeds) {
    if (*a.seeds < 1) throw UsageError("--seeds must be positive");
    suite.seeds = default_seeds(*a.seeds);
  }
  if (a.jobs < 1) throw UsageError("--jobs must be positive");

  const SuiteResult r = run_benchmark_suite(suite, a.jobs);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "errors_table.csv");
    write_error_table(r, f);
  }
  {
    std::ofstream f(dir / "success_table.csv");
    write_success_table(r, f);
  }
  {
    std::ofstream f(dir / "trials.csv");
    write_trials_table(r, f);
  }
  RunManifest m;
  m.command = "suite " + suite.name;
  Json cfg = Json::array();
  for (const auto& s : suite.scenes) cfg.push_back(scene_to_json(s));
  Json methods = Json::array();
  for (Method me : suite.methods) methods.push_back(std::string(method_name(me)));
  m.config_hash = config_hash(Json{{"scenes", cfg},
                                   {"methods", methods},
                                   {"seeds", suite.seeds},
                                   {"control", suite.with_control},
                                   {"aggregate", suite.aggregate == Aggregate::mean ? "mean" : "median"}});
  m.seeds = suite.seeds;
  m.timestamp = utc_timestamp();
  m.outputs = {"errors_table.csv", "success_table.csv", "trials.csv"};
  m.write(dir / "manifest.json");

  out << fmt::format("{:<24} {:<14} {:>6} {:>8} {:>22}{}\n", "scene", "method", "trials", "failed", "overall error (m)",
                     suite.with_control ? "   success" : "");
  for (const auto& c : r.cells) {
    out << fmt::format("{:<24} {:<14} {:>6} {:>8} {:>22}", c.scene, method_name(c.method), c.trials, c.failures,
                       fmt::format("{:.4f} +- {:.4f}", c.overall_mean, c.overall_std));
    if (suite.with_control) out << fmt::format("   {:>3}/{:<3}", c.successes, c.trials);
    out << "\n";
    for (const auto& msg : c.failure_messages) out << "  failed " << msg << "\n";
  }
  if (r.all_failed()) {
    out << "every trial failed\n";
    return kExitTrialFailed;
  }
  if (a.assert_ordering) {
    const auto violations = check_ordering(r);
    for (const auto& v : violations) out << "ordering violated: " << v << "\n";
    if (!violations.empty()) return kExitTrialFailed;
    out << "ordering holds: hybrid <= kf <= static_scale\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- fitbench

struct FitArgs {
  std::string pairs;
  std::vector<std::string> families;
  std::string mode = "auto";
  std::string out;
};

std::string mode_name(FitMode m) { return m == FitMode::pooled ? "pooled" : "per_frame"; }

int cmd_fitbench(const FitArgs& a, std::ostream& out) {
  if (!fs::exists(a.pairs)) throw UsageError("pairs file not found: " + a.pairs);
  const DepthPairSet data = DepthPairSet::read_csv_file(a.pairs);
  if (data.size() < 3) throw UsageError(fmt::format("insufficient data: {} pair(s), need at least 3", data.size()));

  std::vector<FamilyKind> families;
  for (const auto& name : a.families) {
    const auto k = parse_family(name);
    if (!k) throw UsageError("unknown family: " + name);
    families.push_back(*k);
  }
  if (families.empty()) families.assign(kAllFamilies.begin(), kAllFamilies.end());

  bool pooled = true, per_frame = data.has_frames();
  if (a.mode == "pooled") {
    per_frame = false;
  } else if (a.mode == "per-frame") {
    if (!data.has_frames()) throw UsageError("--mode per-frame needs a frame column");
    pooled = false;
  } else if (a.mode != "auto" && a.mode != "both") {
    throw UsageError("--mode must be pooled, per-frame, both or auto");
  }
  if (a.mode == "both" && !data.has_frames()) throw UsageError("--mode both needs a frame column");

  const auto rows = run_fitbench(data, families, pooled, per_frame);
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw UsageError("cannot write " + a.out);
  }
  std::ostream& o = a.out.empty() ? out : file;
  o << "mode,rank,family,fit_percentage,fits,failures,params,error\n";
  std::map<FitMode, int> count;
  for (const auto& r : rows) ++count[r.mode];
  std::map<FitMode, int> seen;
  for (const auto& r : rows) {
    const int rank = count[r.mode] - seen[r.mode]++;
    std::string params;
    for (double p : r.params) params += (params.empty() ? "" : " ") + num(p);
    o << fmt::format("{},{},{},{},{},{},{},{}\n", mode_name(r.mode), rank, family_name(r.family),
                     r.fits ? fmt::format("{:.4f}", r.fit_percentage) : std::string{}, r.fits, r.failures, params,
                     csv_escape(r.error));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- plotdata

struct PlotArgs {
  std::string dir;
  std::string out;
};

void melt(const fs::path& file, const std::string& series, const std::vector<std::string>& label, std::ostream& o) {
  std::ifstream in(file);
  if (!in) return;
  CsvReader reader(in);
  const auto header = reader.header();
  while (auto row = reader.next()) {
    const std::string& frame = (*row)[0];
    for (std::size_t k = 1; k < header.size(); ++k) {
      const std::string& v = (*row)[k];
      if (v.empty() || v.find_first_not_of("0123456789+-.eE") != std::string::npos) continue;
      o << fmt::format("{},{},{},{},{},{},{}\n", label[0], label[1], label[2], series, frame, header[k], v);
    }
  }
}

int cmd_plotdata(const PlotArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.dir)) throw UsageError("report directory not found: " + a.dir);
  std::vector<fs::path> trials;
  for (const auto& e : fs::recursive_directory_iterator(a.dir))
    if (e.is_regular_file() && e.path().filename() == "summary.csv" && fs::exists(e.path().parent_path() / "beta.csv"))
      trials.push_back(e.path().parent_path());
  if (trials.empty()) throw UsageError("no trial reports under " + a.dir);
  std::sort(trials.begin(), trials.end());

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw UsageError("cannot write " + a.out);
  }
  std::ostream& o = a.out.empty() ? out : file;
  o << "scene,method,seed,series,frame,variable,value\n";
  for (const auto& dir : trials) {
    std::ifstream in(dir / "summary.csv");
    CsvReader reader(in);
    const auto header = reader.header();
    const auto row = reader.next();
    if (!row || header.size() < 3 || header[0] != "scene" || header[1] != "method" || header[2] != "seed")
      throw UsageError("malformed summary in " + dir.string());
    const std::vector<std::string> label = {(*row)[0], (*row)[1], (*row)[2]};
    melt(dir / "beta.csv", "beta", label, o);
    melt(dir / "errors.csv", "error", label, o);
    melt(dir / "control.csv", "control", label, o);
  }
  return kExitOk;
}

}  // namespace

std::vector<FitBenchRow> run_fitbench(const DepthPairSet& data, const std::vector<FamilyKind>& families, bool pooled,
                                      bool per_frame) {
  std::vector<FitBenchRow> rows;
  auto sort_mode = [&](std::size_t begin) {
    std::stable_sort(rows.begin() + static_cast<std::ptrdiff_t>(begin), rows.end(),
                     [](const FitBenchRow& x, const FitBenchRow& y) {
                       const double a = x.fits ? x.fit_percentage : -1.0;
                       const double b = y.fits ? y.fit_percentage : -1.0;
                       return a < b;
                     });
  };
  if (pooled) {
    const std::size_t begin = rows.size();
    for (FamilyKind k : families) {
      FitBenchRow r;
      r.family = k;
      r.mode = FitMode::pooled;
      try {
        const FamilyFit f = fit_family(k, data);
        r.fit_percentage = f.fit_percentage;
        r.params = f.family.params;
        r.fits = 1;
      } catch (const Error& e) {
        r.failures = 1;
        r.error = e.what();
      }
      rows.push_back(std::move(r));
    }
    sort_mode(begin);
  }
  if (per_frame) {
    const std::size_t begin = rows.size();
    const auto frames = data.split_by_frame();
    for (FamilyKind k : families) {
      FitBenchRow r;
      r.family = k;
      r.mode = FitMode::per_frame;
      double sum = 0.0;
      for (const auto& f : frames) {
        try {
          sum += fit_family(k, f).fit_percentage;
          ++r.fits;
        } catch (const Error& e) {
          if (r.error.empty()) r.error = e.what();
          ++r.failures;
        }
      }
      if (r.fits) r.fit_percentage = sum / r.fits;
      rows.push_back(std::move(r));
    }
    sort_mode(begin);
  }
  return rows;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Online relative-to-metric depth calibration: simulation, estimation and control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one simulated trial and write its report");
  run_cmd->add_option("config", run.config, "Scene config (JSON)")->required();
  run_cmd->add_option("--method", run.method, "kf, lstm, hybrid, static_scale or external_baseline")
      ->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Trial seed (overrides the config)");
  run_cmd->add_option("--frames", run.frames, "Frame count (overrides the config)");
  run_cmd->add_flag("--control", run.control, "Drive the end effector to the goal pixel");
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--aggregate", run.aggregate, "mean or median over frames")->capture_default_str();
  run_cmd->add_option("--external", run.external, "Recorded depth samples `frame,u,v,z` for external_baseline");

  SuiteArgs suite;
  auto* suite_cmd = app.add_subcommand("suite", "Run every scene x method x seed cell of a suite");
  suite_cmd->add_option("config", suite.config, "Suite config (JSON) or directory of scene configs")->required();
  suite_cmd->add_option("--jobs", suite.jobs, "Concurrent trials")->capture_default_str();
  suite_cmd->add_option("--out", suite.out, "Output directory")->capture_default_str();
  suite_cmd->add_option("--seeds", suite.seeds, "Use seeds 1..N instead of the config's list");
  suite_cmd->add_flag("--assert-ordering", suite.assert_ordering,
                      "Exit 3 unless mean overall error is hybrid <= kf <= static_scale");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fitbench", "Compare regressor families on (r, z) pairs");
  fit_cmd->add_option("pairs", fit.pairs, "CSV with header r,z or r,z,frame")->required();
  fit_cmd->add_option("--families", fit.families, "Subset of families (default: all)")->delimiter(',');
  fit_cmd->add_option("--mode", fit.mode, "pooled, per-frame, both or auto")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Write the report here instead of stdout");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plotdata", "Emit long-format CSV series from trial reports");
  plot_cmd->add_option("dir", plot.dir, "Directory containing trial reports")->required();
  plot_cmd->add_option("--out", plot.out, "Write the series here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run, out);
    if (*suite_cmd) return cmd_suite(suite, out);
    if (*fit_cmd) return cmd_fitbench(fit, out);
    if (*plot_cmd) return cmd_plotdata(plot, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitTrialFailed;
  }
  return kExitUsage;
}

}  // namespace depthcal
