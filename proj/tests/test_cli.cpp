#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "depthcal/cli_commands.hpp"
#include "depthcal/csv.hpp"

using namespace depthcal;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = DEPTHCAL_CONFIG_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "depthcal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("depthcal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"run", path("missing.json")}).code, kExitUsage);
  const auto r = cli({"run", (kConfigs / "default.json").string(), "--method", "ekf", "--out", path("o")});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("unknown method"), std::string::npos);
  EXPECT_EQ(cli({"run", (kConfigs / "default.json").string(), "--frames", "0", "--out", path("o")}).code, kExitUsage);
  EXPECT_EQ(cli({"--version"}).code, kExitOk);
}

TEST_F(CliTest, RunIsDeterministic) {
  const std::string cfg = (kConfigs / "drift.json").string();
  const auto a = cli({"run", cfg, "--method", "kf", "--frames", "30", "--seed", "4", "--control", "--out", path("a")});
  const auto b = cli({"run", cfg, "--method", "kf", "--frames", "30", "--seed", "4", "--control", "--out", path("b")});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(a.out, b.out);
  for (const char* f : {"beta.csv", "errors.csv", "summary.csv", "control.csv"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const std::string manifest = slurp(dir_ / "a" / "manifest.json");
  for (const char* key : {"\"config_hash\"", "\"seeds\"", "\"tool_version\"", "\"timestamp\""})
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
}

TEST_F(CliTest, FitbenchRanksQuadraticFirstOnQuadraticData) {
  std::ofstream csv(path("pairs.csv"));
  csv << "r,z,frame\n";
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::normal_distribution<double> n(0.0, 0.002);
  for (int f = 0; f < 3; ++f)
    for (int i = 0; i < 40; ++i) {
      const double r = u(rng);
      csv << r << "," << (0.6 * r * r - 0.3 * r + 0.9 + n(rng)) << "," << f << "\n";
    }
  csv.close();

  const auto res = cli({"fitbench", path("pairs.csv"), "--mode", "both"});
  ASSERT_EQ(res.code, kExitOk) << res.err;
  std::istringstream in(res.out);
  CsvReader reader(in);
  EXPECT_EQ(reader.header(), (std::vector<std::string>{"mode", "rank", "family", "fit_percentage", "fits", "failures",
                                                       "params", "error"}));
  std::set<std::string> modes;
  int rows = 0;
  while (auto row = reader.next()) {
    ++rows;
    modes.insert((*row)[0]);
    if ((*row)[1] == "1") {
      EXPECT_EQ((*row)[2], "polynomial2") << (*row)[0];
    }
  }
  EXPECT_EQ(rows, 12);
  EXPECT_EQ(modes, (std::set<std::string>{"pooled", "per_frame"}));

  const auto sub = cli({"fitbench", path("pairs.csv"), "--families", "linear,polynomial2", "--mode", "pooled"});
  EXPECT_EQ(std::count(sub.out.begin(), sub.out.end(), '\n'), 3);
  EXPECT_EQ(cli({"fitbench", path("pairs.csv"), "--families", "spline"}).code, kExitUsage);
}

TEST_F(CliTest, FitbenchInputErrors) {
  std::ofstream(path("few.csv")) << "r,z\n0.5,1.0\n0.7,1.2\n";
  const auto few = cli({"fitbench", path("few.csv")});
  EXPECT_EQ(few.code, kExitUsage);
  EXPECT_NE(few.err.find("insufficient"), std::string::npos);

  std::ofstream(path("bad.csv")) << "r,z\n0.5,1.0\n0.7,abc\n0.9,1.3\n";
  const auto bad = cli({"fitbench", path("bad.csv")});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("line 3"), std::string::npos);

  std::ofstream(path("noframe.csv")) << "r,z\n0.5,1.0\n0.7,1.2\n0.9,1.3\n";
  EXPECT_EQ(cli({"fitbench", path("noframe.csv"), "--mode", "per-frame"}).code, kExitUsage);
  EXPECT_EQ(cli({"fitbench", path("missing.csv")}).code, kExitUsage);
}

TEST_F(CliTest, PlotdataLongFormat) {
  fs::create_directories(path("empty"));
  EXPECT_EQ(cli({"plotdata", path("empty")}).code, kExitUsage);

  const std::string cfg = (kConfigs / "default.json").string();
  ASSERT_EQ(cli({"run", cfg, "--method", "kf", "--frames", "5", "--out", path("reports/kf")}).code, kExitOk);
  ASSERT_EQ(cli({"run", cfg, "--method", "static_scale", "--frames", "5", "--out", path("reports/static")}).code,
            kExitOk);
  const auto res = cli({"plotdata", path("reports")});
  ASSERT_EQ(res.code, kExitOk) << res.err;
  std::istringstream in(res.out);
  CsvReader reader(in);
  EXPECT_EQ(reader.header(),
            (std::vector<std::string>{"scene", "method", "seed", "series", "frame", "variable", "value"}));
  std::set<std::string> methods, series;
  int beta_rows = 0;
  while (auto row = reader.next()) {
    methods.insert((*row)[1]);
    series.insert((*row)[3]);
    if ((*row)[3] == "beta") ++beta_rows;
  }
  EXPECT_EQ(methods, (std::set<std::string>{"kf", "static_scale"}));
  EXPECT_EQ(series, (std::set<std::string>{"beta", "error"}));
  EXPECT_EQ(beta_rows, 2 * 5 * 3);
}

TEST_F(CliTest, SuiteCommand) {
  std::ofstream(path("empty.json")) << R"({"scenes": []})";
  EXPECT_EQ(cli({"suite", path("empty.json"), "--out", path("o")}).code, kExitUsage);
  EXPECT_EQ(cli({"suite", path("missing.json")}).code, kExitUsage);

  std::ofstream(path("tiny.json")) << R"({"scenes": [{"name": "tiny", "frames": 15}], "methods": ["static_scale", "kf"],
                                          "seeds": [1, 2]})";
  const auto ok = cli({"suite", path("tiny.json"), "--out", path("s"), "--jobs", "2"});
  ASSERT_EQ(ok.code, kExitOk) << ok.err;
  for (const char* f : {"errors_table.csv", "success_table.csv", "trials.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "s" / f)) << f;
  const std::string trials = slurp(dir_ / "s" / "trials.csv");
  EXPECT_EQ(std::count(trials.begin(), trials.end(), '\n'), 5);

  std::ofstream(path("allfail.json")) << R"({"scenes": [{"frames": 5}], "methods": ["external_baseline"],
                                             "seeds": [1]})";
  EXPECT_EQ(cli({"suite", path("allfail.json"), "--out", path("f")}).code, kExitTrialFailed);
  EXPECT_EQ(cli({"suite", path("tiny.json"), "--jobs", "0", "--out", path("j")}).code, kExitUsage);
}
