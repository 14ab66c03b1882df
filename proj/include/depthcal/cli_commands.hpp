#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "depthcal/regressor.hpp"

namespace depthcal {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitTrialFailed = 3 };

/// Entry point of the command-line tool: subcommands run, suite, fitbench and
/// plotdata. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

enum class FitMode { pooled, per_frame };

struct FitBenchRow {
  FamilyKind family = FamilyKind::polynomial2;
  FitMode mode = FitMode::pooled;
  double fit_percentage = 0.0;  // per-frame mode: mean over frames
  int fits = 0;                 // successful fits
  int failures = 0;
  std::vector<double> params;   // pooled mode only
  std::string error;            // first failure message
};

/// Fits every requested family, pooled over all pairs and, when the data has
/// a frame column, per frame. Rows are sorted by ascending fit percentage
/// within each mode; a family that could not be fitted sorts first.
std::vector<FitBenchRow> run_fitbench(const DepthPairSet& data, const std::vector<FamilyKind>& families,
                                      bool pooled, bool per_frame);

}  // namespace depthcal
