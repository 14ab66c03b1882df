#pragma once

#include <Eigen/Core>
#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depthcal {

/// Coefficients of the quadratic relative-to-metric depth map
/// Z = beta2 * r^2 + beta1 * r + beta0.
struct DepthRegressorParams {
  double beta2 = 0.0;
  double beta1 = 1.0;
  double beta0 = 0.0;

  static DepthRegressorParams identity() { return {0.0, 1.0, 0.0}; }

  Eigen::Vector3d vec() const { return {beta2, beta1, beta0}; }
  static DepthRegressorParams from_vec(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

  bool finite() const;
  bool operator==(const DepthRegressorParams&) const = default;
};

/// Row of the linear observation model: [r^2, r, 1].
inline Eigen::RowVector3d regressor_row(double r) { return {r * r, r, 1.0}; }

double eval_regressor(const DepthRegressorParams& beta, double r);

struct DepthPair {
  double r;
  double z;
  int frame = -1;
};

/// Validated list of (relative depth, metric depth) pairs.
class DepthPairSet {
 public:
  DepthPairSet() = default;
  explicit DepthPairSet(std::vector<DepthPair> pairs);

  const std::vector<DepthPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool has_frames() const;

  std::vector<double> relative() const;
  std::vector<double> metric() const;

  /// Splits by the optional frame column; pairs without a frame go to -1.
  std::vector<DepthPairSet> split_by_frame() const;

  /// CSV with header `r,z` (optionally `r,z,frame`).
  static DepthPairSet read_csv(std::istream& in);
  static DepthPairSet read_csv_file(const std::string& path);
  void write_csv(std::ostream& out) const;

 private:
  std::vector<DepthPair> pairs_;
};

DepthRegressorParams fit_least_squares_quadratic(const DepthPairSet& data);

enum class FamilyKind { gaussian, logarithmic, power_law, rational, linear, polynomial2 };

inline constexpr std::array<FamilyKind, 6> kAllFamilies = {
    FamilyKind::gaussian, FamilyKind::logarithmic, FamilyKind::power_law,
    FamilyKind::rational, FamilyKind::linear,      FamilyKind::polynomial2};

std::string_view family_name(FamilyKind kind);
std::optional<FamilyKind> parse_family(std::string_view name);
std::size_t family_arity(FamilyKind kind);

struct RegressorFamily {
  FamilyKind kind;
  std::vector<double> params;

  RegressorFamily(FamilyKind k, std::vector<double> p);
  double operator()(double r) const;
};

struct FamilyFit {
  RegressorFamily family;
  double fit_percentage;
  int iterations = 0;
  bool converged = true;
};

struct CurveFitOptions {
  double initial_damping = 1e-3;
  int max_iterations = 200;
  double relative_cost_tolerance = 1e-10;
};

/// Fits one family by Levenberg-Marquardt. Throws ConvergenceError (carrying
/// the last iterate) when the iteration budget is exhausted.
FamilyFit fit_family(FamilyKind kind, const DepthPairSet& data, const CurveFitOptions& opts = {});

/// 100 * max(0, 1 - RMSE / std(truth)).
double fit_percentage(std::span<const double> predicted, std::span<const double> truth);

}  // namespace depthcal
