#include "depthcal/regressor.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "depthcal/errors.hpp"

namespace depthcal {

bool DepthRegressorParams::finite() const {
  return std::isfinite(beta2) && std::isfinite(beta1) && std::isfinite(beta0);
}

double eval_regressor(const DepthRegressorParams& beta, double r) {
  if (!std::isfinite(r)) throw DomainError("eval_regressor: relative depth is not finite");
  return (beta.beta2 * r + beta.beta1) * r + beta.beta0;
}

DepthPairSet::DepthPairSet(std::vector<DepthPair> pairs) : pairs_(std::move(pairs)) {
  if (pairs_.empty()) throw DomainError("DepthPairSet: empty");
  for (const auto& p : pairs_) {
    if (!std::isfinite(p.r)) throw DomainError("DepthPairSet: relative depth is not finite");
    if (!std::isfinite(p.z) || p.z <= 0.0)
      throw DomainError("DepthPairSet: metric depth must be strictly positive");
  }
}

bool DepthPairSet::has_frames() const {
  return std::any_of(pairs_.begin(), pairs_.end(), [](const DepthPair& p) { return p.frame >= 0; });
}

std::vector<double> DepthPairSet::relative() const {
  std::vector<double> out;
  out.reserve(pairs_.size());
  for (const auto& p : pairs_) out.push_back(p.r);
  return out;
}

std::vector<double> DepthPairSet::metric() const {
  std::vector<double> out;
  out.reserve(pairs_.size());
  for (const auto& p : pairs_) out.push_back(p.z);
  return out;
}

std::vector<DepthPairSet> DepthPairSet::split_by_frame() const {
  std::map<int, std::vector<DepthPair>> groups;
  for (const auto& p : pairs_) groups[p.frame].push_back(p);
  std::vector<DepthPairSet> out;
  for (auto& [frame, pairs] : groups) out.emplace_back(std::move(pairs));
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    auto b = field.find_first_not_of(" \t\r");
    auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, std::size_t line) {
  if (s.empty()) throw ParseError("empty numeric field", line);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(fmt::format("not a number: '{}'", s), line);
  }
  if (used != s.size()) throw ParseError(fmt::format("not a number: '{}'", s), line);
  return v;
}

}  // namespace

DepthPairSet DepthPairSet::read_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header `r,z`", 1);
  ++lineno;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const auto header = split_fields(line);
  bool with_frame = false;
  if (header == std::vector<std::string>{"r", "z"}) {
    with_frame = false;
  } else if (header == std::vector<std::string>{"r", "z", "frame"}) {
    with_frame = true;
  } else {
    throw ParseError("expected header `r,z`", lineno);
  }

  std::vector<DepthPair> pairs;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_fields(line);
    if (f.size() != header.size())
      throw ParseError(fmt::format("expected {} fields, got {}", header.size(), f.size()), lineno);
    DepthPair p{parse_double(f[0], lineno), parse_double(f[1], lineno)};
    if (with_frame) p.frame = static_cast<int>(parse_double(f[2], lineno));
    if (!std::isfinite(p.r)) throw ParseError("relative depth is not finite", lineno);
    if (!(p.z > 0.0) || !std::isfinite(p.z)) throw ParseError("metric depth must be positive", lineno);
    pairs.push_back(p);
  }
  if (pairs.empty()) throw ParseError("no data rows", lineno);
  return DepthPairSet(std::move(pairs));
}

DepthPairSet DepthPairSet::read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path, 0);
  return read_csv(in);
}

void DepthPairSet::write_csv(std::ostream& out) const {
  const bool frames = has_frames();
  out << (frames ? "r,z,frame\n" : "r,z\n");
  for (const auto& p : pairs_) {
    if (frames)
      out << fmt::format("{:.17g},{:.17g},{}\n", p.r, p.z, p.frame);
    else
      out << fmt::format("{:.17g},{:.17g}\n", p.r, p.z);
  }
}

DepthRegressorParams fit_least_squares_quadratic(const DepthPairSet& data) {
  std::set<double> distinct;
  for (const auto& p : data.pairs()) distinct.insert(p.r);
  if (data.size() < 3 || distinct.size() < 3)
    throw SingularFitError("quadratic fit needs at least 3 distinct relative depths");

  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = data.pairs()[static_cast<std::size_t>(i)];
    design.row(i) = regressor_row(p.r);
    z(i) = p.z;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 3) throw SingularFitError("quadratic design matrix is rank deficient");
  Eigen::Vector3d beta = qr.solve(z);
  // One step of iterative refinement tightens the normal-equation residual.
  beta += qr.solve(z - design * beta);
  return DepthRegressorParams::from_vec(beta);
}

double fit_percentage(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw DomainError("fit_percentage: lists must be non-empty and of equal length");
  const double n = static_cast<double>(truth.size());
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= n;
  double var = 0.0;
  double sq_err = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    var += (truth[i] - mean) * (truth[i] - mean);
    sq_err += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  }
  if (var <= 0.0) throw DegenerateMetricError("fit_percentage: truth has zero variance");
  if (sq_err == 0.0) return 100.0;
  const double nrmse = std::sqrt(sq_err / n) / std::sqrt(var / n);
  return 100.0 * std::max(0.0, 1.0 - nrmse);
}

}  // namespace depthcal
