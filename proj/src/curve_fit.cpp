// Regressor-family fitting by Levenberg-Marquardt.

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>

#include "depthcal/errors.hpp"
#include "depthcal/regressor.hpp"

namespace depthcal {

std::string_view family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::logarithmic: return "logarithmic";
    case FamilyKind::power_law: return "power_law";
    case FamilyKind::rational: return "rational";
    case FamilyKind::linear: return "linear";
    case FamilyKind::polynomial2: return "polynomial2";
  }
  return "?";
}

std::optional<FamilyKind> parse_family(std::string_view name) {
  for (auto k : kAllFamilies)
    if (family_name(k) == name) return k;
  if (name == "power-law" || name == "powerlaw") return FamilyKind::power_law;
  if (name == "polynomial" || name == "quadratic") return FamilyKind::polynomial2;
  return std::nullopt;
}

std::size_t family_arity(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian:
    case FamilyKind::polynomial2: return 3;
    default: return 2;
  }
}

RegressorFamily::RegressorFamily(FamilyKind k, std::vector<double> p) : kind(k), params(std::move(p)) {
  if (params.size() != family_arity(kind)) throw ArityError("RegressorFamily: wrong parameter count");
}

namespace {

double eval_family(FamilyKind kind, const double* p, double r) {
  switch (kind) {
    case FamilyKind::gaussian: {
      const double d = r - p[1];
      return p[0] * std::exp(-d * d / (2.0 * p[2] * p[2]));
    }
    case FamilyKind::logarithmic: return p[0] * std::log(r) + p[1];
    case FamilyKind::power_law: return p[0] * std::pow(r, p[1]);
    case FamilyKind::rational: return p[0] / (r + p[1]);
    case FamilyKind::linear: return p[0] * r + p[1];
    case FamilyKind::polynomial2: return (p[0] * r + p[1]) * r + p[2];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void family_jacobian_row(FamilyKind kind, const double* p, double r, double* row) {
  switch (kind) {
    case FamilyKind::gaussian: {
      const double d = r - p[1];
      const double c2 = p[2] * p[2];
      const double e = std::exp(-d * d / (2.0 * c2));
      row[0] = e;
      row[1] = p[0] * e * d / c2;
      row[2] = p[0] * e * d * d / (c2 * p[2]);
      return;
    }
    case FamilyKind::logarithmic:
      row[0] = std::log(r);
      row[1] = 1.0;
      return;
    case FamilyKind::power_law: {
      const double rb = std::pow(r, p[1]);
      row[0] = rb;
      row[1] = p[0] * rb * std::log(r);
      return;
    }
    case FamilyKind::rational: {
      const double inv = 1.0 / (r + p[1]);
      row[0] = inv;
      row[1] = -p[0] * inv * inv;
      return;
    }
    case FamilyKind::linear:
      row[0] = r;
      row[1] = 1.0;
      return;
    case FamilyKind::polynomial2:
      row[0] = r * r;
      row[1] = r;
      row[2] = 1.0;
      return;
  }
}

// Least-squares line z = slope * x + intercept.
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& z) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = x[static_cast<std::size_t>(i)];
    a(i, 1) = 1.0;
    b(i) = z[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 2) throw SingularFitError("line fit needs at least 2 distinct relative depths");
  Eigen::Vector2d s = qr.solve(b);
  return {s(0), s(1)};
}

std::vector<double> initial_guess(FamilyKind kind, const std::vector<double>& r, const std::vector<double>& z) {
  const auto [slope, intercept] = line_fit(r, z);
  switch (kind) {
    case FamilyKind::linear: return {slope, intercept};
    case FamilyKind::polynomial2: return {0.0, slope, intercept};
    case FamilyKind::power_law: {
      // log z = log a + b log r when every z is positive.
      std::vector<double> lr, lz;
      for (std::size_t i = 0; i < r.size(); ++i) {
        lr.push_back(std::log(r[i]));
        lz.push_back(std::log(z[i]));
      }
      const auto [b, loga] = line_fit(lr, lz);
      return {std::exp(loga), b};
    }
    case FamilyKind::logarithmic: {
      std::vector<double> lr;
      for (double v : r) lr.push_back(std::log(v));
      const auto [a, b] = line_fit(lr, z);
      return {a, b};
    }
    case FamilyKind::rational: {
      // 1/z = r/a + b/a.
      std::vector<double> iz;
      for (double v : z) iz.push_back(1.0 / v);
      const auto [s, c] = line_fit(r, iz);
      if (std::abs(s) < 1e-12) return {slope, 0.0};
      return {1.0 / s, c / s};
    }
    case FamilyKind::gaussian: {
      const auto imax = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      const auto [rmin, rmax] = std::minmax_element(r.begin(), r.end());
      const double width = std::max(*rmax - *rmin, 1e-6);
      return {z[imax], r[imax], width};
    }
  }
  return {};
}

double half_cost(FamilyKind kind, const std::vector<double>& p, const std::vector<double>& r,
                 const std::vector<double>& z) {
  double c = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double e = eval_family(kind, p.data(), r[i]) - z[i];
    c += e * e;
  }
  return std::isfinite(c) ? 0.5 * c : std::numeric_limits<double>::infinity();
}

}  // namespace

double RegressorFamily::operator()(double r) const { return eval_family(kind, params.data(), r); }

FamilyFit fit_family(FamilyKind kind, const DepthPairSet& data, const CurveFitOptions& opts) {
  const auto r = data.relative();
  const auto z = data.metric();
  if (kind == FamilyKind::logarithmic || kind == FamilyKind::power_law) {
    if (std::any_of(r.begin(), r.end(), [](double v) { return v <= 0.0; }))
      throw DomainError(std::string(family_name(kind)) + " fit requires strictly positive relative depths");
  }
  const std::size_t k = family_arity(kind);
  if (data.size() < k) throw SingularFitError("fewer pairs than family parameters");

  std::vector<double> params = initial_guess(kind, r, z);
  double cost = half_cost(kind, params, r, z);
  double lambda = opts.initial_damping;
  const auto n = static_cast<Eigen::Index>(r.size());
  const auto kk = static_cast<Eigen::Index>(k);

  Eigen::MatrixXd jac(n, kk);
  Eigen::VectorXd res(n);
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iterations && !converged; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      double row[3];
      family_jacobian_row(kind, params.data(), r[iu], row);
      for (Eigen::Index j = 0; j < kk; ++j) jac(i, j) = row[j];
      res(i) = eval_family(kind, params.data(), r[iu]) - z[iu];
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * res;
    if (cost == 0.0 || grad.lpNorm<Eigen::Infinity>() == 0.0) {
      converged = true;
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index j = 0; j < kk; ++j) damped(j, j) += lambda * std::max(jtj(j, j), 1e-12);
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      std::vector<double> trial(params);
      for (Eigen::Index j = 0; j < kk; ++j) trial[static_cast<std::size_t>(j)] += step(j);
      const double trial_cost = half_cost(kind, trial, r, z);
      if (step.allFinite() && trial_cost <= cost) {
        const double rel_change = (cost - trial_cost) / std::max(cost, std::numeric_limits<double>::min());
        double pnorm = 0.0;
        for (double v : params) pnorm = std::max(pnorm, std::abs(v));
        const bool tiny_step = step.lpNorm<Eigen::Infinity>() <= 1e-14 * (pnorm + 1e-14);
        params = std::move(trial);
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted = true;
        if (rel_change < opts.relative_cost_tolerance || tiny_step) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left at working precision: a stationary point.
          converged = true;
          break;
        }
      }
    }
  }

  if (!converged) throw ConvergenceError("fit_family: no convergence for " + std::string(family_name(kind)), params);

  RegressorFamily fam(kind, params);
  std::vector<double> pred;
  pred.reserve(r.size());
  for (double v : r) pred.push_back(fam(v));
  if (std::any_of(pred.begin(), pred.end(), [](double v) { return !std::isfinite(v); }))
    throw DomainError("fit_family: fitted model is not finite on the data");
  return FamilyFit{std::move(fam), fit_percentage(pred, z), it, true};
}

}  // namespace depthcal
