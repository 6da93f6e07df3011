#include "triplet/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "triplet/error.hpp"

namespace triplet {

std::size_t FitResult::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw InvalidInput("fit result has no parameter '" + std::string(name) + "'");
}

double FitResult::sigma(std::string_view name) const {
  const auto i = static_cast<Eigen::Index>(index(name));
  return std::sqrt(std::max(covariance(i, i), 0.0));
}

bool FitResult::has_warning(std::string_view fragment) const {
  return std::any_of(warnings.begin(), warnings.end(),
                     [&](const std::string& w) { return w.find(fragment) != std::string::npos; });
}

Eigen::MatrixXd finite_difference_jacobian(const LeastSquaresProblem& problem, const Eigen::VectorXd& p,
                                           const Eigen::VectorXd& steps) {
  const Eigen::VectorXd r0 = problem.residuals(p);
  Eigen::MatrixXd j(r0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    Eigen::VectorXd hi = p, lo = p;
    hi(k) += steps(k);
    lo(k) -= steps(k);
    j.col(k) = (problem.residuals(hi) - problem.residuals(lo)) / (hi(k) - lo(k));
  }
  return j;
}

namespace {

Eigen::MatrixXd evaluate_jacobian(const LeastSquaresProblem& problem, const Eigen::VectorXd& p) {
  if (problem.jacobian) return problem.jacobian(p);
  Eigen::VectorXd steps(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) steps(k) = 1e-6 * std::max(std::abs(p(k)), 1e-3);
  return finite_difference_jacobian(problem, p, steps);
}

}  // namespace

double jacobian_check(const LeastSquaresProblem& problem, const Eigen::VectorXd& params, double h) {
  Eigen::VectorXd steps(params.size());
  for (Eigen::Index k = 0; k < params.size(); ++k) steps(k) = h * std::max(std::abs(params(k)), 1.0);
  const Eigen::MatrixXd fd = finite_difference_jacobian(problem, params, steps);
  const Eigen::MatrixXd an = evaluate_jacobian(problem, params);
  if (fd.rows() != an.rows() || fd.cols() != an.cols()) throw InvalidInput("jacobian_check: shape mismatch");
  double worst = 0.0;
  for (Eigen::Index k = 0; k < fd.cols(); ++k) {
    const double ref = fd.col(k).cwiseAbs().maxCoeff();
    const double diff = (an.col(k) - fd.col(k)).cwiseAbs().maxCoeff();
    if (ref == 0.0) {
      worst = std::max(worst, diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    } else {
      worst = std::max(worst, diff / ref);
    }
  }
  return worst;
}

Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& j, double scale, int* rank_deficiency,
                                         double floor) {
  const Eigen::MatrixXd jtj = j.transpose() * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jtj);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = ev.size() ? ev.maxCoeff() : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  int dropped = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (top > 0.0 && ev(i) > floor * top) {
      inv(i) = 1.0 / ev(i);
    } else {
      ++dropped;
    }
  }
  if (rank_deficiency) *rank_deficiency = dropped;
  Eigen::MatrixXd c = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd sym = 0.5 * (c + c.transpose()) * scale;
  return sym;
}

LmResult levenberg_marquardt(const LeastSquaresProblem& problem, const Eigen::VectorXd& p0,
                             const LmOptions& options) {
  const Eigen::Index n = p0.size();
  Eigen::VectorXd scale = options.scale;
  if (scale.size() != n) {
    scale.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) scale(k) = std::max(std::abs(p0(k)), 1e-3);
  }

  LmResult out;
  out.params = p0;
  out.residuals = problem.residuals(p0);
  if (!out.residuals.allFinite()) throw InvalidInput("levenberg_marquardt: residuals not finite at start");
  out.cost = 0.5 * out.residuals.squaredNorm();
  out.jacobian = evaluate_jacobian(problem, p0);

  double mu = -1.0;
  double nu = 2.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    // scaled variables z = p / scale
    const Eigen::MatrixXd js = out.jacobian * scale.asDiagonal();
    const Eigen::VectorXd g = js.transpose() * out.residuals;
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
      out.converged = true;
      out.diagnostic = "gradient norm below tolerance";
      return out;
    }
    const Eigen::MatrixXd a = js.transpose() * js;
    if (mu < 0.0) mu = 1e-3 * std::max(a.diagonal().maxCoeff(), 1e-300);

    const Eigen::MatrixXd damped = a + mu * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd dz = damped.ldlt().solve(-g);
    const Eigen::VectorXd z = out.params.cwiseQuotient(scale);
    if (dz.norm() <= options.step_tol * (z.norm() + options.step_tol)) {
      out.converged = true;
      out.diagnostic = "relative step below tolerance";
      return out;
    }
    const Eigen::VectorXd trial = out.params + scale.cwiseProduct(dz);
    const Eigen::VectorXd r_trial = problem.residuals(trial);
    const double cost_trial = r_trial.allFinite() ? 0.5 * r_trial.squaredNorm()
                                                  : std::numeric_limits<double>::infinity();
    const double predicted = -(g.dot(dz) + 0.5 * dz.dot(a * dz));
    const double rho = predicted > 0.0 ? (out.cost - cost_trial) / predicted : -1.0;
    if (rho > 0.0) {
      out.params = trial;
      out.residuals = r_trial;
      out.cost = cost_trial;
      out.jacobian = evaluate_jacobian(problem, trial);
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (!std::isfinite(mu) || mu > 1e300) {
        out.converged = true;
        out.diagnostic = "no further decrease possible";
        return out;
      }
    }
  }
  out.diagnostic = "maximum iterations reached";
  return out;
}

}  // namespace triplet
