#pragma once

// Damped least squares shared by every fit in the inference layer.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace triplet {

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::MatrixXd covariance;  // symmetric, PSD
  Eigen::VectorXd residuals;   // weighted residuals at the solution
  double residual_norm = 0.0;  // ||residuals||
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;
  std::vector<std::string> warnings;

  // Throws InvalidInput for an unknown name.
  std::size_t index(std::string_view name) const;
  double value(std::string_view name) const { return values(static_cast<Eigen::Index>(index(name))); }
  double sigma(std::string_view name) const;
  bool has_warning(std::string_view fragment) const;
};

// Residual vector r(p) and its Jacobian dr/dp. An empty jacobian falls back
// to central differences.
struct LeastSquaresProblem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

struct LmOptions {
  int max_iterations = 500;
  double step_tol = 1e-8;       // relative step, scaled variables
  double gradient_tol = 1e-10;  // infinity norm of the scaled gradient
  // Per-parameter scale; empty means max(|p0_i|, 1e-3).
  Eigen::VectorXd scale;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // 0.5 ||r||^2
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;
};

// Levenberg-Marquardt with Nielsen damping updates on scaled parameters.
LmResult levenberg_marquardt(const LeastSquaresProblem& problem, const Eigen::VectorXd& p0,
                             const LmOptions& options = {});

Eigen::MatrixXd finite_difference_jacobian(const LeastSquaresProblem& problem, const Eigen::VectorXd& p,
                                           const Eigen::VectorXd& steps);

// Largest column-wise relative deviation between the problem's Jacobian and a
// central difference with step h * max(|p_i|, 1).
double jacobian_check(const LeastSquaresProblem& problem, const Eigen::VectorXd& params, double h);

// (J^T J)^+ with eigenvalues below floor * max eigenvalue discarded, times
// scale. Also reports how many directions were discarded.
Eigen::MatrixXd covariance_from_jacobian(const Eigen::MatrixXd& j, double scale, int* rank_deficiency = nullptr,
                                         double floor = 1e-10);

}  // namespace triplet
