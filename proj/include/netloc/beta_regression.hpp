#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netloc/design_matrix.hpp"

namespace netloc {

/// Beta regression fitted by maximum likelihood: y ~ Beta(mu * phi, (1 - mu) * phi)
/// with logit(mu) = x' beta and a constant precision phi, parameterized
/// internally as log(phi).
struct RegressionFit {
  std::vector<std::string> columns;
  Eigen::VectorXd beta;
  double phi = 0.0;
  // Inverse observed information over (beta, log phi).
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  std::size_t n_obs = 0;
  std::size_t iterations = 0;
  double gradient_max_norm = 0.0;

  double se(std::size_t j) const { return std::sqrt(covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))); }
  double log_phi_se() const { return std::sqrt(covariance(covariance.rows() - 1, covariance.cols() - 1)); }
  /// Full parameter vector (beta, log phi).
  Eigen::VectorXd params() const;
};

struct FitOptions {
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-8;
  // Start from these (beta, log phi) instead of the least-squares start.
  std::optional<Eigen::VectorXd> start;
};

double beta_log_density(double y, double mu, double phi);

/// Log-likelihood at params = (beta, log phi).
double beta_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& params);
Eigen::VectorXd beta_log_likelihood_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& params);
Eigen::MatrixXd beta_log_likelihood_hessian(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& params);

/// Newton-Raphson with step halving until the gradient max-norm drops below
/// the tolerance. Throws StatisticalError on rank-deficient designs,
/// diverging precision (perfectly fitted responses) or non-convergence.
RegressionFit beta_regression_fit(const DesignMatrix& d, const FitOptions& opts = {});
RegressionFit beta_regression_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const std::vector<std::string>& columns, const FitOptions& opts = {});

inline double inverse_logit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace netloc
