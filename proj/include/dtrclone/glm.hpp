#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dtrclone {

struct FitOptions {
  int max_iterations = 50;
  double coefficient_tolerance = 1e-8;
  double deviance_tolerance = 1e-10;
  int max_step_halvings = 10;
  double separation_threshold = 15.0;
  double rank_tolerance = 1e-10;
  // Rescue a rank-deficient fit with a tiny ridge instead of failing.
  bool ridge_rescue = false;
  double ridge_scale = 1e-8;
};

struct FittedGlm {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd model_covariance;
  std::optional<Eigen::MatrixXd> robust_covariance;
  bool converged = false;
  int iterations = 0;
  double deviance = 0.0;
  bool ridge_applied = false;
  std::vector<std::string> column_names;
  std::vector<std::string> warnings;

  Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  // Index of a named column; throws std::out_of_range when absent.
  Eigen::Index column(const std::string& name) const;
};

// Weighted Bernoulli log-likelihood sum_i w_i [y_i eta_i - log(1 + exp(eta_i))].
double log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& beta);
// Gradient of log_likelihood: X' diag(w) (y - mu).
Eigen::VectorXd score(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& beta);

// Logistic regression by iteratively reweighted least squares with QR
// solves on the square-root-weighted design and deviance step-halving.
// Throws SeparationError, RankDeficiencyError or DataError on bad input.
FittedGlm fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& prior_weights, std::vector<std::string> column_names = {},
                       const FitOptions& options = {});

// Working-independence sandwich: bread * (sum_c U_c U_c') * bread, where U_c
// sums the weighted score contributions of cluster c.
Eigen::MatrixXd cluster_sandwich_covariance(const FittedGlm& fit, const Eigen::MatrixXd& x,
                                            const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& prior_weights,
                                            std::span<const std::size_t> cluster_ids);

}  // namespace dtrclone
