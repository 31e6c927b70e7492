#include "dtrclone/glm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "dtrclone/error.hpp"

namespace dtrclone {

namespace {

constexpr double kMinVariance = 1e-12;

double expit1(double e) { return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); }

Eigen::VectorXd expit(const Eigen::VectorXd& eta) {
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) mu[i] = expit1(eta[i]);
  return mu;
}

// log(1 + exp(eta)) without overflow.
double log1pexp(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double deviance_at(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += w[i] * (y[i] * eta[i] - log1pexp(eta[i]));
  return -2.0 * ll;
}

std::string column_label(const std::vector<std::string>& names, Eigen::Index j) {
  auto idx = static_cast<std::size_t>(j);
  return idx < names.size() ? names[idx] : "column " + std::to_string(j);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

void check_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  if (x.rows() != y.size() || x.rows() != w.size())
    throw DataError("design, response and weights differ in length");
  if (x.rows() == 0) throw DataError("cannot fit a model to zero rows");
  if (x.cols() == 0) throw DataError("design has no columns");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("response must be binary");
    if (!(w[i] > 0) || !std::isfinite(w[i])) throw DataError("prior weights must be positive and finite");
  }
  if (!x.allFinite()) throw DataError("design matrix contains non-finite values");
}

struct WeightedSolve {
  Eigen::VectorXd beta;
  Eigen::MatrixXd r;
  std::vector<std::string> dependent;
};

// One IRLS least-squares solve at the current linear predictor.
WeightedSolve weighted_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& eta, double ridge, double rank_tol,
                             const std::vector<std::string>& names) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const Eigen::Index extra = ridge > 0 ? p : 0;
  Eigen::MatrixXd a(n + extra, p);
  Eigen::VectorXd rhs(n + extra);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mu = expit1(eta[i]);
    double var = std::max(mu * (1.0 - mu), kMinVariance);
    double sw = std::sqrt(w[i] * var);
    a.row(i) = sw * x.row(i);
    rhs[i] = sw * eta[i] + std::sqrt(w[i] / var) * (y[i] - mu);
  }
  if (extra > 0) {
    a.bottomRows(p) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(p, p);
    rhs.tail(p).setZero();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  WeightedSolve out;
  out.r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  double max_diag = out.r.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(std::fabs(out.r(j, j)) > rank_tol * max_diag)) out.dependent.push_back(column_label(names, j));
  }
  if (!out.dependent.empty()) return out;
  Eigen::VectorXd qtb = qr.householderQ().transpose() * rhs;
  out.beta = out.r.triangularView<Eigen::Upper>().solve(qtb.head(p));
  return out;
}

// (X'WX)^-1 from the triangular factor R of sqrt(W) X.
Eigen::MatrixXd inverse_from_r(const Eigen::MatrixXd& r) {
  const Eigen::Index p = r.cols();
  Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd cov = rinv * rinv.transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

Eigen::VectorXd FittedGlm::linear_predictor(const Eigen::MatrixXd& x) const { return x * coefficients; }

Eigen::VectorXd FittedGlm::predict(const Eigen::MatrixXd& x) const { return expit(linear_predictor(x)); }

Eigen::Index FittedGlm::column(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) throw std::out_of_range("no coefficient named '" + name + "'");
  return static_cast<Eigen::Index>(it - column_names.begin());
}

double log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& beta) {
  return -0.5 * deviance_at(x * beta, y, w);
}

Eigen::VectorXd score(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Eigen::VectorXd& beta) {
  Eigen::VectorXd mu = expit(x * beta);
  return x.transpose() * (w.array() * (y - mu).array()).matrix();
}

FittedGlm fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& prior_weights, std::vector<std::string> column_names,
                       const FitOptions& options) {
  check_inputs(x, y, prior_weights);
  const Eigen::Index p = x.cols();
  FittedGlm fit;
  fit.column_names = std::move(column_names);
  if (fit.column_names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) fit.column_names.push_back("x" + std::to_string(j));
  }
  if (static_cast<Eigen::Index>(fit.column_names.size()) != p)
    throw DataError("column name count does not match design");

  double ridge = 0.0;
  auto step = [&](const Eigen::VectorXd& eta) {
    WeightedSolve s = weighted_solve(x, y, prior_weights, eta, ridge, options.rank_tolerance, fit.column_names);
    if (!s.dependent.empty()) {
      if (!options.ridge_rescue || ridge > 0)
        throw RankDeficiencyError("singular information matrix; dependent columns: " + join(s.dependent));
      double scale = 0.0;
      for (Eigen::Index j = 0; j < p; ++j)
        scale = std::max(scale, 0.25 * (x.col(j).array().square() * prior_weights.array()).sum());
      ridge = options.ridge_scale * std::max(scale, 1.0);
      fit.ridge_applied = true;
      fit.warnings.push_back("ridge rescue applied; dependent columns: " + join(s.dependent));
      s = weighted_solve(x, y, prior_weights, eta, ridge, options.rank_tolerance, fit.column_names);
      if (!s.dependent.empty())
        throw RankDeficiencyError("singular information matrix; dependent columns: " + join(s.dependent));
    }
    return s;
  };
  auto penalized_deviance = [&](const Eigen::VectorXd& b) {
    return deviance_at(x * b, y, prior_weights) + ridge * b.squaredNorm();
  };

  Eigen::VectorXd column_sd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double m = x.col(j).mean();
    column_sd[j] = std::sqrt((x.col(j).array() - m).square().mean());
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd prev_delta = Eigen::VectorXd::Zero(p);
  double dev = penalized_deviance(beta);
  int growing = 0;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    WeightedSolve s = step(x * beta);
    Eigen::VectorXd candidate = s.beta;
    double dev_new = penalized_deviance(candidate);
    for (int h = 0; h < options.max_step_halvings && !(dev_new <= dev + 1e-12 * (std::fabs(dev) + 1.0)); ++h) {
      candidate = 0.5 * (beta + candidate);
      dev_new = penalized_deviance(candidate);
    }
    if (!std::isfinite(dev_new)) throw NumericalError("deviance became non-finite during fitting");
    Eigen::VectorXd delta = candidate - beta;

    // Coefficients running away with non-shrinking steps signal separation.
    bool runaway = false;
    std::string runaway_column;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::fabs(candidate[j]) > options.separation_threshold && iter > 1 &&
          std::fabs(delta[j]) >= 0.5 * std::fabs(prev_delta[j]) && std::fabs(delta[j]) > 1e-3) {
        runaway = true;
        runaway_column = fit.column_names[static_cast<std::size_t>(j)];
        break;
      }
    }
    if (runaway) {
      // A diverging intercept usually tracks a separating covariate; name
      // the non-constant column with the largest effect on its own scale.
      double worst = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        double effect = std::fabs(candidate[j]) * column_sd[j];
        if (effect > worst) {
          worst = effect;
          runaway_column = fit.column_names[static_cast<std::size_t>(j)];
        }
      }
    }
    growing = runaway ? growing + 1 : 0;
    if (growing >= 2)
      throw SeparationError(runaway_column, "apparent complete or quasi-complete separation on column '" +
                                                runaway_column + "'");

    double rel_change = std::fabs(dev - dev_new) / (std::fabs(dev_new) + 0.1);
    beta = candidate;
    prev_delta = delta;
    dev = dev_new;
    if (delta.cwiseAbs().maxCoeff() < options.coefficient_tolerance || rel_change < options.deviance_tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    fit.warnings.push_back("IRLS did not converge in " + std::to_string(options.max_iterations) + " iterations");

  fit.coefficients = beta;
  fit.deviance = deviance_at(x * beta, y, prior_weights);
  WeightedSolve final_solve = weighted_solve(x, y, prior_weights, x * beta, ridge, options.rank_tolerance,
                                             fit.column_names);
  if (!final_solve.dependent.empty())
    throw RankDeficiencyError("singular information matrix at the solution; dependent columns: " +
                              join(final_solve.dependent));
  fit.model_covariance = inverse_from_r(final_solve.r);
  return fit;
}

Eigen::MatrixXd cluster_sandwich_covariance(const FittedGlm& fit, const Eigen::MatrixXd& x,
                                            const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& prior_weights,
                                            std::span<const std::size_t> cluster_ids) {
  if (static_cast<Eigen::Index>(cluster_ids.size()) != x.rows())
    throw DataError("cluster ids differ in length from the design");
  if (!fit.converged) throw NumericalError("robust covariance requested for a fit that did not converge");
  const Eigen::Index p = x.cols();
  std::unordered_map<std::size_t, Eigen::Index> slot;
  std::vector<Eigen::VectorXd> sums;
  Eigen::VectorXd mu = fit.predict(x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto [it, inserted] = slot.try_emplace(cluster_ids[static_cast<std::size_t>(i)],
                                           static_cast<Eigen::Index>(sums.size()));
    if (inserted) sums.push_back(Eigen::VectorXd::Zero(p));
    sums[static_cast<std::size_t>(it->second)] += prior_weights[i] * (y[i] - mu[i]) * x.row(i).transpose();
  }
  if (sums.size() < 2) throw NumericalError("cluster-robust variance needs at least two clusters");
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (const auto& u : sums) meat.noalias() += u * u.transpose();
  Eigen::MatrixXd cov = fit.model_covariance * meat * fit.model_covariance;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace dtrclone
