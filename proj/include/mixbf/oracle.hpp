#pragma once

// Reference marginal likelihoods and Bayes factors computed without MCMC.

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <string>

#include "mixbf/models_basic.hpp"
#include "mixbf/rng.hpp"

namespace mixbf::oracle {

struct OracleResult {
  double log_value = 0.0;
  double value = 0.0;           // exp(log_value); may underflow for marginals
  double standard_error = 0.0;  // of value; zero for deterministic methods
  double log_standard_error = 0.0;
  std::string method;
};

// [(n+1)T - S + theta]^{n+1} / ((T + theta)^{n+1} n!), evaluated in log space.
double log_analytic_bf_ex3(std::size_t n, double horizon, double sum, double theta);
double analytic_bf_ex3(std::size_t n, double horizon, double sum, double theta);

// log N(y; W mu0, sigma2 I + W v0 W^T).
double gaussian_log_evidence(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                             const models::RegressionPrior& prior, double sigma2);

// Gaussian evidence integrated against the inverse-gamma prior on sigma2,
// by adaptive Gauss-Kronrod quadrature in log sigma2.
OracleResult regression_marginal_quadrature(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                                            const models::RegressionPrior& prior,
                                            double rel_tol = 1e-8);

// log p(x, theta) for a logistic model using the leading `columns` covariates
// with independent N(0, prior_sd^2) coefficients.
double logistic_log_joint(const models::LogisticData& data, std::size_t columns, double prior_sd,
                          const Eigen::VectorXd& theta);

struct LaplaceFit {
  Eigen::VectorXd mode;
  Eigen::MatrixXd neg_hessian;  // of the log target at the mode
  double log_target_at_mode = 0.0;
  double log_marginal = 0.0;    // log of (2 pi)^{d/2} |H|^{-1/2} exp(log target)
  int iterations = 0;
};

// Newton ascent with central finite-difference derivatives, step
// 1e-4 (1 + |x_i|). Throws NumericalError if the optimiser fails or the
// curvature is not negative definite.
LaplaceFit laplace_fit(const std::function<double(const Eigen::VectorXd&)>& log_target,
                       Eigen::VectorXd start, int max_iterations = 200);

OracleResult laplace_marginal(const models::LogisticData& data, std::size_t columns,
                              double prior_sd);

// Importance sampling from the Laplace Gaussian with its standard deviations
// multiplied by `inflation`, which keeps the weights' variance finite when
// the posterior is skewed. The estimate is the mean weight, with standard
// error sd(weights) / sqrt(n_samples).
OracleResult logistic_marginal_is(const models::LogisticData& data, std::size_t columns,
                                  double prior_sd, std::size_t n_samples, Rng& rng,
                                  double inflation = 1.5);

}  // namespace mixbf::oracle
