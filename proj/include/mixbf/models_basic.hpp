#pragma once

// Model components without epidemic structure: Poisson process vs linear
// birth process, a pair of conjugate normal linear regressions, nested
// logistic regressions with shared coefficients, and a fixed-density toy.

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mixbf/mcmc.hpp"
#include "mixbf/rng.hpp"

namespace mixbf::models {

// --- event data and ex3 models ---------------------------------------

struct EventData {
  std::vector<double> times;  // sorted, within [0, horizon]
  double horizon = 1.0;

  std::size_t n() const noexcept { return times.size(); }
  double sum() const noexcept;
  void validate() const;

  // n events at the common time S/n; both likelihoods depend on the data only
  // through (n, T, S).
  static EventData from_summary(std::size_t n, double horizon, double sum);
  static EventData from_csv(const std::filesystem::path& path, double horizon);
};

// Densities relative to a unit-rate Poisson process on [0, T].
double pp_loglik(const EventData& data, double lambda);
double birth_loglik(const EventData& data, double mu);

// Gamma(n+1, T+theta) when current, Gamma(1, theta) otherwise (shape, rate).
double pp_gibbs_lambda(const EventData& data, double prior_rate, bool current, Rng& rng);
// Gamma(n+1, (n+1)T - S + theta) when current, Gamma(1, theta) otherwise.
double birth_gibbs_mu(const EventData& data, double prior_rate, bool current, Rng& rng);

class PoissonProcessModel : public mcmc::ModelComponent {
 public:
  PoissonProcessModel(std::shared_ptr<const EventData> data, double prior_rate, std::size_t slot);
  std::string name() const override { return "poisson"; }
  std::vector<std::size_t> slots() const override { return {slot_}; }
  double log_augmented_density(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;

 private:
  std::shared_ptr<const EventData> data_;
  double prior_rate_;
  std::size_t slot_;
};

class BirthProcessModel : public mcmc::ModelComponent {
 public:
  BirthProcessModel(std::shared_ptr<const EventData> data, double prior_rate, std::size_t slot);
  std::string name() const override { return "birth"; }
  std::vector<std::size_t> slots() const override { return {slot_}; }
  double log_augmented_density(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;

 private:
  std::shared_ptr<const EventData> data_;
  double prior_rate_;
  std::size_t slot_;
};

// M1 Poisson process (slot "lambda"), M2 birth process (slot "mu"), both with
// Exp(prior_rate) priors.
mcmc::MixtureSpec ex3_spec(std::shared_ptr<const EventData> data, double prior_rate,
                           std::vector<double> dirichlet_p);

// --- fixed-density toy -------------------------------------------------------

class FixedDensityModel : public mcmc::ModelComponent {
 public:
  FixedDensityModel(std::string name, double log_density)
      : name_(std::move(name)), log_density_(log_density) {}
  std::string name() const override { return name_; }
  std::vector<std::size_t> slots() const override { return {}; }
  double log_augmented_density(std::span<const double>) const override { return log_density_; }
  void update_params_current(std::span<double>, Rng&) override {}
  double sample_prior(std::size_t, Rng&) const override { return 0.0; }

 private:
  std::string name_;
  double log_density_;
};

// Two parameter-free models whose log-densities differ by log_ratio, so the
// true B12 is exp(log_ratio).
mcmc::MixtureSpec toy_spec(double log_ratio, std::vector<double> dirichlet_p);

// --- conjugate normal linear regression -------------------------------------

struct RegressionData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;  // [1, x - mean(x)]
  Eigen::MatrixXd z;  // [1, z - mean(z)]

  std::size_t n() const noexcept { return static_cast<std::size_t>(y.size()); }
  const Eigen::MatrixXd& design(std::size_t model) const { return model == 0 ? x : z; }
  void validate() const;

  // Builds centred designs from raw covariates.
  static RegressionData from_covariates(const std::vector<double>& y, const std::vector<double>& x,
                                        const std::vector<double>& z);
  static RegressionData from_csv(const std::filesystem::path& path, const std::string& y_col,
                                 const std::string& x_col, const std::string& z_col);
};

// Coefficients ~ N(mu0, v0); variance ~ IG(a0, b0) with density
// x^{-(a+1)} exp(-1/(b x)) / (Gamma(a) b^a), i.e. 1/variance ~ Gamma(a, scale b).
struct RegressionPrior {
  Eigen::VectorXd mu0;
  Eigen::MatrixXd v0;
  double a0 = 3.0;
  double b0 = 1.0;

  void validate(std::size_t dim) const;
  static RegressionPrior pines();
};

struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct InverseGammaParams {
  double a = 0.0;
  double b = 0.0;
};

GaussianConditional regression_coefficient_conditional(const Eigen::MatrixXd& w,
                                                       const Eigen::VectorXd& y, double sigma2,
                                                       const RegressionPrior& prior);
InverseGammaParams regression_variance_conditional(const Eigen::MatrixXd& w,
                                                   const Eigen::VectorXd& y,
                                                   const Eigen::VectorXd& coef,
                                                   const RegressionPrior& prior);
double regression_loglik(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& coef, double sigma2);

double sample_inverse_gamma(double a, double b, Rng& rng);
double inverse_gamma_log_pdf(double x, double a, double b);
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng);

// Model `which` (0 uses x, 1 uses z) over slots first_slot .. first_slot+d,
// the last of which is the error variance.
class RegressionModel : public mcmc::ModelComponent {
 public:
  RegressionModel(std::string name, std::shared_ptr<const RegressionData> data, std::size_t which,
                  RegressionPrior prior, std::size_t first_slot);
  std::string name() const override { return name_; }
  std::vector<std::size_t> slots() const override;
  double log_augmented_density(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;
  void sample_prior_block(std::span<double> theta, std::span<const std::size_t> slots,
                          Rng& rng) const override;
  double initial_value(std::size_t slot, Rng& rng) const override;

 private:
  std::size_t dim() const noexcept { return static_cast<std::size_t>(prior_.mu0.size()); }
  Eigen::VectorXd coef(std::span<const double> theta) const;

  std::string name_;
  std::shared_ptr<const RegressionData> data_;
  std::size_t which_;
  RegressionPrior prior_;
  std::size_t first_;
  Eigen::LLT<Eigen::MatrixXd> v0_chol_;
};

mcmc::MixtureSpec regression_spec(std::shared_ptr<const RegressionData> data,
                                  const RegressionPrior& prior, std::vector<double> dirichlet_p);

// Synthetic pines-like data: y = a + b (x - xbar) + N(0, sd^2), z a noisy copy of x.
RegressionData simulate_regression_data(std::size_t n, double intercept, double slope, double sd,
                                        double z_noise, Rng& rng);

// --- nested logistic regression with shared coefficients ---------------------

struct LogisticData {
  std::vector<int> response;        // 0/1
  Eigen::MatrixXd covariates;       // n x D, leading column of ones
  std::vector<std::size_t> model_columns;  // leading columns used by each model, increasing

  std::size_t n() const noexcept { return response.size(); }
  std::size_t models() const noexcept { return model_columns.size(); }
  void validate() const;

  static LogisticData from_csv(const std::filesystem::path& path, const std::string& response_col,
                               const std::vector<std::string>& covariate_cols,
                               std::vector<std::size_t> model_columns);
};

// Log-likelihood using the first `columns` covariates and coefficients.
double logistic_loglik(const LogisticData& data, std::span<const double> coef, std::size_t columns);

struct AcceptanceCounter {
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;
  double rate() const noexcept {
    return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

// Componentwise Gaussian random-walk Metropolis-Hastings on the leading
// `columns` shared coefficients, each with a N(0, prior_sd^2) prior.
class LogisticModel : public mcmc::ModelComponent {
 public:
  LogisticModel(std::string name, std::shared_ptr<const LogisticData> data, std::size_t columns,
                double prior_sd, std::vector<double> proposal_scales);
  std::string name() const override { return name_; }
  std::vector<std::size_t> slots() const override;
  double log_augmented_density(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;
  double initial_value(std::size_t, Rng&) const override { return 0.0; }

  const AcceptanceCounter& acceptance() const noexcept { return acc_; }

 private:
  std::string name_;
  std::shared_ptr<const LogisticData> data_;
  std::size_t columns_;
  double prior_sd_;
  std::vector<double> scales_;
  AcceptanceCounter acc_;
};

// One component per entry of data.model_columns; slot j is owned by the
// smallest model using column j.
mcmc::MixtureSpec logistic_spec(std::shared_ptr<const LogisticData> data, double prior_sd,
                                double proposal_scale, std::vector<double> dirichlet_p);

// Responses drawn from the largest model with coefficients `coef`; covariates
// beyond the intercept are standard normal.
LogisticData simulate_logistic_data(std::size_t n, const std::vector<double>& coef,
                                    std::vector<std::size_t> model_columns, Rng& rng);

}  // namespace mixbf::models
