#include "mixbf/models_basic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mixbf/csv.hpp"
#include "mixbf/error.hpp"

namespace mixbf::models {

namespace {

double log1p_exp(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

// --- event data ----------------------------------------------------------------

double EventData::sum() const noexcept {
  double s = 0.0;
  for (double t : times) s += t;
  return s;
}

void EventData::validate() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon T must be positive");
  double prev = 0.0;
  for (double t : times) {
    if (!(t >= prev) || t > horizon)
      throw InvalidArgument("event times must be sorted and lie in [0, T]");
    prev = t;
  }
}

EventData EventData::from_summary(std::size_t n, double horizon, double sum) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon T must be positive");
  if (sum < 0.0 || sum > static_cast<double>(n) * horizon || (n == 0 && sum != 0.0))
    throw InvalidArgument("S must lie in [0, nT]");
  EventData d;
  d.horizon = horizon;
  if (n > 0) d.times.assign(n, sum / static_cast<double>(n));
  return d;
}

EventData EventData::from_csv(const std::filesystem::path& path, double horizon) {
  const auto table = csv::read(path);
  EventData d;
  d.times = table.values("time");
  std::sort(d.times.begin(), d.times.end());
  d.horizon = horizon;
  d.validate();
  return d;
}

double pp_loglik(const EventData& data, double lambda) {
  const double n = static_cast<double>(data.n());
  const double head = data.n() == 0 ? 0.0 : n * std::log(lambda);
  return head - (lambda - 1.0) * data.horizon;
}

double birth_loglik(const EventData& data, double mu) {
  const double n = static_cast<double>(data.n());
  const double head = data.n() == 0 ? 0.0 : std::lgamma(n + 1.0) + n * std::log(mu);
  return head - mu * ((n + 1.0) * data.horizon - data.sum()) + data.horizon;
}

double pp_gibbs_lambda(const EventData& data, double prior_rate, bool current, Rng& rng) {
  if (!current) return rng.gamma(1.0, prior_rate);
  return rng.gamma(static_cast<double>(data.n()) + 1.0, data.horizon + prior_rate);
}

double birth_gibbs_mu(const EventData& data, double prior_rate, bool current, Rng& rng) {
  if (!current) return rng.gamma(1.0, prior_rate);
  const double n = static_cast<double>(data.n());
  return rng.gamma(n + 1.0, (n + 1.0) * data.horizon - data.sum() + prior_rate);
}

PoissonProcessModel::PoissonProcessModel(std::shared_ptr<const EventData> data, double prior_rate,
                                         std::size_t slot)
    : data_(std::move(data)), prior_rate_(prior_rate), slot_(slot) {
  if (!data_) throw InvalidArgument("missing event data");
  data_->validate();
  if (!(prior_rate_ > 0.0)) throw InvalidArgument("prior rate theta must be positive");
}

double PoissonProcessModel::log_augmented_density(std::span<const double> theta) const {
  return pp_loglik(*data_, theta[slot_]);
}

void PoissonProcessModel::update_params_current(std::span<double> theta, Rng& rng) {
  theta[slot_] = pp_gibbs_lambda(*data_, prior_rate_, true, rng);
}

double PoissonProcessModel::sample_prior(std::size_t, Rng& rng) const {
  return pp_gibbs_lambda(*data_, prior_rate_, false, rng);
}

BirthProcessModel::BirthProcessModel(std::shared_ptr<const EventData> data, double prior_rate,
                                     std::size_t slot)
    : data_(std::move(data)), prior_rate_(prior_rate), slot_(slot) {
  if (!data_) throw InvalidArgument("missing event data");
  data_->validate();
  if (!(prior_rate_ > 0.0)) throw InvalidArgument("prior rate theta must be positive");
}

double BirthProcessModel::log_augmented_density(std::span<const double> theta) const {
  return birth_loglik(*data_, theta[slot_]);
}

void BirthProcessModel::update_params_current(std::span<double> theta, Rng& rng) {
  theta[slot_] = birth_gibbs_mu(*data_, prior_rate_, true, rng);
}

double BirthProcessModel::sample_prior(std::size_t, Rng& rng) const {
  return birth_gibbs_mu(*data_, prior_rate_, false, rng);
}

mcmc::MixtureSpec ex3_spec(std::shared_ptr<const EventData> data, double prior_rate,
                           std::vector<double> dirichlet_p) {
  mcmc::MixtureSpec spec;
  spec.components.push_back(std::make_shared<PoissonProcessModel>(data, prior_rate, 0));
  spec.components.push_back(std::make_shared<BirthProcessModel>(data, prior_rate, 1));
  spec.slots = {{"lambda", 0}, {"mu", 1}};
  spec.dirichlet_p = std::move(dirichlet_p);
  spec.validate();
  return spec;
}

mcmc::MixtureSpec toy_spec(double log_ratio, std::vector<double> dirichlet_p) {
  if (!std::isfinite(log_ratio)) throw InvalidArgument("log ratio must be finite");
  mcmc::MixtureSpec spec;
  spec.components.push_back(std::make_shared<FixedDensityModel>("toy1", log_ratio));
  spec.components.push_back(std::make_shared<FixedDensityModel>("toy2", 0.0));
  spec.dirichlet_p = std::move(dirichlet_p);
  spec.validate();
  return spec;
}

// --- regression --------------------------------------------------------------------

void RegressionData::validate() const {
  const auto n = y.size();
  if (x.rows() != n || z.rows() != n) throw InvalidArgument("design rows differ from response length");
  if (x.cols() != z.cols() || x.cols() < 1) throw InvalidArgument("designs must share a column count");
  for (const auto* w : {&x, &z}) {
    for (Eigen::Index c = 1; c < w->cols(); ++c) {
      if (n == 0) break;
      const double scale = std::max(1.0, w->col(c).cwiseAbs().maxCoeff());
      if (std::abs(w->col(c).mean()) > 1e-9 * scale)
        throw InvalidArgument("covariate columns must be centred");
    }
  }
}

RegressionData RegressionData::from_covariates(const std::vector<double>& y,
                                               const std::vector<double>& x,
                                               const std::vector<double>& z) {
  const std::size_t n = y.size();
  if (x.size() != n || z.size() != n) throw InvalidArgument("covariate lengths differ");
  RegressionData d;
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
  auto design = [n](const std::vector<double>& c) {
    Eigen::MatrixXd w(n, 2);
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(n));
    const double mean = n ? v.mean() : 0.0;
    w.col(0).setOnes();
    w.col(1) = v.array() - mean;
    return w;
  };
  d.x = design(x);
  d.z = design(z);
  return d;
}

RegressionData RegressionData::from_csv(const std::filesystem::path& path, const std::string& y_col,
                                        const std::string& x_col, const std::string& z_col) {
  const auto t = csv::read(path);
  return from_covariates(t.values(y_col), t.values(x_col), t.values(z_col));
}

void RegressionPrior::validate(std::size_t dim) const {
  if (static_cast<std::size_t>(mu0.size()) != dim || v0.rows() != mu0.size() || v0.cols() != mu0.size())
    throw InvalidArgument("prior dimensions do not match the design");
  if (!(a0 > 0.0) || !(b0 > 0.0)) throw InvalidArgument("inverse-gamma prior needs a0, b0 > 0");
  Eigen::LLT<Eigen::MatrixXd> llt(v0);
  if (llt.info() != Eigen::Success) throw InvalidArgument("v0 must be positive definite");
}

RegressionPrior RegressionPrior::pines() {
  RegressionPrior p;
  p.mu0 = Eigen::Vector2d(3000.0, 185.0);
  p.v0 = Eigen::Vector2d(1e6, 1e4).asDiagonal();
  p.a0 = 3.0;
  p.b0 = 1.0 / (2.0 * 300.0 * 300.0);
  return p;
}

GaussianConditional regression_coefficient_conditional(const Eigen::MatrixXd& w,
                                                       const Eigen::VectorXd& y, double sigma2,
                                                       const RegressionPrior& prior) {
  const Eigen::MatrixXd v0_inv = prior.v0.inverse();
  const Eigen::MatrixXd precision = v0_inv + w.transpose() * w / sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("coefficient precision is not positive definite");
  GaussianConditional g;
  g.cov = llt.solve(Eigen::MatrixXd::Identity(precision.rows(), precision.cols()));
  g.mean = llt.solve(v0_inv * prior.mu0 + w.transpose() * y / sigma2);
  return g;
}

InverseGammaParams regression_variance_conditional(const Eigen::MatrixXd& w,
                                                   const Eigen::VectorXd& y,
                                                   const Eigen::VectorXd& coef,
                                                   const RegressionPrior& prior) {
  const double rss = (y - w * coef).squaredNorm();
  return {static_cast<double>(y.size()) / 2.0 + prior.a0, 1.0 / (1.0 / prior.b0 + 0.5 * rss)};
}

double regression_loglik(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& coef, double sigma2) {
  const double n = static_cast<double>(y.size());
  const double rss = (y - w * coef).squaredNorm();
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * rss / sigma2;
}

double sample_inverse_gamma(double a, double b, Rng& rng) { return 1.0 / rng.gamma(a, 1.0 / b); }

double inverse_gamma_log_pdf(double x, double a, double b) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return -1.0 / (b * x) - std::lgamma(a) - a * std::log(b) - (a + 1.0) * std::log(x);
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  Eigen::VectorXd e(mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = rng.normal(0.0, 1.0);
  return mean + llt.matrixL() * e;
}

RegressionModel::RegressionModel(std::string name, std::shared_ptr<const RegressionData> data,
                                 std::size_t which, RegressionPrior prior, std::size_t first_slot)
    : name_(std::move(name)), data_(std::move(data)), which_(which), prior_(std::move(prior)),
      first_(first_slot) {
  if (!data_) throw InvalidArgument("missing regression data");
  if (which_ > 1) throw InvalidArgument("regression model index must be 0 or 1");
  data_->validate();
  prior_.validate(static_cast<std::size_t>(data_->design(which_).cols()));
  v0_chol_.compute(prior_.v0);
}

std::vector<std::size_t> RegressionModel::slots() const {
  std::vector<std::size_t> s(dim() + 1);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = first_ + i;
  return s;
}

Eigen::VectorXd RegressionModel::coef(std::span<const double> theta) const {
  Eigen::VectorXd c(dim());
  for (std::size_t i = 0; i < dim(); ++i) c[i] = theta[first_ + i];
  return c;
}

double RegressionModel::log_augmented_density(std::span<const double> theta) const {
  return regression_loglik(data_->design(which_), data_->y, coef(theta), theta[first_ + dim()]);
}

void RegressionModel::update_params_current(std::span<double> theta, Rng& rng) {
  const auto& w = data_->design(which_);
  const double sigma2 = theta[first_ + dim()];
  const auto g = regression_coefficient_conditional(w, data_->y, sigma2, prior_);
  const Eigen::VectorXd c = sample_mvn(g.mean, g.cov, rng);
  for (std::size_t i = 0; i < dim(); ++i) theta[first_ + i] = c[i];
  const auto ig = regression_variance_conditional(w, data_->y, c, prior_);
  theta[first_ + dim()] = sample_inverse_gamma(ig.a, ig.b, rng);
}

double RegressionModel::sample_prior(std::size_t slot, Rng& rng) const {
  const std::size_t k = slot - first_;
  if (k == dim()) return sample_inverse_gamma(prior_.a0, prior_.b0, rng);
  // Marginal of a single coefficient; joint draws go through sample_prior_block.
  return rng.normal(prior_.mu0[k], std::sqrt(prior_.v0(k, k)));
}

void RegressionModel::sample_prior_block(std::span<double> theta,
                                         std::span<const std::size_t> slots, Rng& rng) const {
  if (slots.size() != dim() + 1) {
    ModelComponent::sample_prior_block(theta, slots, rng);
    return;
  }
  Eigen::VectorXd e(dim());
  for (std::size_t i = 0; i < dim(); ++i) e[i] = rng.normal(0.0, 1.0);
  const Eigen::VectorXd c = prior_.mu0 + v0_chol_.matrixL() * e;
  for (std::size_t i = 0; i < dim(); ++i) theta[first_ + i] = c[i];
  theta[first_ + dim()] = sample_inverse_gamma(prior_.a0, prior_.b0, rng);
}

double RegressionModel::initial_value(std::size_t slot, Rng&) const {
  const std::size_t k = slot - first_;
  if (k < dim()) return prior_.mu0[k];
  // Prior mode of the variance, 1 / ((a0 + 1) b0).
  return 1.0 / ((prior_.a0 + 1.0) * prior_.b0);
}

mcmc::MixtureSpec regression_spec(std::shared_ptr<const RegressionData> data,
                                  const RegressionPrior& prior, std::vector<double> dirichlet_p) {
  mcmc::MixtureSpec spec;
  const std::size_t d = static_cast<std::size_t>(prior.mu0.size());
  spec.components.push_back(std::make_shared<RegressionModel>("regress_x", data, 0, prior, 0));
  spec.components.push_back(std::make_shared<RegressionModel>("regress_z", data, 1, prior, d + 1));
  for (std::size_t m = 0; m < 2; ++m) {
    const std::string tag = m == 0 ? "x" : "z";
    for (std::size_t i = 0; i < d; ++i) spec.slots.push_back({"coef" + std::to_string(i) + "_" + tag, m});
    spec.slots.push_back({"sigma2_" + tag, m});
  }
  spec.dirichlet_p = std::move(dirichlet_p);
  spec.validate();
  return spec;
}

RegressionData simulate_regression_data(std::size_t n, double intercept, double slope, double sd,
                                        double z_noise, Rng& rng) {
  std::vector<double> x(n), z(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal(0.0, 1.0);
    z[i] = x[i] + rng.normal(0.0, z_noise);
  }
  double xbar = 0.0;
  for (double v : x) xbar += v;
  xbar /= std::max<double>(1.0, static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) y[i] = intercept + slope * (x[i] - xbar) + rng.normal(0.0, sd);
  return RegressionData::from_covariates(y, x, z);
}

// --- logistic ------------------------------------------------------------------------

void LogisticData::validate() const {
  if (static_cast<std::size_t>(covariates.rows()) != response.size())
    throw InvalidArgument("covariate rows differ from response length");
  for (int r : response)
    if (r != 0 && r != 1) throw InvalidArgument("responses must be 0 or 1");
  if (model_columns.empty()) throw InvalidArgument("no logistic models declared");
  std::size_t prev = 0;
  for (std::size_t c : model_columns) {
    if (c <= prev || c > static_cast<std::size_t>(covariates.cols()))
      throw InvalidArgument("model column counts must increase and fit the covariate matrix");
    prev = c;
  }
  for (Eigen::Index i = 0; i < covariates.rows(); ++i)
    if (covariates(i, 0) != 1.0) throw InvalidArgument("first covariate column must be ones");
}

LogisticData LogisticData::from_csv(const std::filesystem::path& path,
                                    const std::string& response_col,
                                    const std::vector<std::string>& covariate_cols,
                                    std::vector<std::size_t> model_columns) {
  const auto t = csv::read(path);
  LogisticData d;
  const auto resp = t.values(response_col);
  d.response.reserve(resp.size());
  for (double r : resp) d.response.push_back(static_cast<int>(std::lround(r)));
  d.covariates.resize(static_cast<Eigen::Index>(resp.size()),
                      static_cast<Eigen::Index>(covariate_cols.size() + 1));
  d.covariates.col(0).setOnes();
  for (std::size_t c = 0; c < covariate_cols.size(); ++c) {
    const auto v = t.values(covariate_cols[c]);
    for (std::size_t i = 0; i < v.size(); ++i) d.covariates(static_cast<Eigen::Index>(i), c + 1) = v[i];
  }
  d.model_columns = std::move(model_columns);
  d.validate();
  return d;
}

double logistic_loglik(const LogisticData& data, std::span<const double> coef, std::size_t columns) {
  double ll = 0.0;
  const auto& z = data.covariates;
  for (std::size_t i = 0; i < data.n(); ++i) {
    double eta = 0.0;
    for (std::size_t c = 0; c < columns; ++c) eta += coef[c] * z(static_cast<Eigen::Index>(i), c);
    ll += (data.response[i] ? eta : 0.0) - log1p_exp(eta);
  }
  return ll;
}

LogisticModel::LogisticModel(std::string name, std::shared_ptr<const LogisticData> data,
                             std::size_t columns, double prior_sd, std::vector<double> proposal_scales)
    : name_(std::move(name)), data_(std::move(data)), columns_(columns), prior_sd_(prior_sd),
      scales_(std::move(proposal_scales)) {
  if (!data_) throw InvalidArgument("missing logistic data");
  data_->validate();
  if (columns_ == 0 || columns_ > static_cast<std::size_t>(data_->covariates.cols()))
    throw InvalidArgument("logistic model uses more columns than available");
  if (!(prior_sd_ > 0.0)) throw InvalidArgument("prior sd must be positive");
  if (scales_.size() < columns_) throw InvalidArgument("one proposal scale per coefficient required");
  for (double s : scales_)
    if (!(s > 0.0)) throw InvalidArgument("proposal scales must be positive");
}

std::vector<std::size_t> LogisticModel::slots() const {
  std::vector<std::size_t> s(columns_);
  for (std::size_t i = 0; i < columns_; ++i) s[i] = i;
  return s;
}

double LogisticModel::log_augmented_density(std::span<const double> theta) const {
  return logistic_loglik(*data_, theta, columns_);
}

void LogisticModel::update_params_current(std::span<double> theta, Rng& rng) {
  const auto& z = data_->covariates;
  const auto n = static_cast<Eigen::Index>(data_->n());
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  for (std::size_t c = 0; c < columns_; ++c) eta += theta[c] * z.col(static_cast<Eigen::Index>(c));
  auto ll_of = [&](const Eigen::VectorXd& e) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += (data_->response[i] ? e[i] : 0.0) - log1p_exp(e[i]);
    return ll;
  };
  double ll = ll_of(eta);
  const double inv_var = 1.0 / (prior_sd_ * prior_sd_);
  for (std::size_t c = 0; c < columns_; ++c) {
    const double step = rng.normal(0.0, scales_[c]);
    const double cur = theta[c];
    const double prop = cur + step;
    const Eigen::VectorXd eta_prop = eta + step * z.col(static_cast<Eigen::Index>(c));
    const double ll_prop = ll_of(eta_prop);
    const double log_ratio = ll_prop - ll - 0.5 * (prop * prop - cur * cur) * inv_var;
    ++acc_.proposed;
    if (std::log(rng.uniform()) < log_ratio) {
      theta[c] = prop;
      eta = eta_prop;
      ll = ll_prop;
      ++acc_.accepted;
    }
  }
}

double LogisticModel::sample_prior(std::size_t, Rng& rng) const { return rng.normal(0.0, prior_sd_); }

mcmc::MixtureSpec logistic_spec(std::shared_ptr<const LogisticData> data, double prior_sd,
                                double proposal_scale, std::vector<double> dirichlet_p) {
  if (!data) throw InvalidArgument("missing logistic data");
  data->validate();
  mcmc::MixtureSpec spec;
  const std::size_t total = data->model_columns.back();
  const std::vector<double> scales(total, proposal_scale);
  for (std::size_t m = 0; m < data->models(); ++m)
    spec.components.push_back(std::make_shared<LogisticModel>(
        "logit" + std::to_string(m + 1), data, data->model_columns[m], prior_sd, scales));
  std::size_t owner = 0;
  for (std::size_t j = 0; j < total; ++j) {
    while (data->model_columns[owner] <= j) ++owner;
    spec.slots.push_back({"coef" + std::to_string(j), owner});
  }
  spec.dirichlet_p = std::move(dirichlet_p);
  spec.validate();
  return spec;
}

LogisticData simulate_logistic_data(std::size_t n, const std::vector<double>& coef,
                                    std::vector<std::size_t> model_columns, Rng& rng) {
  LogisticData d;
  const auto cols = static_cast<Eigen::Index>(coef.size());
  d.covariates.resize(static_cast<Eigen::Index>(n), cols);
  d.response.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.covariates(r, 0) = 1.0;
    double eta = coef[0];
    for (Eigen::Index c = 1; c < cols; ++c) {
      d.covariates(r, c) = rng.normal(0.0, 1.0);
      eta += coef[c] * d.covariates(r, c);
    }
    d.response[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
  }
  d.model_columns = std::move(model_columns);
  d.validate();
  return d;
}

}  // namespace mixbf::models
