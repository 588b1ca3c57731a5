#include "mixbf/oracle.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "mixbf/error.hpp"

namespace mixbf::oracle {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

OracleResult deterministic(double log_value, std::string method) {
  OracleResult r;
  r.log_value = log_value;
  r.value = std::exp(log_value);
  r.method = std::move(method);
  return r;
}

}  // namespace

double log_analytic_bf_ex3(std::size_t n, double horizon, double sum, double theta) {
  if (!(theta > 0.0) || !(horizon > 0.0)) throw InvalidArgument("T and theta must be positive");
  const double nd = static_cast<double>(n);
  if (sum < 0.0 || sum > nd * horizon) throw InvalidArgument("S must lie in [0, nT]");
  return (nd + 1.0) * (std::log((nd + 1.0) * horizon - sum + theta) - std::log(horizon + theta)) -
         std::lgamma(nd + 1.0);
}

double analytic_bf_ex3(std::size_t n, double horizon, double sum, double theta) {
  return std::exp(log_analytic_bf_ex3(n, horizon, sum, theta));
}

double gaussian_log_evidence(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                             const models::RegressionPrior& prior, double sigma2) {
  const auto n = y.size();
  if (n == 0) return 0.0;
  Eigen::MatrixXd cov = w * prior.v0 * w.transpose();
  cov.diagonal().array() += sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("marginal covariance is not positive definite");
  const Eigen::VectorXd r = y - w * prior.mu0;
  const Eigen::VectorXd s = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + s.squaredNorm());
}

OracleResult regression_marginal_quadrature(const Eigen::MatrixXd& w, const Eigen::VectorXd& y,
                                            const models::RegressionPrior& prior, double rel_tol) {
  prior.validate(static_cast<std::size_t>(w.cols()));
  if (w.rows() != y.size()) throw InvalidArgument("design rows differ from response length");
  const auto n = y.size();
  if (n == 0) return deterministic(0.0, "quadrature");

  // Evidence as a function of sigma2 through the eigenvalues of W v0 W^T.
  const Eigen::MatrixXd k = w * prior.v0 * w.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd rt = eig.eigenvectors().transpose() * (y - w * prior.mu0);
  const Eigen::VectorXd rt2 = rt.array().square();
  const double a0 = prior.a0, b0 = prior.b0;
  // log[IG(e^u) e^u] = c - a0 u - e^-u / b0 peaks at u_ig = -log(a0 b0). Written
  // relative to that peak so large a0 does not cancel catastrophically.
  const double u_ig = -std::log(a0 * b0);
  double ig_peak = -std::lgamma(a0) + a0 * std::log(a0) - a0;
  if (a0 > 10.0) {
    // Stirling remainder; the direct form loses digits for large a0.
    const double r = 1.0 / a0, r2 = r * r;
    ig_peak = 0.5 * std::log(a0) - 0.5 * kLog2Pi -
              r * (1.0 / 12 - r2 * (1.0 / 360 - r2 * (1.0 / 1260 - r2 / 1680)));
  }

  // g(u) = log[N(y | sigma2) IG(sigma2) sigma2] at sigma2 = exp(u).
  auto g = [&](double u) {
    const double s2 = std::exp(u);
    const Eigen::ArrayXd d = lam.array() + s2;
    const double ll = -0.5 * (static_cast<double>(n) * kLog2Pi + d.log().sum() + (rt2.array() / d).sum());
    const double delta = u - u_ig;
    return ll + ig_peak - a0 * (std::expm1(-delta) + delta);
  };

  const double u0 = std::log((1.0 / b0 + 0.5 * rt2.sum()) / (a0 + 0.5 * static_cast<double>(n) + 1.0));
  const auto [umax, neg_gmax] = boost::math::tools::brent_find_minima(
      [&](double u) { return -g(u); }, u0 - 60.0, u0 + 60.0, std::numeric_limits<double>::digits / 2);
  const double gmax = -neg_gmax;

  // Curvature scale for the change of variable u = umax + s t.
  double s = 1.0;
  for (int pass = 0; pass < 4; ++pass) {
    const double h = s * 1e-2;
    const double d2 = (g(umax + h) - 2.0 * gmax + g(umax - h)) / (h * h);
    if (!(d2 < 0.0)) break;
    s = 1.0 / std::sqrt(-d2);
  }

  auto integrand = [&](double t) {
    const double v = g(umax + s * t) - gmax;
    return v > -745.0 ? std::exp(v) : 0.0;  // also maps the s2 -> 0 limit (nan) to 0
  };
  double err = 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -inf, inf, 15, rel_tol * 1e-2, &err);
  if (!(integral > 0.0) || err > rel_tol * integral)
    throw NumericalError("quadrature did not converge: relative error " + std::to_string(err / integral));
  auto r = deterministic(gmax + std::log(s) + std::log(integral), "quadrature");
  return r;
}

double logistic_log_joint(const models::LogisticData& data, std::size_t columns, double prior_sd,
                          const Eigen::VectorXd& theta) {
  const std::span<const double> coef(theta.data(), static_cast<std::size_t>(theta.size()));
  double lp = models::logistic_loglik(data, coef, columns);
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    lp += -0.5 * theta[j] * theta[j] / (prior_sd * prior_sd) - std::log(prior_sd) - 0.5 * kLog2Pi;
  return lp;
}

LaplaceFit laplace_fit(const std::function<double(const Eigen::VectorXd&)>& log_target,
                       Eigen::VectorXd x, int max_iterations) {
  const auto d = x.size();
  auto step_of = [](double v) { return 1e-4 * (1.0 + std::abs(v)); };
  auto derivatives = [&](const Eigen::VectorXd& at, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
    const double f0 = log_target(at);
    grad.resize(d);
    hess.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double hi = step_of(at[i]);
      Eigen::VectorXd p = at, m = at;
      p[i] += hi;
      m[i] -= hi;
      const double fp = log_target(p), fm = log_target(m);
      grad[i] = (fp - fm) / (2.0 * hi);
      hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
      for (Eigen::Index j = 0; j < i; ++j) {
        const double hj = step_of(at[j]);
        Eigen::VectorXd pp = at, pm = at, mp = at, mm = at;
        pp[i] += hi, pp[j] += hj;
        pm[i] += hi, pm[j] -= hj;
        mp[i] -= hi, mp[j] += hj;
        mm[i] -= hi, mm[j] -= hj;
        hess(i, j) = hess(j, i) =
            (log_target(pp) - log_target(pm) - log_target(mp) + log_target(mm)) / (4.0 * hi * hj);
      }
    }
    return f0;
  };

  LaplaceFit fit;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double f = derivatives(x, grad, hess);
  if (!std::isfinite(f)) throw NumericalError("log target is not finite at the starting point");
  bool converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    fit.iterations = it + 1;
    Eigen::LLT<Eigen::MatrixXd> llt(-hess);
    Eigen::VectorXd dir = llt.info() == Eigen::Success ? Eigen::VectorXd(llt.solve(grad)) : grad;
    double t = 1.0;
    Eigen::VectorXd next = x + dir;
    double fn = log_target(next);
    while (!(fn >= f - 1e-12 * std::abs(f)) && t > 1e-10) {
      t *= 0.5;
      next = x + t * dir;
      fn = log_target(next);
    }
    if (t <= 1e-10) break;
    const double move = (next - x).cwiseAbs().maxCoeff();
    x = next;
    f = derivatives(x, grad, hess);
    if (move < 1e-9 * (1.0 + x.cwiseAbs().maxCoeff()) || grad.cwiseAbs().maxCoeff() < 1e-8) {
      converged = true;
      break;
    }
  }
  if (!converged && grad.cwiseAbs().maxCoeff() > 1e-5)
    throw NumericalError("Laplace optimiser did not converge");
  fit.mode = x;
  fit.neg_hessian = -hess;
  Eigen::LLT<Eigen::MatrixXd> llt(fit.neg_hessian);
  if (llt.info() != Eigen::Success) throw NumericalError("degenerate curvature at the mode");
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  fit.log_target_at_mode = f;
  fit.log_marginal = f + 0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * logdet;
  return fit;
}

OracleResult laplace_marginal(const models::LogisticData& data, std::size_t columns,
                              double prior_sd) {
  data.validate();
  const auto fit = laplace_fit(
      [&](const Eigen::VectorXd& th) { return logistic_log_joint(data, columns, prior_sd, th); },
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns)));
  return deterministic(fit.log_marginal, "laplace");
}

OracleResult logistic_marginal_is(const models::LogisticData& data, std::size_t columns,
                                  double prior_sd, std::size_t n_samples, Rng& rng,
                                  double inflation) {
  if (!(inflation >= 1.0)) throw InvalidArgument("proposal inflation must be at least 1");
  if (n_samples < 10000) throw InvalidArgument("importance sampling needs at least 10^4 samples");
  data.validate();
  auto target = [&](const Eigen::VectorXd& th) { return logistic_log_joint(data, columns, prior_sd, th); };
  const auto fit = laplace_fit(target, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns)));
  const Eigen::MatrixXd cov = fit.neg_hessian.inverse() * (inflation * inflation);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("degenerate curvature at the mode");
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_norm = -0.5 * static_cast<double>(columns) * kLog2Pi -
                          l.diagonal().array().log().sum();

  // Weights relative to the target at the mode to avoid underflow.
  std::vector<double> lw(n_samples);
  Eigen::VectorXd e(static_cast<Eigen::Index>(columns));
  for (auto& v : lw) {
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = rng.normal(0.0, 1.0);
    const Eigen::VectorXd th = fit.mode + l * e;
    const double log_q = log_norm - 0.5 * e.squaredNorm();
    v = target(th) - log_q - fit.log_target_at_mode;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : lw) mx = std::max(mx, v);
  double mean = 0.0;
  for (double v : lw) mean += std::exp(v - mx);
  mean /= static_cast<double>(n_samples);
  double ss = 0.0;
  for (double v : lw) ss += (std::exp(v - mx) - mean) * (std::exp(v - mx) - mean);
  const double se = std::sqrt(ss / static_cast<double>(n_samples - 1) / static_cast<double>(n_samples));

  OracleResult r;
  r.log_value = fit.log_target_at_mode + mx + std::log(mean);
  r.value = std::exp(r.log_value);
  r.log_standard_error = se / mean;
  r.standard_error = r.value * r.log_standard_error;
  r.method = "importance";
  return r;
}

}  // namespace mixbf::oracle
