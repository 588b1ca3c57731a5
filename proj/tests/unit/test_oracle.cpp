#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mixbf/error.hpp"
#include "mixbf/oracle.hpp"

using namespace mixbf;
using namespace mixbf::oracle;

namespace {

models::LogisticData intercept_only(int successes, int n) {
  models::LogisticData d;
  d.response.assign(n, 0);
  for (int i = 0; i < successes; ++i) d.response[i] = 1;
  d.covariates = Eigen::MatrixXd::Ones(n, 1);
  d.model_columns = {1};
  return d;
}

// log of the integral of exp(f) over a dense uniform grid, trapezoid rule.
template <class F>
double log_trapezoid(F f, double lo, double hi, std::size_t steps) {
  const double h = (hi - lo) / static_cast<double>(steps);
  std::vector<double> v(steps + 1);
  double mx = -HUGE_VAL;
  for (std::size_t i = 0; i <= steps; ++i) mx = std::max(mx, v[i] = f(lo + h * i));
  double s = 0.0;
  for (std::size_t i = 0; i <= steps; ++i) s += (i == 0 || i == steps ? 0.5 : 1.0) * std::exp(v[i] - mx);
  return mx + std::log(s * h);
}

double log_intercept_marginal_quadrature(const models::LogisticData& d, double sd) {
  return log_trapezoid(
      [&](double t) {
        Eigen::VectorXd th(1);
        th[0] = t;
        return logistic_log_joint(d, 1, sd, th);
      },
      -40.0, 40.0, 400000);
}

}  // namespace

TEST_CASE("ex3 closed form") {
  CHECK(analytic_bf_ex3(5, 10, 36, 1) == doctest::Approx(1.148).epsilon(5e-4));
  CHECK(analytic_bf_ex3(5, 10, 36, 0.01) == doctest::Approx(1.587).epsilon(5e-4));
  CHECK(analytic_bf_ex3(5, 10, 25, 1) == doctest::Approx(10.239).epsilon(1e-4));
  CHECK(analytic_bf_ex3(10, 20, 150, 1) == doctest::Approx(0.181).epsilon(3e-3));
  CHECK(analytic_bf_ex3(0, 1, 0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  // Direct evaluation for a small case.
  CHECK(analytic_bf_ex3(2, 3, 4, 0.5) ==
        doctest::Approx(std::pow(3 * 3 - 4 + 0.5, 3) / (std::pow(3.5, 3) * 2)).epsilon(1e-13));
  // Large n stays finite in log space.
  CHECK(std::isfinite(log_analytic_bf_ex3(2000, 100, 1e5, 1)));
  CHECK_THROWS_AS(analytic_bf_ex3(2, 1, 3, 1), InvalidArgument);
  CHECK_THROWS_AS(analytic_bf_ex3(2, 1, 1, 0), InvalidArgument);
}

TEST_CASE("ex3 Bayes factor decreases in S") {
  for (std::size_t n : {1u, 5u, 10u}) {
    for (double theta : {0.01, 1.0}) {
      double prev = HUGE_VAL;
      for (double s = 0.0; s <= n * 10.0; s += 0.5) {
        const double b = analytic_bf_ex3(n, 10.0, s, theta);
        CHECK(b < prev);
        prev = b;
      }
    }
  }
}

TEST_CASE("regression quadrature: empty data and collapsed variance prior") {
  const auto prior = models::RegressionPrior::pines();
  const Eigen::MatrixXd w0(0, 2);
  const Eigen::VectorXd y0(0);
  const auto r0 = regression_marginal_quadrature(w0, y0, prior);
  CHECK(r0.value == 1.0);

  Rng rng(1);
  const auto d = models::simulate_regression_data(6, 2.0, 1.0, 0.7, 0.3, rng);
  models::RegressionPrior p;
  p.mu0 = Eigen::Vector2d(0.0, 0.0);
  p.v0 = Eigen::Vector2d(4.0, 2.0).asDiagonal();
  const double s2 = 0.5;
  p.a0 = 1e12;
  p.b0 = 1.0 / ((p.a0 - 1.0) * s2);  // inverse-gamma mean exactly s2
  const auto r = regression_marginal_quadrature(d.x, d.y, p);
  CHECK(std::abs(r.log_value - gaussian_log_evidence(d.x, d.y, p, s2)) < 1e-8);
}

TEST_CASE("regression quadrature matches a dense grid") {
  Rng rng(2);
  const auto d = models::simulate_regression_data(42, 3000.0, 180.0, 300.0, 0.5, rng);
  auto steep = models::RegressionPrior::pines();
  steep.a0 = 50.0;
  steep.b0 = 1.0 / (49.0 * 250.0 * 250.0);
  for (const auto& prior : {models::RegressionPrior::pines(), steep})
  for (const auto* w : {&d.x, &d.z}) {
    const auto r = regression_marginal_quadrature(*w, d.y, prior);
    const double grid = log_trapezoid(
        [&](double u) {
          const double s2 = std::exp(u);
          return gaussian_log_evidence(*w, d.y, prior, s2) +
                 models::inverse_gamma_log_pdf(s2, prior.a0, prior.b0) + u;
        },
        std::log(1e2), std::log(1e8), 20000);
    CHECK(std::abs(r.log_value - grid) < 1e-8);
  }
}

TEST_CASE("regression Bayes factor is invariant to the response scale") {
  Rng rng(3);
  const auto d = models::simulate_regression_data(30, 10.0, 2.0, 1.5, 0.6, rng);
  models::RegressionPrior p;
  p.mu0 = Eigen::Vector2d(8.0, 1.0);
  p.v0 = Eigen::Vector2d(25.0, 4.0).asDiagonal();
  p.a0 = 3.0;
  p.b0 = 0.5;
  const double c = 37.0;
  models::RegressionPrior q = p;
  q.mu0 *= c;
  q.v0 *= c * c;
  q.b0 /= c * c;
  const Eigen::VectorXd yc = d.y * c;
  const double lb = regression_marginal_quadrature(d.x, d.y, p).log_value -
                    regression_marginal_quadrature(d.z, d.y, p).log_value;
  const double lbc = regression_marginal_quadrature(d.x, yc, q).log_value -
                     regression_marginal_quadrature(d.z, yc, q).log_value;
  CHECK(std::abs(std::exp(lb - lbc) - 1.0) < 1e-8);
  // Each marginal picks up the Jacobian c^-n.
  CHECK(regression_marginal_quadrature(d.x, yc, q).log_value ==
        doctest::Approx(regression_marginal_quadrature(d.x, d.y, p).log_value - 30 * std::log(c))
            .epsilon(1e-10));
}

TEST_CASE("Laplace is exact for a Gaussian target") {
  Eigen::Vector3d m(1.0, -2.0, 0.5);
  Eigen::Matrix3d c;
  c << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
  const Eigen::Matrix3d ci = c.inverse();
  const double k = -7.25;
  auto target = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd r = x - m;
    return k - 0.5 * r.dot(ci * r) - 0.5 * std::log(c.determinant()) - 1.5 * std::log(2 * std::numbers::pi);
  };
  const auto fit = laplace_fit(target, Eigen::VectorXd::Zero(3));
  CHECK((fit.mode - m).norm() < 1e-6);
  CHECK(std::abs(fit.log_marginal - k) < 1e-6);
}

TEST_CASE("Laplace failure modes") {
  auto flat = [](const Eigen::VectorXd& x) { return x[0]; };
  CHECK_THROWS_AS(laplace_fit(flat, Eigen::VectorXd::Zero(1), 20), NumericalError);
  auto saddle = [](const Eigen::VectorXd& x) { return x[0] * x[0] - x[1] * x[1]; };
  CHECK_THROWS_AS(laplace_fit(saddle, Eigen::VectorXd::Zero(2), 20), NumericalError);
}

TEST_CASE("intercept-only logistic marginals against quadrature") {
  const auto d = intercept_only(10, 20);
  const double exact = log_intercept_marginal_quadrature(d, 10.0);
  const auto lap = laplace_marginal(d, 1, 10.0);
  CHECK(std::abs(std::exp(lap.log_value - exact) - 1.0) < 0.02);

  Rng rng(4);
  const auto d2 = intercept_only(7, 30);
  const auto is = logistic_marginal_is(d2, 1, 10.0, 40000, rng);
  const double exact2 = log_intercept_marginal_quadrature(d2, 10.0);
  CHECK(std::abs(is.log_value - exact2) < 3 * is.log_standard_error);
}

TEST_CASE("success and failure single observations have equal marginals") {
  const auto s = intercept_only(1, 1);
  const auto f = intercept_only(0, 1);
  Rng r1(5), r2(6);
  const auto ms = logistic_marginal_is(s, 1, 10.0, 40000, r1);
  const auto mf = logistic_marginal_is(f, 1, 10.0, 40000, r2);
  CHECK(std::abs(ms.log_value - mf.log_value) <
        3 * std::hypot(ms.log_standard_error, mf.log_standard_error));
  // Both equal 1/2 exactly by the sign symmetry of the prior.
  CHECK(std::abs(ms.value - 0.5) < 3 * ms.standard_error);
  CHECK(std::abs(mf.value - 0.5) < 3 * mf.standard_error);
}

TEST_CASE("importance sampling and Laplace agree on moderate data") {
  Rng rng(6);
  // Laplace error is O(1/n), well below the sampling error at this size.
  const auto d = models::simulate_logistic_data(4000, {0.2, 0.8, -0.5}, {3}, rng);
  const auto lap = laplace_marginal(d, 3, 10.0);
  const auto is = logistic_marginal_is(d, 3, 10.0, 20000, rng);
  CHECK(std::abs(lap.log_value - is.log_value) < 3 * is.log_standard_error);
}

TEST_CASE("importance-sampling error shrinks like n^-1/2") {
  Rng data_rng(7);
  const auto d = models::simulate_logistic_data(100, {0.0, 1.0}, {2}, data_rng);
  std::vector<double> lx, ly;
  for (std::size_t n : {10000u, 40000u, 160000u, 640000u}) {
    Rng rng(8 + n);
    const auto r = logistic_marginal_is(d, 2, 10.0, n, rng);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(r.log_standard_error));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 4; ++i) mx += lx[i] / 4, my += ly[i] / 4;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < 4; ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  const double slope = sxy / sxx;
  CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
  CHECK_THROWS_AS(logistic_marginal_is(d, 2, 10.0, 100, data_rng), InvalidArgument);
}
