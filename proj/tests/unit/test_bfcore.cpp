#include <boost/rational.hpp>
#include <cmath>
#include <random>

#include "doctest.h"
#include "mixbf/bfcore.hpp"
#include "test_support.hpp"

using namespace mixbf;
using namespace mixbf::bfcore;

namespace {

using Q = boost::rational<long long>;

BasicPriorMoments<Q> a2_moments_exact() {
  const std::vector<Q> p1{Q(1), Q(1), Q(1)};
  const std::vector<Q> p2{Q(1), Q(2), Q(1)};
  const std::vector<BasicPriorMoments<Q>> comps{dirichlet_moments(p1), dirichlet_moments(p2)};
  const std::vector<Q> w{Q(1, 2), Q(1, 2)};
  return mixture_moments<Q>(w, comps);
}

PriorMoments a2_moments() {
  const std::vector<PriorMoments> comps{dirichlet_moments(std::vector<double>{1, 1, 1}),
                                        dirichlet_moments(std::vector<double>{1, 2, 1})};
  const std::vector<double> w{0.5, 0.5};
  return mixture_moments<double>(w, comps);
}

}  // namespace

TEST_CASE("dirichlet moments match the closed forms") {
  auto u = dirichlet_moments(std::vector<double>{1, 1});
  CHECK(u.first[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(u.second(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(u.second(0, 1) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  REQUIRE(u.dirichlet_params.has_value());

  auto b = dirichlet_moments(std::vector<double>{1, 50});
  CHECK(b.first[0] == doctest::Approx(1.0 / 51).epsilon(1e-15));
  CHECK(b.second(0, 0) == doctest::Approx(2.0 / (51 * 52)).epsilon(1e-15));

  auto s = dirichlet_moments(std::vector<double>{1, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.first[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(s.second(i, j) == doctest::Approx(i == j ? 1.0 / 6 : 1.0 / 12).epsilon(1e-15));
  }
  CHECK_NOTHROW(validate(s));

  CHECK_THROWS_AS(dirichlet_moments(std::vector<double>{1, 0}), InvalidArgument);
  CHECK_THROWS_AS(dirichlet_moments(std::vector<double>{1, -2, 3}), InvalidArgument);
}

TEST_CASE("mixed dirichlet moments are exact rationals over 120") {
  const auto m = a2_moments_exact();
  CHECK(m.first[0] == Q(7, 24));
  CHECK(m.first[1] == Q(10, 24));
  CHECK(m.first[2] == Q(7, 24));
  CHECK(m.second(0, 0) == Q(2, 15));
  CHECK(m.second(0, 1) == Q(11, 120));
  CHECK(m.second(0, 2) == Q(1, 15));
  CHECK(m.second(1, 1) == Q(28, 120));
  CHECK_FALSE(m.dirichlet_params.has_value());
  CHECK_NOTHROW(validate(m));

  // The rounded matrix (1/20)[[2,2,1],[2,6,2],[1,2,2]] breaks the row-sum identity.
  BasicPriorMoments<Q> rounded = m;
  rounded.second = SquareMatrix<Q>{{Q(2, 20), Q(2, 20), Q(1, 20)},
                                   {Q(2, 20), Q(6, 20), Q(2, 20)},
                                   {Q(1, 20), Q(2, 20), Q(2, 20)}};
  CHECK_THROWS_AS(validate(rounded), InvalidArgument);
}

TEST_CASE("exact A2 pipeline pins the Bayes factors 2 and 3") {
  const auto moments = a2_moments_exact();
  const std::vector<Q> m{Q(1), Q(2), Q(3)};
  const auto post = forward_posterior_means(moments, m);
  CHECK(post.values[0] == Q(31, 120));
  CHECK(post.values[1] == Q(50, 120));
  CHECK(post.values[2] == Q(39, 120));

  const auto a = build_A(moments, post);
  CHECK(a(1, 0) == Q(86, 2880));
  CHECK(a(0, 1) == Q(46, 2880));
  CHECK(a(1, 0) / a(0, 1) == Q(86, 46));
  CHECK(a(1, 1) == Q(-172, 2880));
  CHECK(a(2, 2) == Q(-111, 2880));

  const auto bf = solve_general(a, 0);
  CHECK(bf.values[0] == Q(1));
  CHECK(bf.values[1] == Q(2));
  CHECK(bf.values[2] == Q(3));
}

TEST_CASE("A2 vector in double precision") {
  const auto moments = a2_moments();
  CHECK(moments.first[0] == doctest::Approx(7.0 / 24).epsilon(1e-14));
  CHECK(moments.second(0, 0) == doctest::Approx(2.0 / 15).epsilon(1e-14));
  const auto post = forward_posterior_means(moments, std::vector<double>{1, 2, 3});
  CHECK(std::abs(post.values[0] - 31.0 / 120) < 1e-12);
  CHECK(std::abs(post.values[1] - 50.0 / 120) < 1e-12);
  CHECK(std::abs(post.values[2] - 39.0 / 120) < 1e-12);
  const auto a = build_A(moments, post);
  CHECK(std::abs(a(1, 0) / a(0, 1) - 86.0 / 46) < 1e-12);
  const auto bf = solve_general(a, 0);
  CHECK(std::abs(bf.values[1] - 2.0) < 1e-12);
  CHECK(std::abs(bf.values[2] - 3.0) < 1e-12);

  // Lemma 1(b) does not apply to a mixed Dirichlet prior.
  CHECK_THROWS_AS(solve_dirichlet_fast(moments, post, 0), InvalidArgument);
}

TEST_CASE("forward map examples") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  const auto post = forward_posterior_means(u, std::vector<double>{50, 1});
  CHECK(post.values[0] == doctest::Approx(101.0 / 153).epsilon(1e-14));

  const auto moments = a2_moments();
  const auto flat = forward_posterior_means(moments, std::vector<double>{4.2, 4.2, 4.2});
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(flat.values[i] == doctest::Approx(moments.first[i]).epsilon(1e-14));

  CHECK_THROWS_AS(forward_posterior_means(u, std::vector<double>{1, 0}), InvalidArgument);
  CHECK_THROWS_AS(forward_posterior_means(u, std::vector<double>{1, -3}), InvalidArgument);
  CHECK_THROWS_AS(forward_posterior_means(u, std::vector<double>{1, INFINITY}), InvalidArgument);
  CHECK_THROWS_AS(forward_posterior_means(u, std::vector<double>{1, 2, 3}), InvalidArgument);
}

TEST_CASE("build_A examples and the column-sum identity") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  const auto a = build_A(u, PosteriorMeans{{0.6, 0.4}});
  CHECK(a(0, 1) == doctest::Approx(2.0 / 15).epsilon(1e-14));
  CHECK(a(1, 0) == doctest::Approx(1.0 / 30).epsilon(1e-14));

  // Point-mass prior: A vanishes and the system cannot be solved.
  PriorMoments point;
  point.first = {0.3, 0.7};
  point.second = SquareMatrix<double>{{0.09, 0.21}, {0.21, 0.49}};
  const auto zero = build_A(point, PosteriorMeans{{0.3, 0.7}});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(zero(i, j)) < 1e-15);
  CHECK_THROWS_AS(solve_general(zero, 1), SingularSystem);

  CHECK_THROWS_AS(build_A(u, PosteriorMeans{{0.2, 0.3, 0.5}}), InvalidArgument);

  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 100; ++rep) {
    const auto moments = test_support::random_moments(gen, 2 + rep % 4);
    const auto post = test_support::random_simplex(gen, moments.size());
    const auto am = build_A(moments, PosteriorMeans{post});
    for (std::size_t j = 0; j < moments.size(); ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < moments.size(); ++i) col += am(i, j);
      CHECK(std::abs(col) < 1e-12);
    }
  }
}

TEST_CASE("solve_general small cases") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  const auto bf = solve_general(build_A(u, PosteriorMeans{{0.5, 0.5}}), 1);
  CHECK(bf.reference == 1);
  CHECK(bf.values[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(bf.values[1] == 1.0);
  CHECK_THROWS_AS(solve_general(build_A(u, PosteriorMeans{{0.5, 0.5}}), 2), InvalidArgument);

  try {
    SquareMatrix<double> a{{0, 0, 0}, {0, 0, 1e-20}, {0, 1, 0}};
    solve_general(a, 0);
    FAIL("expected a singular system");
  } catch (const SingularSystem& e) {
    CHECK(e.pivot_index() == 1);
  }
}

TEST_CASE("dirichlet fast path examples") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  const auto bf = solve_dirichlet_fast(u, PosteriorMeans{{0.6, 0.4}}, 1);
  CHECK(bf.values[0] == doctest::Approx(4.0).epsilon(1e-13));

  const auto s = dirichlet_moments(std::vector<double>{1, 1, 1});
  const auto sym = solve_dirichlet_fast(s, PosteriorMeans{{1.0 / 3, 1.0 / 3, 1.0 / 3}}, 0);
  for (double v : sym.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));

  CHECK_THROWS_AS(solve_dirichlet_fast(u, PosteriorMeans{{0.7, 0.3}}, 1), BoundsViolation);
  CHECK_THROWS_AS(solve_dirichlet_fast(u, PosteriorMeans{{2.0 / 3, 1.0 / 3}}, 1),
                  BoundsViolation);
}

TEST_CASE("two-model closed form") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  CHECK(two_model_bf(u, 0.5).value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(two_model_bf(u, 0.6).value == doctest::Approx(4.0).epsilon(1e-13));
  for (double e : {0.35, 0.45, 0.55, 0.65})
    CHECK(two_model_bf(u, e).value == doctest::Approx((3 * e - 1) / (2 - 3 * e)).epsilon(1e-13));

  CHECK(two_model_bf(u, 2.0 / 3).kind == TwoModelBayesFactor::Kind::infinite);
  CHECK(two_model_bf(u, 1.0 / 3).kind == TwoModelBayesFactor::Kind::zero);
  CHECK_FALSE(two_model_bf(u, 2.0 / 3).is_finite());
  CHECK_THROWS_AS(two_model_bf(u, 0.9), BoundsViolation);
  CHECK_THROWS_AS(two_model_bf(u, 0.2), BoundsViolation);

  // Occupancy 1/2 under Beta(1,50) gives the Rao-Blackwell mean (1+0.5)/52 and B = 50.
  const auto b = dirichlet_moments(std::vector<double>{1, 50});
  CHECK(two_model_bf(b, 1.5 / 52).value == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("posterior mean bounds") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  auto b = posterior_mean_bounds(u, 0);
  CHECK(*b.lower == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(b.upper == doctest::Approx(2.0 / 3).epsilon(1e-15));

  b = posterior_mean_bounds(dirichlet_moments(std::vector<double>{1, 50}), 0);
  CHECK(*b.lower == doctest::Approx(1.0 / 52).epsilon(1e-15));
  CHECK(b.upper == doctest::Approx(2.0 / 52).epsilon(1e-15));

  b = posterior_mean_bounds(dirichlet_moments(std::vector<double>{1, 1, 1}), 1);
  CHECK(*b.lower == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b.upper == doctest::Approx(0.5).epsilon(1e-15));

  // Two-model non-Dirichlet prior: 0.5 Beta(1,1) + 0.5 Beta(2,2).
  const std::vector<PriorMoments> comps{dirichlet_moments(std::vector<double>{1, 1}),
                                        dirichlet_moments(std::vector<double>{2, 2})};
  const auto mix = mixture_moments<double>(std::vector<double>{0.5, 0.5}, comps);
  b = posterior_mean_bounds(mix, 0);
  REQUIRE(b.lower.has_value());
  const double e1 = mix.first[0], e11 = mix.second(0, 0);
  CHECK(*b.lower == doctest::Approx((e1 - e11) / (1 - e1)));
  CHECK(b.upper == doctest::Approx(e11 / e1));

  // n = 3 mixed prior: only the upper bound is prior-determined.
  b = posterior_mean_bounds(a2_moments(), 1);
  CHECK_FALSE(b.lower.has_value());
  CHECK(b.upper == doctest::Approx((28.0 / 120) / (10.0 / 24)));
  CHECK_THROWS_AS(posterior_mean_bounds(u, 5), InvalidArgument);
}

TEST_CASE("occupancy cross-check") {
  const auto u = dirichlet_moments(std::vector<double>{1, 1});
  auto b = occupancy_bf(std::vector<double>{0.8, 0.2}, u);
  CHECK(b(0, 1) == doctest::Approx(4.0).epsilon(1e-14));
  b = occupancy_bf(std::vector<double>{0.5, 0.5}, dirichlet_moments(std::vector<double>{1, 50}));
  CHECK(b(0, 1) == doctest::Approx(50.0).epsilon(1e-14));
  b = occupancy_bf(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3},
                   dirichlet_moments(std::vector<double>{1, 1, 1}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(b(i, j) == doctest::Approx(1.0));
  CHECK_THROWS_AS(occupancy_bf(std::vector<double>{1.0, 0.0}, u), DegenerateOccupancy);
}

TEST_CASE("mixture_moments degenerate and error cases") {
  const auto s = dirichlet_moments(std::vector<double>{2, 3, 4});
  const std::vector<PriorMoments> one{s};
  const auto same = mixture_moments<double>(std::vector<double>{1.0}, one);
  CHECK(same.first == s.first);
  CHECK(same.second == s.second);

  const std::vector<PriorMoments> bad{s, dirichlet_moments(std::vector<double>{1, 1})};
  CHECK_THROWS_AS(mixture_moments<double>(std::vector<double>{0.5, 0.5}, bad), InvalidArgument);
  CHECK_THROWS_AS(mixture_moments<double>(std::vector<double>{0.5}, bad), InvalidArgument);
}

// The forward map rounds E[a_i|x]; when m spans six decades the A-matrix
// entries are differences of nearly equal numbers, so double precision alone
// loses about 1e-8 relative. The property is therefore checked through the
// same templated code in extended precision.
TEST_CASE("round trip, fast-path equivalence and transitivity on random inputs") {
  using L = long double;
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> logm(std::log(1e-3), std::log(1e3));
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rep % 4;
    const bool mixed = rep % 2 == 1;
    const auto moments = test_support::random_moments_t<L>(gen, n, mixed);
    std::vector<L> m(n);
    for (auto& v : m) v = std::exp(static_cast<L>(logm(gen)));
    const auto post = forward_posterior_means(moments, m);
    const auto a = build_A(moments, post);
    std::vector<BasicBayesFactors<L>> by_ref;
    for (std::size_t k = 0; k < n; ++k) {
      const auto bf = solve_general(a, k);
      for (std::size_t j = 0; j < n; ++j)
        CHECK(test_support::rel_err(bf.values[j], m[j] / m[k]) < 1e-10);
      if (moments.dirichlet_params) {
        const auto fast = solve_dirichlet_fast(moments, post, k);
        for (std::size_t j = 0; j < n; ++j)
          CHECK(test_support::rel_err(fast.values[j], bf.values[j]) < 1e-10);
      }
      by_ref.push_back(bf);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          CHECK(test_support::rel_err(by_ref[k].values[i],
                                      by_ref[j].values[i] * by_ref[k].values[j]) < 1e-10);
  }
}

TEST_CASE("two-model closed form agrees with the general solver") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> logm(std::log(1e-2), std::log(1e2));
  for (int rep = 0; rep < 200; ++rep) {
    const auto moments = rep % 2 ? test_support::random_moments(gen, 2)
                                 : test_support::random_dirichlet_moments(gen, 2);
    const std::vector<double> m{std::exp(logm(gen)), std::exp(logm(gen))};
    const auto post = forward_posterior_means(moments, m);
    const auto general = solve_general(build_A(moments, post), 1);
    const auto closed = two_model_bf(moments, post.values[0]);
    REQUIRE(closed.is_finite());
    CHECK(test_support::rel_err(closed.value, general.values[0]) < 1e-10);
  }
}

TEST_CASE("double-precision round trip on moderate likelihood ratios") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> logm(std::log(0.1), std::log(10.0));
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rep % 4;
    const auto moments = rep % 2 ? test_support::random_moments(gen, n)
                                 : test_support::random_dirichlet_moments(gen, n);
    std::vector<double> m(n);
    for (auto& v : m) v = std::exp(logm(gen));
    const auto bf = solve_general(build_A(moments, forward_posterior_means(moments, m)), 0);
    for (std::size_t j = 0; j < n; ++j)
      CHECK(test_support::rel_err(bf.values[j], m[j] / m[0]) < 1e-10);
  }
}

TEST_CASE("posterior means approach the dirichlet bounds monotonically") {
  const auto moments = dirichlet_moments(std::vector<double>{1.5, 0.7, 2.0});
  const auto b = posterior_mean_bounds(moments, 1);
  double prev = -1.0;
  for (int e = -8; e <= 8; ++e) {
    const std::vector<double> m{1.0, std::pow(10.0, e), 2.0};
    const double v = forward_posterior_means(moments, m).values[1];
    CHECK(v > prev);
    CHECK(b.strictly_contains(v));
    prev = v;
  }
  const auto low = forward_posterior_means(moments, std::vector<double>{1.0, 1e-12, 2.0});
  const auto high = forward_posterior_means(moments, std::vector<double>{1.0, 1e12, 2.0});
  CHECK(low.values[1] == doctest::Approx(*b.lower).epsilon(1e-9));
  CHECK(high.values[1] == doctest::Approx(b.upper).epsilon(1e-9));
}
