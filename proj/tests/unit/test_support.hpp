#pragma once

// Random generators and small numeric helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mixbf/bfcore.hpp"

namespace test_support {

template <class T>
double rel_err(T got, T want) {
  using std::abs;
  return static_cast<double>(abs(got - want) / std::max<T>(abs(want), T(1e-300)));
}

inline std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t n) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = g(gen));
  for (auto& x : v) x /= s;
  return v;
}

inline mixbf::bfcore::PriorMoments random_dirichlet_moments(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.2, 5.0);
  std::vector<double> p(n);
  for (auto& x : p) x = u(gen);
  return mixbf::bfcore::dirichlet_moments(p);
}

// Mixture of two or three Dirichlet priors with random weights.
inline mixbf::bfcore::PriorMoments random_moments(std::mt19937_64& gen, std::size_t n) {
  const std::size_t c = 2 + gen() % 2;
  std::vector<mixbf::bfcore::PriorMoments> comps;
  for (std::size_t i = 0; i < c; ++i) comps.push_back(random_dirichlet_moments(gen, n));
  const auto w = random_simplex(gen, c);
  return mixbf::bfcore::mixture_moments<double>(w, comps);
}

// Dirichlet or mixed-Dirichlet moments computed natively in scalar type T.
template <class T>
mixbf::bfcore::BasicPriorMoments<T> random_moments_t(std::mt19937_64& gen, std::size_t n,
                                                     bool mixed) {
  std::uniform_real_distribution<double> u(0.2, 5.0);
  auto one = [&] {
    std::vector<T> p(n);
    for (auto& x : p) x = static_cast<T>(u(gen));
    return mixbf::bfcore::dirichlet_moments(p);
  };
  if (!mixed) return one();
  const std::size_t c = 2 + gen() % 2;
  std::vector<mixbf::bfcore::BasicPriorMoments<T>> comps;
  for (std::size_t i = 0; i < c; ++i) comps.push_back(one());
  const auto wd = random_simplex(gen, c);
  std::vector<T> w(wd.begin(), wd.end());
  T total(0);
  for (auto& x : w) total += x;
  for (auto& x : w) x /= total;
  return mixbf::bfcore::mixture_moments<T>(w, comps);
}

// Mean and standard error of a sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return r;
}

}  // namespace test_support
