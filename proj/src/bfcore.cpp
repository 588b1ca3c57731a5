#include "mixbf/bfcore.hpp"

#include <cmath>
#include <string>

namespace mixbf::bfcore {

namespace {

constexpr double kBoundTol = 1e-12;

}  // namespace

MeanBounds posterior_mean_bounds(const PriorMoments& moments, std::size_t i) {
  validate(moments);
  const std::size_t n = moments.size();
  if (i >= n) throw InvalidArgument("model index out of range");
  MeanBounds b;
  if (moments.dirichlet_params) {
    const auto& p = *moments.dirichlet_params;
    double p0 = 0.0;
    for (double v : p) p0 += v;
    b.lower = p[i] / (p0 + 1.0);
    b.upper = (p[i] + 1.0) / (p0 + 1.0);
    return b;
  }
  const double ei = moments.first[i];
  const double eii = moments.second(i, i);
  b.upper = eii / ei;
  if (n == 2) b.lower = (ei - eii) / (1.0 - ei);
  return b;
}

TwoModelBayesFactor two_model_bf(const PriorMoments& moments, double e1) {
  if (moments.size() != 2) throw InvalidArgument("two_model_bf needs exactly two models");
  validate(moments);
  const double m1 = moments.first[0];
  const double m11 = moments.second(0, 0);
  // E[a_1] - E[a_1^2] == E[a_1 a_2] and 1 - E[a_1] == E[a_2].
  const double m12 = moments.second(0, 1);
  const double m2 = moments.first[1];
  const double lo = m12 / m2;
  const double hi = m11 / m1;

  TwoModelBayesFactor out;
  if (std::abs(e1 - hi) <= kBoundTol) {
    out.kind = TwoModelBayesFactor::Kind::infinite;
    out.value = HUGE_VAL;
    return out;
  }
  if (std::abs(e1 - lo) <= kBoundTol) {
    out.kind = TwoModelBayesFactor::Kind::zero;
    out.value = 0.0;
    return out;
  }
  if (e1 < lo || e1 > hi)
    throw BoundsViolation("E[a_1|x] = " + std::to_string(e1) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]; the estimate is incorrect");
  out.value = (m12 - e1 * m2) / (m1 * e1 - m11);
  return out;
}

SquareMatrix<double> occupancy_bf(std::span<const double> occupancy, const PriorMoments& moments) {
  const std::size_t n = moments.size();
  if (occupancy.size() != n) throw InvalidArgument("occupancy vector has wrong length");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (occupancy[i] < 0.0) throw InvalidArgument("occupancy must be non-negative");
    if (occupancy[i] == 0.0)
      throw DegenerateOccupancy("model " + std::to_string(i + 1) +
                                " was never visited; occupancy estimate unavailable");
    total += occupancy[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("occupancy does not sum to one");
  SquareMatrix<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = (occupancy[i] / occupancy[j]) * (moments.first[j] / moments.first[i]);
  return out;
}

SquareMatrix<double> bf_matrix(const BayesFactors& bf) {
  const std::size_t n = bf.values.size();
  SquareMatrix<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = bf.values[i] / bf.values[j];
  return out;
}

}  // namespace mixbf::bfcore
