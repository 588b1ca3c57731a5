#pragma once

// Conversion of mixture-weight moments and posterior means into Bayes factors.
//
// The core identity: with prior moments E[a_i], E[a_i a_j] for the mixture
// weights and marginal likelihoods m_j,
//
//   E[a_i | x] = sum_j E[a_i a_j] m_j / sum_j E[a_j] m_j,
//
// which rearranges into A b = 0 for b_j = m_j / m_k and
// A_ij = E[a_i | x] E[a_j] - E[a_i a_j]. Removing row and column k leaves a
// nonsingular system whenever the Bayes factors are identifiable.
//
// The algebra is templated on the scalar type so the same code runs in double
// precision and in exact rational arithmetic. Model indices are zero-based.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mixbf/error.hpp"
#include "mixbf/matrix.hpp"

namespace mixbf::bfcore {

namespace detail {

template <class T>
T absval(const T& v) {
  using std::abs;
  return abs(v);
}

// Tolerance for the structural identities (sums to one, row sums). Exact
// scalars get zero tolerance.
template <class T>
T identity_tolerance() {
  if constexpr (std::is_floating_point_v<T>) {
    return T(1e-12);
  } else {
    return T(0);
  }
}

template <class T>
bool close(const T& a, const T& b, const T& scale = T(1)) {
  const T s = std::max(T(1), absval(scale));
  return absval(a - b) <= identity_tolerance<T>() * s;
}

}  // namespace detail

template <class T>
struct BasicPriorMoments {
  std::vector<T> first;                          // E[a_i]
  SquareMatrix<T> second;                        // E[a_i a_j]
  std::optional<std::vector<T>> dirichlet_params;  // set only for an exact Dirichlet prior

  std::size_t size() const noexcept { return first.size(); }
};

template <class T>
struct BasicPosteriorMeans {
  std::vector<T> values;  // E[a_i | x]
  std::size_t size() const noexcept { return values.size(); }
};

// B_jk for a fixed reference model k; values[k] == 1.
template <class T>
struct BasicBayesFactors {
  std::size_t reference = 0;
  std::vector<T> values;
};

using PriorMoments = BasicPriorMoments<double>;
using PosteriorMeans = BasicPosteriorMeans<double>;
using AMatrix = SquareMatrix<double>;
using BayesFactors = BasicBayesFactors<double>;

// Checks the invariants every valid set of weight moments satisfies. Throws
// InvalidArgument describing the first failure.
template <class T>
void validate(const BasicPriorMoments<T>& m) {
  const std::size_t n = m.size();
  if (n < 2) throw InvalidArgument("prior moments need at least two models");
  if (m.second.size() != n) throw InvalidArgument("second-moment matrix has wrong dimension");
  T total(0);
  for (const auto& v : m.first) {
    if (!(v > T(0)) || !(v < T(1))) throw InvalidArgument("first moments must lie in (0,1)");
    total += v;
  }
  if (!detail::close(total, T(1))) throw InvalidArgument("first moments do not sum to one");
  for (std::size_t i = 0; i < n; ++i) {
    T row(0);
    for (std::size_t j = 0; j < n; ++j) {
      const T& s = m.second(i, j);
      if (s < T(0) || s > T(1)) throw InvalidArgument("second moments must lie in [0,1]");
      if (!detail::close(s, m.second(j, i))) throw InvalidArgument("second moments not symmetric");
      row += s;
    }
    if (!detail::close(row, m.first[i]))
      throw InvalidArgument("row " + std::to_string(i) + " of second moments does not sum to E[a_i]");
    if (m.second(i, i) > m.first[i]) throw InvalidArgument("E[a_i^2] exceeds E[a_i]");
  }
  if (m.dirichlet_params && m.dirichlet_params->size() != n)
    throw InvalidArgument("dirichlet parameter count does not match model count");
}

template <class T>
BasicPriorMoments<T> dirichlet_moments(std::span<const T> p) {
  if (p.size() < 2) throw InvalidArgument("dirichlet prior needs at least two models");
  T p0(0);
  for (const auto& v : p) {
    if (!(v > T(0))) throw InvalidArgument("dirichlet parameters must be positive");
    p0 += v;
  }
  const std::size_t n = p.size();
  BasicPriorMoments<T> out;
  out.first.resize(n);
  out.second = SquareMatrix<T>(n);
  const T denom = p0 * (p0 + T(1));
  for (std::size_t i = 0; i < n; ++i) {
    out.first[i] = p[i] / p0;
    for (std::size_t j = 0; j < n; ++j)
      out.second(i, j) = (i == j) ? p[i] * (p[i] + T(1)) / denom : p[i] * p[j] / denom;
  }
  out.dirichlet_params = std::vector<T>(p.begin(), p.end());
  return out;
}

template <class T>
BasicPriorMoments<T> dirichlet_moments(const std::vector<T>& p) {
  return dirichlet_moments(std::span<const T>(p));
}

// Moments of a finite mixture of weight priors.
template <class T>
BasicPriorMoments<T> mixture_moments(std::span<const T> weights,
                                     std::span<const BasicPriorMoments<T>> components) {
  if (weights.size() != components.size() || components.empty())
    throw InvalidArgument("mixture weights and components differ in length");
  T wsum(0);
  for (const auto& w : weights) {
    if (w < T(0)) throw InvalidArgument("mixture weights must be non-negative");
    wsum += w;
  }
  if (!detail::close(wsum, T(1))) throw InvalidArgument("mixture weights do not sum to one");
  if (components.size() == 1) return components.front();

  const std::size_t n = components.front().size();
  BasicPriorMoments<T> out;
  out.first.assign(n, T(0));
  out.second = SquareMatrix<T>(n);
  for (std::size_t c = 0; c < components.size(); ++c) {
    const auto& comp = components[c];
    if (comp.size() != n || comp.second.size() != n)
      throw InvalidArgument("mixture components have different model counts");
    for (std::size_t i = 0; i < n; ++i) {
      out.first[i] += weights[c] * comp.first[i];
      for (std::size_t j = 0; j < n; ++j) out.second(i, j) += weights[c] * comp.second(i, j);
    }
  }
  return out;
}

// E[a_i | x] implied by the marginal likelihoods m. Invariant to rescaling m.
template <class T>
BasicPosteriorMeans<T> forward_posterior_means(const BasicPriorMoments<T>& moments,
                                               std::span<const T> m) {
  const std::size_t n = moments.size();
  if (m.size() != n) throw InvalidArgument("marginal likelihood vector has wrong length");
  for (const auto& v : m) {
    if (!(v > T(0))) throw InvalidArgument("marginal likelihoods must be positive");
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(v)) throw InvalidArgument("marginal likelihoods must be finite");
    }
  }
  T denom(0);
  for (std::size_t j = 0; j < n; ++j) denom += moments.first[j] * m[j];
  BasicPosteriorMeans<T> out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T num(0);
    for (std::size_t j = 0; j < n; ++j) num += moments.second(i, j) * m[j];
    out.values[i] = num / denom;
  }
  return out;
}

template <class T>
BasicPosteriorMeans<T> forward_posterior_means(const BasicPriorMoments<T>& moments,
                                               const std::vector<T>& m) {
  return forward_posterior_means(moments, std::span<const T>(m));
}

template <class T>
SquareMatrix<T> build_A(const BasicPriorMoments<T>& moments, const BasicPosteriorMeans<T>& post) {
  const std::size_t n = moments.size();
  if (post.size() != n) throw InvalidArgument("posterior means have wrong dimension");
  SquareMatrix<T> a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a(i, j) = post.values[i] * moments.first[j] - moments.second(i, j);
  return a;
}

// Solves A with row/column k removed against c_i = -A_ik by Gaussian
// elimination with partial pivoting. A pivot smaller than 1e-12 times the
// largest |A_ij| is treated as singular (exactly zero for exact scalars).
template <class T>
BasicBayesFactors<T> solve_general(const SquareMatrix<T>& a, std::size_t k) {
  const std::size_t n = a.size();
  if (n < 2) throw InvalidArgument("need at least two models");
  if (k >= n) throw InvalidArgument("reference model index out of range");

  T scale(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, detail::absval(a(i, j)));

  const std::size_t d = n - 1;
  std::vector<std::size_t> keep;
  keep.reserve(d);
  for (std::size_t i = 0; i < n; ++i)
    if (i != k) keep.push_back(i);

  // Augmented system [M | c].
  std::vector<std::vector<T>> m(d, std::vector<T>(d + 1));
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) m[r][c] = a(keep[r], keep[c]);
    m[r][d] = -a(keep[r], k);
  }

  T threshold(0);
  if constexpr (std::is_floating_point_v<T>) threshold = T(1e-12) * scale;

  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (detail::absval(m[r][col]) > detail::absval(m[piv][col])) piv = r;
    if (scale == T(0) || detail::absval(m[piv][col]) <= threshold)
      throw SingularSystem("reduced A-matrix is singular at pivot " + std::to_string(col) +
                               " (model " + std::to_string(keep[col]) +
                               "); the prior is degenerate or the posterior means are "
                               "inconsistent with it",
                           col);
    std::swap(m[piv], m[col]);
    for (std::size_t r = col + 1; r < d; ++r) {
      const T f = m[r][col] / m[col][col];
      if (f == T(0)) continue;
      for (std::size_t c = col; c <= d; ++c) m[r][c] -= f * m[col][c];
    }
  }
  std::vector<T> x(d);
  for (std::size_t r = d; r-- > 0;) {
    T acc = m[r][d];
    for (std::size_t c = r + 1; c < d; ++c) acc -= m[r][c] * x[c];
    x[r] = acc / m[r][r];
  }

  BasicBayesFactors<T> out;
  out.reference = k;
  out.values.assign(n, T(1));
  for (std::size_t r = 0; r < d; ++r) out.values[keep[r]] = x[r];
  return out;
}

struct MeanBounds {
  std::optional<double> lower;  // absent when it depends on unknown marginal likelihoods
  double upper = 1.0;

  bool contains(double v, double tol = 0.0) const {
    return (!lower || v >= *lower - tol) && v <= upper + tol;
  }
  bool strictly_contains(double v) const { return (!lower || v > *lower) && v < upper; }
};

// Range E[a_i | x] can take: the Dirichlet box when the prior is Dirichlet,
// the prior-only two-model interval when n == 2, otherwise just the upper end.
MeanBounds posterior_mean_bounds(const PriorMoments& moments, std::size_t i);

// Dirichlet-only shortcut B_jk = A_jk / A_kj. Requires every posterior mean
// strictly inside p_i/(p0+1) < E[a_i|x] < (p_i+1)/(p0+1).
template <class T>
BasicBayesFactors<T> solve_dirichlet_fast(const BasicPriorMoments<T>& moments,
                                          const BasicPosteriorMeans<T>& post, std::size_t k) {
  if (!moments.dirichlet_params)
    throw InvalidArgument("fast path requires an exact Dirichlet prior");
  const std::size_t n = moments.size();
  if (k >= n) throw InvalidArgument("reference model index out of range");
  if (post.size() != n) throw InvalidArgument("posterior means have wrong dimension");
  const auto& p = *moments.dirichlet_params;
  T p0(0);
  for (const auto& v : p) p0 += v;
  for (std::size_t i = 0; i < n; ++i) {
    const T& e = post.values[i];
    if (!(e > p[i] / (p0 + T(1))) || !(e < (p[i] + T(1)) / (p0 + T(1))))
      throw BoundsViolation("E[a_" + std::to_string(i + 1) +
                            "|x] lies outside the Dirichlet bounds; the estimate is incorrect");
  }
  const auto a = build_A(moments, post);
  BasicBayesFactors<T> out;
  out.reference = k;
  out.values.assign(n, T(1));
  for (std::size_t j = 0; j < n; ++j)
    if (j != k) out.values[j] = a(j, k) / a(k, j);
  return out;
}

struct TwoModelBayesFactor {
  enum class Kind { finite, infinite, zero };
  Kind kind = Kind::finite;
  double value = 1.0;  // B_12; only meaningful when kind == finite

  bool is_finite() const noexcept { return kind == Kind::finite; }
};

TwoModelBayesFactor two_model_bf(const PriorMoments& moments, double e1);

// Cross-check from allocation occupancy: B_ij = (occ_i / occ_j) (E[a_j] / E[a_i]).
SquareMatrix<double> occupancy_bf(std::span<const double> occupancy, const PriorMoments& moments);

// Full matrix B_ij from a reference-k solution (B_ij = B_ik / B_jk).
SquareMatrix<double> bf_matrix(const BayesFactors& bf);

}  // namespace mixbf::bfcore
