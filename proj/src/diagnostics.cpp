#include "mixbf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mixbf::diagnostics {

namespace {

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return kEssFloor;
  const double mu = mean_of(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  c0 /= static_cast<double>(n);
  if (!(c0 > 1e-300)) return kEssFloor;

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mu) * (x[t + lag] - mu);
    return s / static_cast<double>(n);
  };

  // Sum of Gamma_m = rho(2m) + rho(2m+1) while positive and (monotone
  // sequence) non-increasing.
  double tau = -1.0;
  double prev_pair = HUGE_VAL;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = (autocov(2 * m) + autocov(2 * m + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return std::clamp(static_cast<double>(n) / tau, kEssFloor, static_cast<double>(n) * 10.0);
}

double batch_means_se(std::span<const double> x) {
  const std::size_t n = x.size();
  const auto batches = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  if (batches < 2) return 0.0;
  const std::size_t len = n / batches;
  std::vector<double> means(batches);
  for (std::size_t b = 0; b < batches; ++b)
    means[b] = mean_of(x.subspan(b * len, len));
  const double grand = mean_of(means);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  const double var_batch = ss / static_cast<double>(batches - 1);
  return std::sqrt(var_batch / static_cast<double>(batches));
}

SeriesSummary summarize(std::span<const double> x) {
  SeriesSummary s;
  if (x.empty()) {
    s.reliable = false;
    return s;
  }
  s.mean = mean_of(x);
  s.ess = effective_sample_size(x);
  s.se = batch_means_se(x);
  s.reliable = x.size() >= 100 && s.ess > 10.0 * kEssFloor && s.se > 0.0;
  return s;
}

}  // namespace mixbf::diagnostics
