#pragma once

#include <cstddef>
#include <span>

namespace mixbf::diagnostics {

struct SeriesSummary {
  double mean = 0.0;
  double ess = 0.0;       // effective sample size
  double se = 0.0;        // batch-means standard error of the mean
  bool reliable = true;   // false for (near-)constant or very short series
};

// Floor reported for the ESS of a series with no usable variation.
inline constexpr double kEssFloor = 1.0;

// Geyer initial positive sequence estimate, truncated at the first
// non-positive sum of adjacent autocorrelation pairs.
double effective_sample_size(std::span<const double> x);

// floor(sqrt(n)) batches of equal length; a trailing partial batch is dropped.
double batch_means_se(std::span<const double> x);

SeriesSummary summarize(std::span<const double> x);

}  // namespace mixbf::diagnostics
