#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace qsol {

/// Pearson correlation between values[0, n - lag) and values[lag, n).
double lagged_correlation(std::span<const double> values, std::size_t lag);

struct PeriodEstimate {
  double period = 0.0;
  /// Lagged correlation at the integer lag closest to the period.
  double correlation = 0.0;
};

/// Dominant period of a uniformly sampled trace: the first local maximum of
/// the lagged correlation after it has dropped below zero, refined by a
/// parabola through the neighbouring lags. nullopt if no such maximum.
std::optional<PeriodEstimate> autocorrelation_period(std::span<const double> values, double spacing);

/// Positions of strict local maxima (parabolically refined), in sample units
/// scaled by `spacing`. Maxima lower than `min_prominence` above both
/// neighbouring minima are ignored.
std::vector<double> local_maxima(std::span<const double> values, double spacing,
                                 double min_prominence = 0.0);
std::vector<double> local_minima(std::span<const double> values, double spacing,
                                 double min_prominence = 0.0);

/// First position where the linearly interpolated trace reaches `level`
/// from below; nullopt if never.
std::optional<double> first_crossing(std::span<const double> positions,
                                     std::span<const double> values, double level);

}  // namespace qsol
