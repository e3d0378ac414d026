#include "qsoliton/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace qsol {

namespace {

double refine_parabola(double left, double centre, double right) {
  const double denom = left - 2.0 * centre + right;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
}

}  // namespace

double lagged_correlation(std::span<const double> values, std::size_t lag) {
  if (lag >= values.size() || values.size() - lag < 2) return 0.0;
  const std::size_t count = values.size() - lag;
  const auto a = values.first(count);
  const auto b = values.subspan(lag, count);
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(count);
  mean_b /= static_cast<double>(count);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    sab += (a[i] - mean_a) * (b[i] - mean_b);
    saa += (a[i] - mean_a) * (a[i] - mean_a);
    sbb += (b[i] - mean_b) * (b[i] - mean_b);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::optional<PeriodEstimate> autocorrelation_period(std::span<const double> values,
                                                     double spacing) {
  const std::size_t n = values.size();
  if (n < 8) return std::nullopt;
  // Lags beyond ~3/4 of the trace have too little overlap to be meaningful.
  const std::size_t max_lag = (3 * n) / 4;
  std::vector<double> r(max_lag + 1);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) r[lag] = lagged_correlation(values, lag);
  std::size_t lag = 1;
  while (lag < max_lag && r[lag] > 0.0) ++lag;
  for (; lag < max_lag; ++lag) {
    if (r[lag] > r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > 0.0) {
      const double shift = refine_parabola(r[lag - 1], r[lag], r[lag + 1]);
      return PeriodEstimate{(static_cast<double>(lag) + shift) * spacing, r[lag]};
    }
  }
  return std::nullopt;
}

namespace {

std::vector<double> extrema(std::span<const double> values, double spacing, double min_prominence,
                            double sign) {
  std::vector<double> out;
  const std::size_t n = values.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double c = sign * values[i];
    if (!(c > sign * values[i - 1] && c >= sign * values[i + 1])) continue;
    double left_min = c;
    for (std::size_t j = i; j-- > 0;) {
      if (sign * values[j] > c) break;
      left_min = std::min(left_min, sign * values[j]);
    }
    double right_min = c;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sign * values[j] > c) break;
      right_min = std::min(right_min, sign * values[j]);
    }
    if (c - left_min < min_prominence || c - right_min < min_prominence) continue;
    const double shift = refine_parabola(values[i - 1], values[i], values[i + 1]);
    out.push_back((static_cast<double>(i) + shift) * spacing);
  }
  return out;
}

}  // namespace

std::vector<double> local_maxima(std::span<const double> values, double spacing,
                                 double min_prominence) {
  return extrema(values, spacing, min_prominence, 1.0);
}

std::vector<double> local_minima(std::span<const double> values, double spacing,
                                 double min_prominence) {
  return extrema(values, spacing, min_prominence, -1.0);
}

std::optional<double> first_crossing(std::span<const double> positions,
                                     std::span<const double> values, double level) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= level) {
      if (i == 0) return positions[0];
      const double f = (level - values[i - 1]) / (values[i] - values[i - 1]);
      return positions[i - 1] + f * (positions[i] - positions[i - 1]);
    }
  }
  return std::nullopt;
}

}  // namespace qsol
