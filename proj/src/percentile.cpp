#include "mecal/percentile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mecal {

std::pair<std::size_t, std::size_t> percentile_indices(std::size_t count, double level) {
  if (count == 0) throw std::invalid_argument("percentile of an empty vector");
  const double a = (1.0 - level) / 2.0;
  // Guard against 0.025 * 200 evaluating to 5.000000000000001.
  auto rank = [&](double q) {
    const double x = q * static_cast<double>(count);
    const double r = std::ceil(x - 1e-9 * std::max(1.0, x));
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1, count);
  };
  return {rank(a), rank(1.0 - a)};
}

Interval percentile_interval(std::span<const double> values, double level) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto [lo, hi] = percentile_indices(sorted.size(), level);
  return {sorted[lo - 1], sorted[hi - 1]};
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace mecal
