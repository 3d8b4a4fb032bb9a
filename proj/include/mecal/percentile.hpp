#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mecal/core_model.hpp"

namespace mecal {

/// 1-based order-statistic indices for a two-sided interval at `level` over
/// `count` sorted values: ceil(a * count) and ceil((1 - a) * count) with
/// a = (1 - level) / 2, clamped to [1, count].
std::pair<std::size_t, std::size_t> percentile_indices(std::size_t count, double level);

/// Percentile interval; both endpoints are elements of `values`.
Interval percentile_interval(std::span<const double> values, double level);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> values);

}  // namespace mecal
