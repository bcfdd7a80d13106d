#pragma once

#include <span>
#include <vector>

namespace povmap::stats {

double mean(std::span<const double> v);
double weighted_mean(std::span<const double> v, std::span<const double> w);
/// Population (divide-by-n) standard deviation.
double population_sd(std::span<const double> v);
double median(std::span<const double> v);
/// Linear-interpolation quantile (type 7), q in [0, 1].
double quantile(std::span<const double> v, double q);

/// Squared (weighted) Pearson correlation. Empty weights mean unit weights.
/// Throws UndefinedMetric when either side has zero (weighted) variance.
double squared_correlation(std::span<const double> a, std::span<const double> b,
                           std::span<const double> w = {});

/// Average ranks (1-based, ties share the mean of their positions).
std::vector<double> average_ranks(std::span<const double> v);

double spearman(std::span<const double> a, std::span<const double> b);

} // namespace povmap::stats
