#include "povmap/stats.hpp"

#include "povmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

namespace povmap::stats {

double mean(std::span<const double> v) {
  if (v.empty()) {
    throw InvalidInput("mean of an empty sequence");
  }
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

double weighted_mean(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size() || v.empty()) {
    throw InvalidInput("weighted_mean: sizes differ or empty");
  }
  double s = 0.0;
  double ws = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += w[i] * v[i];
    ws += w[i];
  }
  if (ws <= 0.0) {
    throw InvalidInput("weighted_mean: total weight is not positive");
  }
  return s / ws;
}

double population_sd(std::span<const double> v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(v.size()));
}

double quantile(std::span<const double> v, double q) {
  if (v.empty()) {
    throw InvalidInput("quantile of an empty sequence");
  }
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

double median(std::span<const double> v) { return quantile(v, 0.5); }

double squared_correlation(std::span<const double> a, std::span<const double> b,
                           std::span<const double> w) {
  if (a.size() != b.size() || (!w.empty() && w.size() != a.size())) {
    throw InvalidInput("squared_correlation: length mismatch");
  }
  if (a.size() < 2) {
    throw UndefinedMetric("R^2 needs at least two observations");
  }
  auto weight = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
  double ws = 0.0;
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ws += weight(i);
    ma += weight(i) * a[i];
    mb += weight(i) * b[i];
  }
  if (ws <= 0.0) {
    throw UndefinedMetric("R^2 with zero total weight");
  }
  ma /= ws;
  mb /= ws;
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += weight(i) * da * da;
    sbb += weight(i) * db * db;
    sab += weight(i) * da * db;
  }
  // Relative guard: variance that is pure rounding noise counts as zero.
  auto negligible = [&](double ss, double m) {
    return ss <= 1e-28 * ws * std::max(1.0, m * m);
  };
  if (negligible(saa, ma) || negligible(sbb, mb)) {
    throw UndefinedMetric("R^2 undefined: zero variance");
  }
  const double r2 = (sab * sab) / (saa * sbb);
  return std::min(1.0, r2);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) {
      ++j;
    }
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      ranks[order[k]] = r;
    }
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double r2 = squared_correlation(ra, rb);
  double sab = 0.0;
  const double ma = mean(ra);
  const double mb = mean(rb);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
  }
  return sab >= 0.0 ? std::sqrt(r2) : -std::sqrt(r2);
}

} // namespace povmap::stats
