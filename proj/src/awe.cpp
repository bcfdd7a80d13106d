#include "povmap/awe.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/parallel.hpp"
#include "povmap/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

namespace povmap {

namespace {

// Acklam's rational approximation, relative error about 1e-9 before refinement.
double probit_initial(double p) {
  constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                          1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                          6.680131188771972e+01,  -1.328068155288572e+01};
  constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                          -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                          3.754408661907416e+00};
  constexpr double low = 0.02425;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace

double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInput(fmt::format("probit argument {} outside (0, 1)", p));
  }
  double x = probit_initial(p);
  // One Halley step against the complementary error function.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

IcdfSpec icdf_params(const CountryStats& stats) {
  if (!(stats.gini > 0.0 && stats.gini < 1.0)) {
    throw InvalidInput(fmt::format("Gini {} for '{}' outside (0, 1)", stats.gini, stats.iso2));
  }
  if (!(stats.gdp_pc > 0.0)) {
    throw InvalidInput(fmt::format("GDP per capita {} for '{}' not positive", stats.gdp_pc,
                                   stats.iso2));
  }
  IcdfSpec s;
  s.alpha = (1.0 + stats.gini) / (2.0 * stats.gini);
  s.sigma = std::numbers::sqrt2 * probit((stats.gini + 1.0) / 2.0);
  s.mu = std::log(stats.gdp_pc) - s.sigma * s.sigma / 2.0;
  s.switch_quantile = 1.0 - 1.0 / s.alpha;
  const double at_switch =
      s.switch_quantile > 0.0 ? std::exp(s.mu + s.sigma * probit(s.switch_quantile)) : 0.0;
  s.x_m = at_switch * std::pow(1.0 - s.switch_quantile, 1.0 / s.alpha);
  return s;
}

double icdf_eval(const IcdfSpec& spec, double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw InvalidInput(fmt::format("quantile {} outside (0, 1)", q));
  }
  if (q <= spec.switch_quantile) {
    return std::exp(spec.mu + spec.sigma * probit(q));
  }
  return spec.x_m * std::pow(1.0 - q, -1.0 / spec.alpha);
}

std::vector<double> mid_rank_quantiles(std::span<const double> values) {
  const auto ranks = stats::average_ranks(values);
  const auto n = static_cast<double>(values.size());
  std::vector<double> q(values.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = (ranks[i] - 0.5) / n;
  }
  return q;
}

std::vector<AweEstimate> rwi_to_awe(std::span<const TileEstimate> estimates,
                                    const std::map<std::string, CountryStats>& stats,
                                    AweMode mode) {
  std::map<std::string, std::vector<std::size_t>> by_country;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    by_country[estimates[i].country].push_back(i);
  }
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups(by_country.begin(),
                                                                         by_country.end());
  for (const auto& [country, rows] : groups) {
    if (!stats.contains(country)) {
      throw InvalidInput(fmt::format("no GDP/Gini statistics for country '{}'", country));
    }
  }
  std::vector<AweEstimate> out(estimates.size());
  parallel_for(groups.size(), [&](std::size_t g) {
    const auto& [country, rows] = groups[g];
    const IcdfSpec spec = icdf_params(stats.at(country));
    const double gdp = stats.at(country).gdp_pc;
    std::vector<double> rwi;
    for (auto i : rows) {
      rwi.push_back(estimates[i].rwi);
    }
    const auto q = mid_rank_quantiles(rwi);
    std::vector<double> raw(q.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      raw[j] = icdf_eval(spec, q[j]);
      sum += raw[j];
    }
    const double mean = sum / static_cast<double>(q.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
      auto& a = out[rows[j]];
      a.tile = estimates[rows[j]].tile;
      a.country = country;
      a.rwi = rwi[j];
      a.rank_quantile = q[j];
      a.awe = (mode == AweMode::icdf ? raw[j] : q[j]) * gdp / mean;
    }
  });
  return out;
}

std::vector<DistributionBin> export_distribution(std::span<const double> values,
                                                 std::span<const double> weights,
                                                 std::size_t bins) {
  if (values.size() < 2) {
    throw InvalidInput("wealth distribution needs at least two values");
  }
  if (!weights.empty() && weights.size() != values.size()) {
    throw InvalidInput("wealth distribution: weights and values differ in length");
  }
  if (bins == 0) {
    throw InvalidInput("wealth distribution needs at least one bin");
  }
  std::vector<double> logs(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
      throw InvalidInput(fmt::format("wealth value {} is not positive", values[i]));
    }
    logs[i] = std::log10(values[i]);
  }
  const auto [lo_it, hi_it] = std::minmax_element(logs.begin(), logs.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (lo == hi) {
    bins = 1;
  }
  const double width = lo == hi ? 1.0 : (hi - lo) / static_cast<double>(bins);
  std::vector<DistributionBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].log10_lower = lo + width * static_cast<double>(b);
    out[b].log10_upper = b + 1 == bins ? (lo == hi ? lo + width : hi)
                                       : lo + width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < logs.size(); ++i) {
    auto b = static_cast<std::size_t>((logs[i] - lo) / width);
    b = std::min(b, bins - 1);
    out[b].weight += weights.empty() ? 1.0 : weights[i];
  }
  return out;
}

void save_awe(const std::filesystem::path& path, std::span<const AweEstimate> awe,
              std::string_view manifest) {
  csv::Writer w(path, manifest);
  w.row({"quadkey", "country", "rwi", "rank_quantile", "awe_usd"});
  std::vector<const AweEstimate*> order;
  for (const auto& a : awe) {
    order.push_back(&a);
  }
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return quadkey(a->tile) < quadkey(b->tile); });
  for (const auto* a : order) {
    w.row({quadkey(a->tile), a->country, csv::format(a->rwi), csv::format(a->rank_quantile),
           csv::format(a->awe)});
  }
  w.close();
}

void save_distribution(const std::filesystem::path& path, std::span<const DistributionBin> bins,
                       std::string_view manifest) {
  csv::Writer w(path, manifest);
  w.row({"log10_lower", "log10_upper", "weight"});
  for (const auto& b : bins) {
    w.row({csv::format(b.log10_lower), csv::format(b.log10_upper), csv::format(b.weight)});
  }
  w.close();
}

} // namespace povmap
