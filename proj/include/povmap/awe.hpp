#pragma once

#include "povmap/mapping.hpp"
#include "povmap/records.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

/// Inverse standard normal CDF. Throws InvalidInput unless 0 < p < 1.
double probit(double p);

/// Log-normal body glued to a Pareto upper tail.
struct IcdfSpec {
  double alpha = 0.0;
  double sigma = 0.0;
  double mu = 0.0;
  double switch_quantile = 0.0;
  /// Pareto scale making the two branches meet at switch_quantile.
  double x_m = 0.0;
};

/// Throws InvalidInput for gini outside (0, 1) or gdp_pc <= 0.
IcdfSpec icdf_params(const CountryStats& stats);
/// Throws InvalidInput unless 0 < q < 1.
double icdf_eval(const IcdfSpec& spec, double q);

enum class AweMode {
  /// AWE_i = ICDF(q_i) * GDP / mean_j ICDF(q_j).
  icdf,
  /// AWE_i = q_i * GDP / mean_j ICDF(q_j), the display equation taken literally.
  literal
};

struct AweEstimate {
  TileId tile;
  std::string country;
  double rwi = 0.0;
  double rank_quantile = 0.0;
  double awe = 0.0;
};

/// Mid-rank quantiles (average rank - 0.5) / n of the values; ties share a rank.
std::vector<double> mid_rank_quantiles(std::span<const double> values);

/// Converts relative estimates to absolute wealth country by country.
/// Throws InvalidInput when a country has no stats.
std::vector<AweEstimate> rwi_to_awe(std::span<const TileEstimate> estimates,
                                    const std::map<std::string, CountryStats>& stats,
                                    AweMode mode = AweMode::icdf);

struct DistributionBin {
  double log10_lower = 0.0;
  double log10_upper = 0.0;
  double weight = 0.0;
};

/// Weighted histogram over equal-width log10 bins. Values must be positive.
/// Empty weights mean unit weights.
std::vector<DistributionBin> export_distribution(std::span<const double> values,
                                                 std::span<const double> weights = {},
                                                 std::size_t bins = 50);

void save_awe(const std::filesystem::path& path, std::span<const AweEstimate> awe,
              std::string_view manifest);
void save_distribution(const std::filesystem::path& path, std::span<const DistributionBin> bins,
                       std::string_view manifest);

} // namespace povmap
