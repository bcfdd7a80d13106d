#pragma once

#include "povmap/matrix.hpp"
#include "povmap/records.hpp"
#include "povmap/spatial_index.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

inline constexpr std::array<double, 4> kClusterRadiiKm = {50.0, 250.0, 500.0, 1000.0};

enum class ErrorSpec {
  /// Geography, country covariates and the scalar tile features.
  base,
  /// base plus the 100 imagery components.
  imagery,
  /// base without any of the tile features the wealth model uses.
  non_rwi
};

std::string_view to_string(ErrorSpec spec);
ErrorSpec parse_error_spec(std::string_view name);

/// A location whose expected error is modeled: a tile or a survey cluster.
struct ErrorSite {
  LatLon location;
  std::string country;
  /// Raw (unnormalized) tile features in canonical order.
  std::vector<double> features;
  /// Cluster to ignore in the distance and count predictors (the site's own
  /// cluster when fitting).
  std::optional<std::size_t> own_cluster;
};

/// Survey cluster locations with their countries.
struct ClusterSet {
  std::vector<std::string> country;
  SpatialIndex index;

  explicit ClusterSet(std::span<const ClusterObservation> clusters);
  ClusterSet(std::vector<LatLon> locations, std::vector<std::string> countries);
};

struct PredictorTable {
  std::vector<std::string> names;
  Matrix values;
};

/// ln(1 + x) for x >= 0; negative inputs are treated as 0.
double log1p_nonneg(double x);

/// Continent dummy columns, one per continent after the alphabetically first.
std::vector<std::string> continent_levels(const std::map<std::string, CountryAttributes>& attrs);

/// Throws InvalidInput when the cluster set is empty or a site's country has
/// no attributes or stats.
PredictorTable build_error_predictors(std::span<const ErrorSite> sites, const ClusterSet& clusters,
                                      const std::map<std::string, CountryAttributes>& attrs,
                                      const std::map<std::string, CountryStats>& stats,
                                      ErrorSpec spec);

struct LinearModel {
  /// "intercept" followed by the predictor names.
  std::vector<std::string> names;
  std::vector<double> beta;
  std::vector<double> se;
  double r2 = 0.0;
  std::size_t n = 0;
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// (Weighted) least squares with an intercept. Rank-deficient designs get
/// the minimal-norm solution and a warning. Throws InvalidInput when
/// n <= number of coefficients.
LinearModel fit_least_squares(const Matrix& x, std::span<const double> y,
                              std::span<const double> weights = {},
                              std::vector<std::string> names = {});

/// Linear prediction clamped below at 0.
std::vector<double> predict_error(const LinearModel& model, const Matrix& x);

struct CountryErrorSummary {
  std::string country;
  std::size_t n_tiles = 0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  /// Squared out-of-sample residual summary; only where ground truth exists.
  std::optional<double> mse_mean;
  std::optional<double> mse_median;
  std::optional<double> mse_sd;
};

std::vector<CountryErrorSummary> country_error_summary(
    std::span<const std::string> countries, std::span<const double> errors,
    const std::map<std::string, std::vector<double>>& squared_residuals = {});

/// Country attribute vectors used for dissimilarity: area, population,
/// island, landlocked, distance to the nearest other country's cluster,
/// neighbors with ground truth, GDP per capita, Gini.
std::map<std::string, std::vector<double>> country_attribute_vectors(
    std::span<const std::string> countries, const std::map<std::string, CountryAttributes>& attrs,
    const std::map<std::string, CountryStats>& stats, const ClusterSet& clusters);

double cosine_dissimilarity(std::span<const double> a, std::span<const double> b);

/// Pairwise cosine dissimilarity of the column-standardized vectors.
std::vector<std::vector<double>> dissimilarity_matrix(const std::vector<std::vector<double>>& vectors);

struct DissimilarityPoint {
  double decile = 0.0;
  double threshold = 0.0;
  double mean_error = 0.0;
  std::size_t countries = 0;
  std::size_t skipped = 0;
};

/// For each decile threshold d of the pairwise dissimilarities, the mean
/// over test countries of the mean transfer error err[test][train] over
/// training countries at least d dissimilar.
std::vector<DissimilarityPoint> dissimilarity_curve(
    const std::vector<std::vector<double>>& dissimilarity,
    const std::vector<std::vector<double>>& transfer_error, std::size_t deciles = 10);

void save_error_models(const std::filesystem::path& path,
                       const std::vector<std::pair<ErrorSpec, LinearModel>>& models,
                       std::string_view manifest);
void save_error_summary(const std::filesystem::path& path,
                        std::span<const CountryErrorSummary> rows, std::string_view manifest);
void save_dissimilarity(const std::filesystem::path& path,
                        std::span<const DissimilarityPoint> curve, std::string_view manifest);

} // namespace povmap
