#pragma once

#include "povmap/gbdt.hpp"
#include "povmap/matrix.hpp"
#include "povmap/records.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

inline constexpr int kDefaultFolds = 5;

enum class CvProtocol { basic_kfold, leave_country_out, spatial };

std::string_view to_string(CvProtocol p);
/// Accepts "basic", "basic_kfold", "lco", "leave_country_out", "spatial".
CvProtocol parse_protocol(std::string_view name);

/// Labeled training rows with the metadata the CV protocols need.
struct Dataset {
  Matrix x;
  std::vector<double> y;
  /// Empty means unit weights.
  std::vector<double> weights;
  std::vector<std::string> country;
  std::vector<LatLon> centroid;
  std::vector<bool> urban;
  std::vector<std::string> ids;

  std::size_t size() const { return y.size(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  Dataset subset(std::span<const std::size_t> rows) const;
  /// Rows of each country, in row order, keyed by country code.
  std::map<std::string, std::vector<std::size_t>> rows_by_country() const;

  static Dataset from_clusters(std::span<const ClusterObservation> clusters);
};

/// Coefficient of determination of the (weighted) regression line of y_true
/// on y_pred, i.e. the squared (weighted) Pearson correlation. Throws
/// UndefinedMetric on zero variance.
double r_squared(std::span<const double> y_true, std::span<const double> y_pred,
                 std::span<const double> weights = {});

/// 1 - SSE/SST, for diagnostics. Not affine invariant.
double r_squared_sse(std::span<const double> y_true, std::span<const double> y_pred,
                     std::span<const double> weights = {});

struct FoldResult {
  std::string country;
  int fold = 0;
  /// NaN when the test fold has no variance.
  double r2 = 0.0;
  double mse = 0.0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  /// Spatial protocol only: the row used as the training centroid.
  std::optional<std::size_t> anchor;
};

struct OosPrediction {
  std::size_t row = 0;
  std::string country;
  int fold = 0;
  double y_true = 0.0;
  double y_pred = 0.0;
};

struct CvReport {
  CvProtocol protocol = CvProtocol::basic_kfold;
  GbdtParams params;
  int k = kDefaultFolds;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  /// Mean held-out R^2 over the defined folds of each country.
  std::map<std::string, double> country_r2;
  double pooled_r2 = 0.0;
  /// Weighted mean squared error over every held-out prediction.
  double cv_mse = 0.0;
  std::size_t undefined_folds = 0;
  std::vector<OosPrediction> predictions;

  double mean_country_r2() const;
};

/// Fold index in [0, k) of each of n rows: a seeded shuffle dealt round
/// robin, so fold sizes differ by at most one.
std::vector<int> kfold_assignment(std::size_t n, int k, std::uint64_t seed);

/// Rows of one country split around an anchor: the nearest
/// ceil(n (k-1) / k) rows train, the rest test. Distance ties are broken by
/// row id.
struct SpatialSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
SpatialSplit spatial_split(std::span<const LatLon> centroids, std::span<const std::size_t> rows,
                           std::size_t anchor, int k);

/// Trains the boosted model used inside every CV fold.
WealthModel train_model_for_cv(const Dataset& train, const GbdtParams& params);

CvReport basic_kfold_cv(const Dataset& data, int k, std::uint64_t seed, const GbdtParams& params);
CvReport leave_country_out_cv(const Dataset& data, const GbdtParams& params);
CvReport spatial_cv(const Dataset& data, int k, std::uint64_t seed, const GbdtParams& params);
CvReport run_cv(const Dataset& data, CvProtocol protocol, int k, std::uint64_t seed,
                const GbdtParams& params);

struct GridPoint {
  GbdtParams params;
  double cv_mse = 0.0;
};

struct GridSearchResult {
  GbdtParams best;
  CvReport report;
  std::vector<GridPoint> evaluated;
};

/// The full max_depth x min_child_weight grid over `base`.
std::vector<GbdtParams> default_grid(const GbdtParams& base);

/// Evaluates every grid point and keeps the lowest CV mean squared error;
/// ties prefer the smaller depth, then the smaller min_child_weight.
GridSearchResult grid_search(const Dataset& data, CvProtocol protocol,
                             std::span<const GbdtParams> grid, int k, std::uint64_t seed);

struct UnivariateR2 {
  std::string country;
  std::size_t feature = 0;
  double r2 = 0.0;
};

/// R^2 of the single-feature least-squares regression of the label on each
/// feature, per country. Constant features record 0.
std::vector<UnivariateR2> univariate_importance(const Dataset& data);

struct CrossCountryMatrix {
  std::vector<std::string> countries;
  /// [test][train]
  std::vector<std::vector<double>> r2;
  std::vector<std::vector<double>> mse;
};

/// Entry (i, j) evaluates a model trained on country j against country i.
/// Diagonal entries come from basic k-fold CV within the country.
CrossCountryMatrix cross_country_matrix(const Dataset& data, const GbdtParams& params, int k,
                                        std::uint64_t seed,
                                        const std::map<std::string, GbdtParams>& per_country = {});

struct SubsetR2 {
  /// nullopt for groups whose R^2 is undefined (zero variance).
  std::map<std::string, std::optional<double>> by_group;
  std::optional<double> pooled;
  /// Groups with fewer than two rows.
  std::vector<std::string> skipped;
};

SubsetR2 subset_r_squared(std::span<const double> y_true, std::span<const double> y_pred,
                          std::span<const std::string> groups);

} // namespace povmap
