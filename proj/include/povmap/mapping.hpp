#pragma once

#include "povmap/gbdt.hpp"
#include "povmap/ingest.hpp"
#include "povmap/tilegrid.hpp"

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace povmap {

inline constexpr double kPrivacyThreshold = 50.0;
inline constexpr int kAggregationCapZoom = 8;

/// Estimated wealth of one zoom-14 tile.
struct TileEstimate {
  TileId tile;
  std::string country;
  double rwi = 0.0;
  double population = 0.0;
  /// Zoom of the tile whose pooled estimate this cell carries.
  int aggregation_level = kBaseZoom;
  bool masked = false;
  /// Population of the pool the estimate was computed over.
  double pooled_population = 0.0;
  /// Set by the error model; NaN when absent.
  double error = std::numeric_limits<double>::quiet_NaN();
};

/// One estimate per feature row. Raw features are normalized with the
/// model's statistics first; a country the model has not seen is an error.
std::vector<TileEstimate> predict_tiles(const WealthModel& model, const FeatureTable& features,
                                        const PopulationTable& population = {});

/// Pools tiles with population <= threshold up the quadtree until the pooled
/// population exceeds the threshold. Pools still too small at cap_zoom are
/// masked.
std::vector<TileEstimate> privacy_aggregate(std::vector<TileEstimate> estimates,
                                            double threshold = kPrivacyThreshold,
                                            int cap_zoom = kAggregationCapZoom);

struct AdminAggregate {
  std::string unit_id;
  std::string level;
  /// Country holding most of the unit's population.
  std::string country;
  double mean_rwi = 0.0;
  double population = 0.0;
  std::size_t n_tiles = 0;
};

struct UnitAggregation {
  std::vector<AdminAggregate> units;
  /// Units whose tiles are all unpopulated.
  std::vector<std::string> dropped;
};

/// Population-weighted mean estimate per unit. An empty level keeps every
/// assignment row.
UnitAggregation aggregate_to_units(std::span<const TileEstimate> estimates,
                                   std::span<const AdminAssignment> assignment,
                                   std::string_view level = {});

/// Ground-truth wealth per (level, unit_id).
using UnitTruth = std::map<std::pair<std::string, std::string>, double>;
UnitTruth load_unit_truth(const std::filesystem::path& path);

struct UnitComparison {
  std::string unit_id;
  std::string level;
  std::string country;
  double predicted = 0.0;
  double truth = 0.0;
  double population = 0.0;
};

struct UnitValidation {
  double pooled_r2 = 0.0;
  /// Per-country R^2; nullopt when fewer than two units or no variance.
  std::map<std::string, std::optional<double>> by_country;
  std::vector<UnitComparison> rows;
};

/// Weighted (by unit population, or unit weights) R^2 between predicted and
/// ground-truth unit wealth. Throws InvalidInput with fewer than two matches.
UnitValidation validate_units(std::span<const AdminAggregate> units, const UnitTruth& truth,
                              bool population_weighted = true);

void save_estimates(const std::filesystem::path& path, std::span<const TileEstimate> estimates,
                    std::string_view manifest);
/// Reads rwi.csv. The country is not stored there and is left empty.
std::vector<TileEstimate> load_estimates(const std::filesystem::path& path);
void save_units(const std::filesystem::path& path, std::span<const AdminAggregate> units,
                std::string_view manifest);
void save_validation(const std::filesystem::path& path, const UnitValidation& v,
                     std::string_view manifest);
/// Tile polygons with the rwi.csv columns as properties.
void save_geojson(const std::filesystem::path& path, std::span<const TileEstimate> estimates);

} // namespace povmap
