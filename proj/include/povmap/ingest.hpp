#pragma once

#include "povmap/matrix.hpp"
#include "povmap/records.hpp"
#include "povmap/tilegrid.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace povmap {

/// The 12 scalar tile features, in features.csv column order.
const std::vector<std::string>& scalar_feature_names();
/// All 112 model features: the scalars followed by img_pc_000..img_pc_099.
const std::vector<std::string>& canonical_feature_names();
inline constexpr std::size_t kImageComponents = 100;

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Per-(country, feature) mean and population standard deviation.
struct NormStats {
  std::vector<std::string> feature_names;
  std::map<std::string, std::vector<Moments>> by_country;

  bool has_country(const std::string& iso2) const { return by_country.contains(iso2); }
  /// z-score of one value; 0 when the feature is constant in the country.
  double apply(const std::string& country, std::size_t feature, double value) const;
};

/// Per-tile feature records.
struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<TileId> tiles;
  std::vector<std::string> countries;
  Matrix values;
  bool normalized = false;
  NormStats norm_stats;

  std::size_t size() const { return tiles.size(); }
  /// Lookup from tile_key to row.
  std::unordered_map<std::uint64_t, std::size_t> index() const;
};

NormStats fit_normalization(const FeatureTable& table);

/// z-scores every feature within its country and records the statistics.
FeatureTable normalize_per_country(FeatureTable table);

/// Applies previously fitted statistics (prediction time). A country absent
/// from the statistics is an InvalidInput error.
FeatureTable apply_normalization(FeatureTable table, const NormStats& stats);

struct PopulationTable {
  std::unordered_map<std::uint64_t, double> by_tile;

  /// Missing tiles count as unpopulated.
  double at(const TileId& t) const {
    auto it = by_tile.find(tile_key(t));
    return it == by_tile.end() ? 0.0 : it->second;
  }
};

FeatureTable load_features(const std::filesystem::path& path);
PopulationTable load_population(const std::filesystem::path& path);
std::vector<ClusterObservation> load_clusters(const std::filesystem::path& path);
std::vector<HouseholdRecord> load_households(const std::filesystem::path& path);
std::map<std::string, CountryStats> load_country_stats(const std::filesystem::path& path);
std::map<std::string, CountryAttributes> load_country_attributes(const std::filesystem::path& path);
std::vector<AdminAssignment> load_admin_assignment(const std::filesystem::path& path);
NormStats load_norm_stats(const std::filesystem::path& path);

/// Paths of the input files; empty paths are skipped.
struct InputPaths {
  std::filesystem::path features;
  std::filesystem::path population;
  std::filesystem::path country_stats;
  std::filesystem::path clusters;
  std::filesystem::path households;
};

struct InputTables {
  std::optional<FeatureTable> features;
  std::optional<PopulationTable> population;
  std::map<std::string, CountryStats> country_stats;
  std::vector<ClusterObservation> clusters;
  std::vector<HouseholdRecord> households;
};

InputTables load_tables(const InputPaths& paths);

} // namespace povmap

namespace povmap {
void save_norm_stats(const NormStats& stats, const std::filesystem::path& path, std::string_view manifest);
}
