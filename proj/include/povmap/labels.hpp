#pragma once

#include "povmap/ingest.hpp"
#include "povmap/records.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace povmap {

/// Jitter-window side lengths, in zoom-14 tiles.
inline constexpr int kUrbanWindow = 2;
inline constexpr int kRuralWindow = 4;

/// First principal component of standardized asset indicators for the
/// households of one country, oriented to rise with electricity access.
/// Scores are aligned with the input and have mean zero.
std::vector<double> household_wealth_index(std::span<const HouseholdRecord> households);

/// Applies household_wealth_index separately within every country. Output
/// is aligned with the input.
std::vector<double> household_wealth_index_by_country(std::span<const HouseholdRecord> households);

struct ClusterLabel {
  double rwi = 0.0;
  int n_households = 0;
};

struct ClusterLabels {
  std::map<std::string, ClusterLabel> by_cluster;
  /// Clusters that had no household with a finite index.
  std::size_t skipped = 0;
};

/// Mean household index per cluster (survey-weighted when `weighted`).
/// `clusters` lists the cluster ids to label; ids with no usable household
/// are skipped and counted.
ClusterLabels cluster_label(std::span<const HouseholdRecord> households,
                            std::span<const double> rwi, std::span<const std::string> clusters,
                            bool weighted = false);

/// Tiles of the join window around a centroid: 2x2 (urban) made of the
/// centroid tile and its neighbors toward the centroid's quadrant, or 4x4
/// (rural) padding that block by one tile on every side. Rows past the map
/// edge are dropped; columns wrap around the antimeridian.
std::vector<TileId> join_window(const LatLon& centroid, bool urban);

/// Population-weighted mean of the feature vectors of window tiles present
/// in `features`; the unweighted mean when the window population is zero.
/// Throws UnjoinableCluster when no window tile has features.
std::vector<double> spatial_join(const ClusterObservation& cluster, const FeatureTable& features,
                                 const std::unordered_map<std::uint64_t, std::size_t>& index,
                                 const PopulationTable& population);

struct TrainingSet {
  std::vector<ClusterObservation> clusters;
  std::size_t unlabeled = 0;
  std::size_t unjoinable = 0;
};

/// Labels every cluster from its households and joins its features.
TrainingSet build_training_set(std::span<const ClusterObservation> clusters,
                               const ClusterLabels& labels, const FeatureTable& features,
                               const PopulationTable& population);

} // namespace povmap
