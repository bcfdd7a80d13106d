#pragma once

#include "povmap/tilegrid.hpp"

#include <optional>
#include <string>
#include <vector>

namespace povmap {

/// The 15 household asset indicators, in households.csv column order.
inline const std::vector<std::string> kAssetNames = {
    "electricity", "telephone",    "automobile",     "motorcycle",     "refrigerator",
    "tv",          "radio",        "water_supply",   "cooking_fuel",   "trash_disposal",
    "toilet",      "floor_material", "wall_material", "roof_material", "rooms"};

struct HouseholdRecord {
  std::string id;
  std::string country;
  std::string cluster_id;
  /// Absent for surveys that mask household locations.
  std::optional<LatLon> location;
  double weight = 1.0;
  std::vector<double> assets;
};

/// One survey cluster (village or neighborhood).
struct ClusterObservation {
  std::string cluster_id;
  std::string country;
  LatLon centroid;
  bool urban = false;
  int survey_year = 0;
  double rwi_label = 0.0;
  int n_households = 0;
  /// Filled by the spatial join.
  std::vector<double> features;
};

/// Per-country GDP per capita and Gini.
struct CountryStats {
  std::string iso2;
  double gdp_pc = 0.0;
  int gdp_year = 0;
  double gini = 0.0;
  int gini_year = 0;
};

/// Country-level covariates used by the error model.
struct CountryAttributes {
  std::string iso2;
  double area_km2 = 0.0;
  double population = 0.0;
  bool island = false;
  bool landlocked = false;
  std::string continent;
  int neighbors_with_ground_truth = 0;
};

struct AdminAssignment {
  TileId tile;
  std::string level;
  std::string unit_id;
};

} // namespace povmap
