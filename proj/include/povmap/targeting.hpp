#pragma once

#include "povmap/mapping.hpp"
#include "povmap/records.hpp"
#include "povmap/tilegrid.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

/// Budget shares simulated when none are given.
inline constexpr std::array<double, 2> kDefaultBudgets = {0.25, 0.5};

/// A household of the evaluation survey with its ground-truth wealth.
struct TargetHousehold {
  std::string id;
  std::string country;
  LatLon location;
  double true_wealth = 0.0;
  double weight = 1.0;
};

/// eval_households.csv: household_id, country, lat, lon, weight, wealth.
std::vector<TargetHousehold> load_target_households(const std::filesystem::path& path);

/// A survey cluster used by the survey-based schemes.
struct SurveyCluster {
  LatLon location;
  double wealth = 0.0;
  double weight = 1.0;
};

std::vector<SurveyCluster> survey_clusters(std::span<const ClusterObservation> clusters);

enum class SchemeKind { ml_tiles, ml_units, survey_units_exclude, survey_units_impute, knn_clusters };

struct Scheme {
  SchemeKind kind = SchemeKind::ml_tiles;
  /// Admin level for the unit schemes.
  std::string level;
  /// Neighbor count for knn_clusters.
  int k = 1;

  std::string label() const;
};

/// "ml_tiles", "ml_units:<level>", "survey_units_exclude:<level>",
/// "survey_units_impute:<level>", "knn_clusters:<k>".
Scheme parse_scheme(std::string_view text);

struct TargetingInputs {
  std::vector<TileEstimate> estimates;
  std::vector<AdminAssignment> assignment;
  std::vector<SurveyCluster> clusters;
};

struct UnitCounts {
  std::size_t units = 0;
  std::size_t with_estimates = 0;
  std::size_t with_truth = 0;
  std::size_t with_both = 0;
};

struct WealthAssignment {
  /// nullopt for households excluded from evaluation.
  std::vector<std::optional<double>> predicted;
  /// Absent for cluster-based schemes, which have no spatial units.
  std::optional<UnitCounts> counts;
};

/// Predicted wealth of every household under a scheme. Unit schemes throw
/// InvalidInput for a household outside every unit of the level.
WealthAssignment assign_predicted_wealth(std::span<const TargetHousehold> households,
                                         const Scheme& scheme, const TargetingInputs& inputs);

struct BudgetOutcome {
  double budget = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  /// Membership in [0, 1]; at most one household is fractional.
  std::vector<double> selected;
  std::vector<double> true_poor;
};

/// Targets the weighted-poorest share b by predicted wealth, filling the
/// marginal prediction group by a seeded weighted random order so the
/// selected weight equals b times the total exactly.
BudgetOutcome simulate_budget_targeting(std::span<const double> true_wealth,
                                        std::span<const double> predicted,
                                        std::span<const double> weights,
                                        std::span<const std::string> ids, double budget,
                                        std::uint64_t seed);

/// Survey-weighted squared correlation of true and predicted wealth.
double household_r2(std::span<const double> true_wealth, std::span<const double> predicted,
                    std::span<const double> weights);

struct TargetingReport {
  std::string scheme;
  std::optional<UnitCounts> counts;
  std::size_t households = 0;
  /// nullopt when undefined (constant predictions).
  std::optional<double> r2;
  std::vector<BudgetOutcome> outcomes;
};

TargetingReport run_targeting(std::span<const TargetHousehold> households, const Scheme& scheme,
                              const TargetingInputs& inputs, std::span<const double> budgets,
                              std::uint64_t seed);

/// One row per report: the scheme label and the eleven table columns.
void emit_table(const std::filesystem::path& path, std::span<const TargetingReport> reports,
                std::string_view manifest);

} // namespace povmap
