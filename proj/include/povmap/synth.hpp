#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

struct SynthConfig {
  int countries = 3;
  /// Approximate zoom-14 tiles per country (a square block).
  int tiles = 500;
  /// Survey clusters per country; 0 means tiles / 4.
  int clusters = 0;
  int households_per_cluster = 8;
  /// Evaluation-survey households per country; 0 means tiles / 2.
  int eval_households = 0;
  std::uint64_t seed = 0;
  /// Standard deviation of the idiosyncratic wealth noise.
  double noise = 0.3;
  /// Amplitude of a smooth wealth component the features do not see.
  double spatial_noise = 0.0;
  /// Scale on the survey displacement limits (2 km urban, 5 km rural).
  double jitter = 1.0;

  void validate() const;
};

/// Files written by synth_world, relative to the output directory.
struct SynthFiles {
  static constexpr std::string_view features = "features.csv";
  static constexpr std::string_view population = "population.csv";
  static constexpr std::string_view clusters = "clusters.csv";
  static constexpr std::string_view households = "households.csv";
  static constexpr std::string_view eval_households = "eval_households.csv";
  static constexpr std::string_view country_stats = "country_stats.csv";
  static constexpr std::string_view country_attributes = "country_attributes.csv";
  static constexpr std::string_view admin_assignment = "admin_assignment.csv";
  static constexpr std::string_view unit_truth = "unit_truth.csv";
};

/// Admin levels in admin_assignment.csv: 8x8-tile and 4x4-tile blocks.
inline const std::vector<std::string> kSynthLevels = {"admin1", "admin2"};

/// Generates a complete, deterministic input-file set in `dir`.
void synth_world(const SynthConfig& config, const std::filesystem::path& dir,
                 std::string_view manifest);

} // namespace povmap
