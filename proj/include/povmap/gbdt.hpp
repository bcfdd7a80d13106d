#pragma once

#include "povmap/ingest.hpp"
#include "povmap/matrix.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace povmap {

/// Hyperparameter grid searched during tuning.
inline constexpr std::array<int, 7> kMaxDepthGrid = {1, 3, 5, 10, 15, 20, 30};
inline constexpr std::array<double, 5> kMinChildWeightGrid = {1, 3, 5, 7, 10};

struct GbdtParams {
  int max_depth = 5;
  double min_child_weight = 1.0;
  int n_trees = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;

  /// Throws InvalidInput on out-of-range values.
  void validate() const;
  bool operator==(const GbdtParams&) const = default;
};

/// Internal nodes send value < threshold left. Leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double gain = 0.0;
  double value = 0.0;
  double weight_sum = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// Regression tree stored in preorder; the root is nodes[0].
struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> row) const;
  int depth() const;
};

/// Grows one squared-error regression tree on (residuals, weights) with exact
/// greedy split search. Split gain is S_L^2/W_L + S_R^2/W_R - S^2/W; ties go
/// to the lowest feature index, then the lowest threshold.
Tree fit_tree(const Matrix& x, std::span<const double> residuals, std::span<const double> weights,
              const GbdtParams& params);

struct WealthModel {
  double base_score = 0.0;
  std::vector<Tree> trees;
  GbdtParams params;
  std::vector<std::string> feature_names;
  /// Tile-level normalization the training features were built with.
  NormStats norm_stats;
  std::size_t n_rows = 0;
  /// Weighted training MSE after each round (index 0 is the base score).
  /// Not serialized.
  std::vector<double> loss_history;

  double predict_row(std::span<const double> row) const;
};

/// Boosts params.n_trees trees from the weighted mean of y. Empty weights
/// mean unit weights.
WealthModel train(const Matrix& x, std::span<const double> y, std::span<const double> weights,
                  const GbdtParams& params);

std::vector<double> predict(const WealthModel& model, const Matrix& rows);

struct FeatureImportance {
  std::vector<double> mean_gain;
  std::vector<std::size_t> split_count;
};

/// Mean split gain per feature over every internal node of the ensemble.
/// n_features defaults to the model's feature_names size.
FeatureImportance gain_importance(const WealthModel& model, std::size_t n_features = 0);

void save_model(const WealthModel& model, std::ostream& out);
WealthModel load_model(std::istream& in);

} // namespace povmap
