#pragma once

#include "povmap/matrix.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace povmap {

/// Principal components fitted by eigendecomposition of the sample
/// covariance. Each component is sign-fixed so that its largest-magnitude
/// entry is positive.
struct PcaModel {
  std::vector<double> column_means;
  /// Population standard deviations when fitted with scaling, else all 1.
  std::vector<double> column_scales;
  bool scaled = false;
  /// k x d, rows orthonormal.
  Matrix components;
  /// Sample variance captured by each component (nonincreasing).
  std::vector<double> eigenvalues;
  std::vector<double> explained_variance_ratio;

  std::size_t k() const { return components.rows(); }
  std::size_t dims() const { return components.cols(); }
  std::vector<double> cumulative_explained_variance() const;
};

/// Requires n >= 2 and 1 <= k <= min(n - 1, d). Throws DegenerateInput when
/// every column is constant.
PcaModel pca_fit(const Matrix& data, std::size_t k, bool scale);

/// n x k scores.
Matrix pca_project(const PcaModel& model, const Matrix& rows);

/// Maps scores back to the original column space.
Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores);

void save_pca(const PcaModel& model, std::ostream& out);
PcaModel load_pca(std::istream& in);

} // namespace povmap
