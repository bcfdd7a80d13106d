#pragma once

#include "povmap/tilegrid.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace povmap {

/// Exact radius and nearest-neighbor queries over points on the sphere,
/// bucketed on a regular latitude/longitude grid.
class SpatialIndex {
public:
  explicit SpatialIndex(std::vector<LatLon> points, double cell_degrees = 0.5);

  std::size_t size() const { return points_.size(); }
  const LatLon& point(std::size_t i) const { return points_[i]; }

  /// Indices of points within radius_km (inclusive), in ascending order.
  std::vector<std::size_t> within(const LatLon& p, double radius_km) const;
  std::size_t count_within(const LatLon& p, double radius_km) const;

  struct Hit {
    std::size_t index = 0;
    double distance_km = 0.0;
  };
  /// Nearest point accepted by `keep` (all points when empty); ties go to
  /// the lower index. nullopt when no point is accepted.
  std::optional<Hit> nearest(const LatLon& p,
                             const std::function<bool(std::size_t)>& keep = {}) const;

private:
  std::int64_t row_of(double lat) const;
  std::int64_t col_of(double lon) const;
  template <class F> void visit(const LatLon& p, double radius_km, F&& f) const;

  std::vector<LatLon> points_;
  double cell_ = 0.5;
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  /// (cell key, point index) sorted by key then index.
  std::vector<std::pair<std::int64_t, std::size_t>> cells_;
};

} // namespace povmap
