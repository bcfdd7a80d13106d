#include "povmap/spatial_index.hpp"

#include "povmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace povmap {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

} // namespace

SpatialIndex::SpatialIndex(std::vector<LatLon> points, double cell_degrees)
    : points_(std::move(points)), cell_(cell_degrees) {
  if (!(cell_ > 0.0 && cell_ <= 90.0)) {
    throw InvalidInput("spatial index cell size must be in (0, 90] degrees");
  }
  rows_ = static_cast<std::int64_t>(std::ceil(180.0 / cell_));
  cols_ = static_cast<std::int64_t>(std::ceil(360.0 / cell_));
  cells_.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cells_.emplace_back(row_of(points_[i].lat) * cols_ + col_of(points_[i].lon), i);
  }
  std::sort(cells_.begin(), cells_.end());
}

std::int64_t SpatialIndex::row_of(double lat) const {
  return std::clamp(static_cast<std::int64_t>(std::floor((lat + 90.0) / cell_)), std::int64_t{0},
                    rows_ - 1);
}

std::int64_t SpatialIndex::col_of(double lon) const {
  return std::clamp(static_cast<std::int64_t>(std::floor((lon + 180.0) / cell_)), std::int64_t{0},
                    cols_ - 1);
}

template <class F> void SpatialIndex::visit(const LatLon& p, double radius_km, F&& f) const {
  const double delta = radius_km / kEarthRadiusKm;
  const double dlat = delta / kDeg;
  const std::int64_t r0 = row_of(std::max(-90.0, p.lat - dlat));
  const std::int64_t r1 = row_of(std::min(90.0, p.lat + dlat));
  // Longitude half-width of a spherical cap; the whole band once the cap
  // reaches a pole.
  bool full = std::abs(p.lat) + dlat >= 90.0 || delta >= std::numbers::pi / 2.0;
  double dlon = 180.0;
  if (!full) {
    const double s = std::sin(delta) / std::cos(p.lat * kDeg);
    if (s >= 1.0) {
      full = true;
    } else {
      dlon = std::asin(s) / kDeg;
    }
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> col_ranges;
  if (full || dlon >= 180.0) {
    col_ranges.emplace_back(0, cols_ - 1);
  } else {
    const double west = p.lon - dlon;
    const double east = p.lon + dlon;
    if (west < -180.0) {
      col_ranges.emplace_back(0, col_of(east));
      col_ranges.emplace_back(col_of(west + 360.0), cols_ - 1);
    } else if (east >= 180.0) {
      col_ranges.emplace_back(col_of(west), cols_ - 1);
      col_ranges.emplace_back(0, col_of(east - 360.0));
    } else {
      col_ranges.emplace_back(col_of(west), col_of(east));
    }
  }
  for (std::int64_t r = r0; r <= r1; ++r) {
    for (const auto& [c0, c1] : col_ranges) {
      auto lo = std::lower_bound(cells_.begin(), cells_.end(),
                                 std::pair<std::int64_t, std::size_t>{r * cols_ + c0, 0});
      const std::int64_t end_key = r * cols_ + c1;
      for (auto it = lo; it != cells_.end() && it->first <= end_key; ++it) {
        const double d = haversine_km(p, points_[it->second]);
        if (d <= radius_km) {
          f(it->second, d);
        }
      }
    }
  }
}

std::vector<std::size_t> SpatialIndex::within(const LatLon& p, double radius_km) const {
  std::vector<std::size_t> out;
  visit(p, radius_km, [&](std::size_t i, double) { out.push_back(i); });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t SpatialIndex::count_within(const LatLon& p, double radius_km) const {
  return within(p, radius_km).size();
}

std::optional<SpatialIndex::Hit> SpatialIndex::nearest(
    const LatLon& p, const std::function<bool(std::size_t)>& keep) const {
  if (points_.empty()) {
    return std::nullopt;
  }
  const double max_km = std::numbers::pi * kEarthRadiusKm;
  double radius = std::max(1.0, cell_ * kDeg * kEarthRadiusKm);
  while (true) {
    std::optional<Hit> best;
    visit(p, radius, [&](std::size_t i, double d) {
      if (keep && !keep(i)) {
        return;
      }
      if (!best || d < best->distance_km || (d == best->distance_km && i < best->index)) {
        best = Hit{i, d};
      }
    });
    if (best || radius >= max_km) {
      return best;
    }
    radius = std::min(radius * 2.0, max_km);
  }
}

} // namespace povmap
