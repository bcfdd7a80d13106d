#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace povmap {

inline constexpr int kMinZoom = 1;
inline constexpr int kMaxZoom = 23;
/// Zoom level of the ~2.4 km grid cells every estimate lives on.
inline constexpr int kBaseZoom = 14;
inline constexpr double kMaxLatitude = 85.05112878;
inline constexpr double kEarthRadiusKm = 6371.0088;

/// Address of a Bing map tile.
struct TileId {
  int zoom = kBaseZoom;
  std::int64_t x = 0;
  std::int64_t y = 0;

  auto operator<=>(const TileId&) const = default;
};

/// A WGS84 point. Use LatLon::make to get the clamped/normalized form; the
/// raw aggregate is accepted everywhere and normalized on use.
struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  /// Clamps latitude to the Web-Mercator range and wraps longitude into
  /// [-180, 180). Throws InvalidInput on non-finite values.
  static LatLon make(double lat, double lon);

  bool operator==(const LatLon&) const = default;
};

struct LatLonBox {
  double south = 0.0;
  double west = 0.0;
  double north = 0.0;
  double east = 0.0;

  bool contains(const LatLon& p) const {
    return p.lat >= south && p.lat <= north && p.lon >= west && p.lon <= east;
  }
};

bool is_valid(const TileId& t);
/// Throws InvalidLevel / InvalidInput when t breaks the TileId invariants.
void validate(const TileId& t);

TileId latlon_to_tile(const LatLon& p, int zoom);

std::string quadkey(const TileId& t);
TileId parse_quadkey(std::string_view key);

TileId parent(const TileId& t);
std::array<TileId, 4> children(const TileId& t);
/// Ancestor at a coarser zoom (zoom <= t.zoom).
TileId ancestor(const TileId& t, int zoom);

LatLon tile_center(const TileId& t);
LatLonBox tile_bounds(const TileId& t);

/// Position of p inside its tile at the given zoom, as fractions in [0, 1).
struct TileFraction {
  TileId tile;
  double fx = 0.0;
  double fy = 0.0;
};
TileFraction locate(const LatLon& p, int zoom);

double haversine_km(const LatLon& a, const LatLon& b);

/// Packs a tile into a single integer usable as a hash key. Ordering of keys
/// matches (zoom, x, y) ordering.
inline std::uint64_t tile_key(const TileId& t) {
  return (static_cast<std::uint64_t>(t.zoom) << 58) | (static_cast<std::uint64_t>(t.x) << 29) |
         static_cast<std::uint64_t>(t.y);
}

} // namespace povmap
