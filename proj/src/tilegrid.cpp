#include "povmap/tilegrid.hpp"

#include "povmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

namespace povmap {

namespace {

constexpr double kPi = std::numbers::pi;

std::int64_t map_size(int zoom) { return std::int64_t{1} << zoom; }

void check_zoom(int zoom) {
  if (zoom < kMinZoom || zoom > kMaxZoom) {
    throw InvalidLevel(fmt::format("zoom {} outside [{}, {}]", zoom, kMinZoom, kMaxZoom));
  }
}

// Mercator unit-square coordinates, both in [0, 1].
double unit_x(double lon) { return (lon + 180.0) / 360.0; }

double unit_y(double lat) {
  const double s = std::sin(lat * kPi / 180.0);
  return 0.5 - std::log((1.0 + s) / (1.0 - s)) / (4.0 * kPi);
}

double lat_from_unit_y(double y) {
  return 90.0 - 360.0 * std::atan(std::exp(-(0.5 - y) * 2.0 * kPi)) / kPi;
}

double lon_from_unit_x(double x) { return x * 360.0 - 180.0; }

} // namespace

LatLon LatLon::make(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon)) {
    throw InvalidInput("coordinates must be finite");
  }
  lat = std::clamp(lat, -kMaxLatitude, kMaxLatitude);
  if (lon < -180.0 || lon >= 180.0) {
    lon = std::fmod(lon + 180.0, 360.0);
    if (lon < 0.0) {
      lon += 360.0;
    }
    lon -= 180.0;
  }
  return {lat, lon};
}

bool is_valid(const TileId& t) {
  if (t.zoom < kMinZoom || t.zoom > kMaxZoom) {
    return false;
  }
  const auto n = map_size(t.zoom);
  return t.x >= 0 && t.x < n && t.y >= 0 && t.y < n;
}

void validate(const TileId& t) {
  check_zoom(t.zoom);
  if (!is_valid(t)) {
    throw InvalidInput(fmt::format("tile ({}, {}) outside the zoom-{} grid", t.x, t.y, t.zoom));
  }
}

TileFraction locate(const LatLon& raw, int zoom) {
  check_zoom(zoom);
  const LatLon p = LatLon::make(raw.lat, raw.lon);
  const auto n = map_size(zoom);
  const double px = unit_x(p.lon) * static_cast<double>(n);
  const double py = unit_y(p.lat) * static_cast<double>(n);
  const auto x = std::clamp(static_cast<std::int64_t>(std::floor(px)), std::int64_t{0}, n - 1);
  const auto y = std::clamp(static_cast<std::int64_t>(std::floor(py)), std::int64_t{0}, n - 1);
  TileFraction out;
  out.tile = TileId{zoom, x, y};
  out.fx = std::clamp(px - static_cast<double>(x), 0.0, 1.0);
  out.fy = std::clamp(py - static_cast<double>(y), 0.0, 1.0);
  return out;
}

TileId latlon_to_tile(const LatLon& p, int zoom) { return locate(p, zoom).tile; }

std::string quadkey(const TileId& t) {
  validate(t);
  std::string key(static_cast<std::size_t>(t.zoom), '0');
  for (int i = t.zoom; i > 0; --i) {
    const std::int64_t mask = std::int64_t{1} << (i - 1);
    int digit = 0;
    if (t.x & mask) {
      digit += 1;
    }
    if (t.y & mask) {
      digit += 2;
    }
    key[static_cast<std::size_t>(t.zoom - i)] = static_cast<char>('0' + digit);
  }
  return key;
}

TileId parse_quadkey(std::string_view key) {
  if (key.empty()) {
    throw ParseError("empty quadkey");
  }
  if (key.size() > static_cast<std::size_t>(kMaxZoom)) {
    throw ParseError(fmt::format("quadkey '{}' longer than {} digits", key, kMaxZoom));
  }
  TileId t{static_cast<int>(key.size()), 0, 0};
  for (char c : key) {
    if (c < '0' || c > '3') {
      throw ParseError(fmt::format("illegal character '{}' in quadkey '{}'", c, key));
    }
    const int digit = c - '0';
    t.x = (t.x << 1) | (digit & 1);
    t.y = (t.y << 1) | ((digit >> 1) & 1);
  }
  return t;
}

TileId parent(const TileId& t) {
  validate(t);
  if (t.zoom < 2) {
    throw InvalidLevel("zoom-1 tiles have no parent");
  }
  return {t.zoom - 1, t.x / 2, t.y / 2};
}

std::array<TileId, 4> children(const TileId& t) {
  validate(t);
  if (t.zoom > kMaxZoom - 1) {
    throw InvalidLevel(fmt::format("zoom-{} tiles have no children", t.zoom));
  }
  const int z = t.zoom + 1;
  return {TileId{z, 2 * t.x, 2 * t.y}, TileId{z, 2 * t.x + 1, 2 * t.y},
          TileId{z, 2 * t.x, 2 * t.y + 1}, TileId{z, 2 * t.x + 1, 2 * t.y + 1}};
}

TileId ancestor(const TileId& t, int zoom) {
  validate(t);
  check_zoom(zoom);
  if (zoom > t.zoom) {
    throw InvalidLevel(fmt::format("zoom {} is finer than tile zoom {}", zoom, t.zoom));
  }
  const int shift = t.zoom - zoom;
  return {zoom, t.x >> shift, t.y >> shift};
}

LatLonBox tile_bounds(const TileId& t) {
  validate(t);
  const double n = static_cast<double>(map_size(t.zoom));
  LatLonBox box;
  box.west = lon_from_unit_x(static_cast<double>(t.x) / n);
  box.east = lon_from_unit_x(static_cast<double>(t.x + 1) / n);
  box.north = lat_from_unit_y(static_cast<double>(t.y) / n);
  box.south = lat_from_unit_y(static_cast<double>(t.y + 1) / n);
  return box;
}

LatLon tile_center(const TileId& t) {
  validate(t);
  const double n = static_cast<double>(map_size(t.zoom));
  return {lat_from_unit_y((static_cast<double>(t.y) + 0.5) / n),
          lon_from_unit_x((static_cast<double>(t.x) + 0.5) / n)};
}

double haversine_km(const LatLon& a, const LatLon& b) {
  constexpr double rad = kPi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

} // namespace povmap
