#include "povmap/error.hpp"
#include "povmap/random.hpp"
#include "povmap/tilegrid.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace povmap;

namespace {

// Quadkey built digit by digit from the bit pattern, independent of the library.
std::string oracle_quadkey(int zoom, std::int64_t x, std::int64_t y) {
  std::string s;
  for (int i = zoom; i >= 1; --i) {
    const int bit = i - 1;
    s += static_cast<char>('0' + (((y >> bit) & 1) << 1) + ((x >> bit) & 1));
  }
  return s;
}

// Chord-length great-circle distance through 3-D unit vectors.
double oracle_distance_km(const LatLon& a, const LatLon& b) {
  auto vec = [](const LatLon& p) {
    const double la = p.lat * std::numbers::pi / 180.0;
    const double lo = p.lon * std::numbers::pi / 180.0;
    return std::array<double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo),
                                 std::sin(la)};
  };
  const auto u = vec(a);
  const auto v = vec(b);
  const double chord = std::hypot(u[0] - v[0], u[1] - v[1], u[2] - v[2]);
  return 2.0 * std::asin(std::min(1.0, chord / 2.0)) * kEarthRadiusKm;
}

} // namespace

TEST_CASE("latlon_to_tile reference points") {
  CHECK(latlon_to_tile(LatLon::make(0, 0), 14) == TileId{14, 8192, 8192});
  CHECK(latlon_to_tile(LatLon::make(0, -180), 1) == TileId{1, 0, 1});
  CHECK(latlon_to_tile(LatLon::make(86, 0), 14) == latlon_to_tile(LatLon::make(85.05112878, 0), 14));
  CHECK_THROWS_AS(LatLon::make(std::nan(""), 0), InvalidInput);
  CHECK_THROWS_AS(LatLon::make(0, INFINITY), InvalidInput);
  CHECK(LatLon::make(0, 180).lon == -180.0);
  CHECK(LatLon::make(95, 0).lat == kMaxLatitude);
}

TEST_CASE("quadkey examples") {
  CHECK(quadkey(TileId{3, 3, 5}) == "213");
  CHECK(quadkey(TileId{1, 0, 0}) == "0");
  CHECK(parse_quadkey("213") == TileId{3, 3, 5});
  CHECK_THROWS_AS(parse_quadkey(""), ParseError);
  CHECK_THROWS_AS(parse_quadkey("0124"), ParseError);
  CHECK_THROWS_AS(parse_quadkey("01a"), ParseError);
  CHECK_THROWS_AS(parse_quadkey(std::string(24, '0')), ParseError);
}

TEST_CASE("quadkey matches the bit-interleaving oracle") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const int zoom = 1 + static_cast<int>(uniform_index(rng, 23));
    const auto n = std::uint64_t{1} << zoom;
    const auto x = static_cast<std::int64_t>(uniform_index(rng, n));
    const auto y = static_cast<std::int64_t>(uniform_index(rng, n));
    REQUIRE(quadkey(TileId{zoom, x, y}) == oracle_quadkey(zoom, x, y));
  }
}

TEST_CASE("parent and children") {
  CHECK(parent(TileId{14, 8193, 8192}) == TileId{13, 4096, 4096});
  CHECK(parent(parse_quadkey("213")) == parse_quadkey("21"));
  CHECK_THROWS_AS(parent(TileId{1, 0, 0}), InvalidLevel);
  CHECK_THROWS_AS(children(TileId{23, 0, 0}), InvalidLevel);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const int zoom = 2 + static_cast<int>(uniform_index(rng, 22));
    const auto n = std::uint64_t{1} << zoom;
    const TileId t{zoom, static_cast<std::int64_t>(uniform_index(rng, n)),
                   static_cast<std::int64_t>(uniform_index(rng, n))};
    const auto kids = children(parent(t));
    REQUIRE(std::find(kids.begin(), kids.end(), t) != kids.end());
    REQUIRE(quadkey(parent(t)) == quadkey(t).substr(0, quadkey(t).size() - 1));
    REQUIRE(ancestor(t, 1) == parse_quadkey(quadkey(t).substr(0, 1)));
  }
}

TEST_CASE("tile center and bounds") {
  const auto c = tile_center(TileId{1, 0, 0});
  CHECK(c.lat == doctest::Approx(66.51326044311186).epsilon(1e-12));
  CHECK(c.lon == -90.0);
  const auto b = tile_bounds(TileId{14, 8192, 8192});
  CHECK(b.west == 0.0);
  CHECK(b.north == doctest::Approx(0.0).epsilon(1e-12));
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const int zoom = 1 + static_cast<int>(uniform_index(rng, 23));
    const auto n = std::uint64_t{1} << zoom;
    const TileId t{zoom, static_cast<std::int64_t>(uniform_index(rng, n)),
                   static_cast<std::int64_t>(uniform_index(rng, n))};
    REQUIRE(latlon_to_tile(tile_center(t), zoom) == t);
  }
}

TEST_CASE("locate reports the in-tile fraction") {
  const auto f = locate(tile_center(TileId{14, 100, 200}), 14);
  CHECK(f.tile == TileId{14, 100, 200});
  CHECK(f.fx == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(f.fy == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("haversine") {
  const auto p = LatLon::make(12.5, -3.25);
  CHECK(haversine_km(p, p) == 0.0);
  CHECK(haversine_km(LatLon::make(0, 0), LatLon::make(0, 1)) ==
        doctest::Approx(std::numbers::pi / 180.0 * 6371.0088).epsilon(1e-12));
  Rng rng(9);
  auto random_point = [&] {
    return LatLon::make(170.0 * uniform01(rng) - 85.0, 360.0 * uniform01(rng) - 180.0);
  };
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_point();
    const auto b = random_point();
    const auto c = random_point();
    const double ab = haversine_km(a, b);
    REQUIRE(ab == doctest::Approx(haversine_km(b, a)).epsilon(1e-12));
    REQUIRE(ab == doctest::Approx(oracle_distance_km(a, b)).epsilon(1e-9).scale(1.0));
    REQUIRE(ab <= haversine_km(a, c) + haversine_km(c, b) + 1e-9);
  }
}
