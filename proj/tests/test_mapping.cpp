#include "povmap/error.hpp"
#include "povmap/mapping.hpp"
#include "povmap/random.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <json.hpp>

using namespace povmap;

namespace {

TileEstimate est(TileId t, double rwi, double pop, std::string country = "AA") {
  TileEstimate e;
  e.tile = t;
  e.rwi = rwi;
  e.population = pop;
  e.country = std::move(country);
  return e;
}

AdminAggregate unit(std::string id, double rwi, double pop, std::string country = "AA") {
  AdminAggregate a;
  a.unit_id = std::move(id);
  a.level = "admin1";
  a.country = std::move(country);
  a.mean_rwi = rwi;
  a.population = pop;
  a.n_tiles = 1;
  return a;
}

} // namespace

TEST_CASE("predict_tiles") {
  WealthModel m;
  m.base_score = 0.25;
  m.params.learning_rate = 0.1;
  m.feature_names = {"a"};
  m.norm_stats.feature_names = {"a"};
  m.norm_stats.by_country["AA"] = {{0.0, 1.0}};
  FeatureTable f;
  f.feature_names = {"a"};
  f.values = Matrix(0, 1);
  CHECK(predict_tiles(m, f).empty());
  for (int i = 0; i < 3; ++i) {
    f.tiles.push_back(TileId{14, i, 0});
    f.countries.push_back("AA");
    f.values.append_row(std::vector<double>{double(i)});
  }
  PopulationTable pop;
  pop.by_tile[tile_key(TileId{14, 1, 0})] = 7.0;
  const auto e = predict_tiles(m, f, pop);
  REQUIRE(e.size() == 3);
  for (const auto& x : e) {
    CHECK(x.rwi == 0.25);
  }
  CHECK(e[1].population == 7.0);
  f.countries[2] = "ZZ";
  CHECK_THROWS_AS(predict_tiles(m, f), InvalidInput);
}

TEST_CASE("privacy aggregation examples") {
  SUBCASE("populous tile unchanged") {
    const auto out = privacy_aggregate({est({14, 10, 10}, 0.3, 60)});
    CHECK(out[0].rwi == 0.3);
    CHECK(out[0].aggregation_level == 14);
    CHECK_FALSE(out[0].masked);
  }
  SUBCASE("four siblings pool at 13") {
    std::vector<TileEstimate> in = {est({14, 10, 10}, 1, 30), est({14, 11, 10}, -1, 30),
                                    est({14, 10, 11}, 0, 0), est({14, 11, 11}, 0, 0)};
    const auto out = privacy_aggregate(in);
    for (const auto& e : out) {
      CHECK(e.rwi == 0.0);
      CHECK(e.aggregation_level == 13);
      CHECK(e.pooled_population == 60.0);
      CHECK_FALSE(e.masked);
    }
  }
  SUBCASE("isolated small tile is masked at the cap") {
    const auto out = privacy_aggregate({est({14, 10, 10}, 0.4, 10), est({14, 5000, 5000}, 1, 100)});
    CHECK(out[0].masked);
    CHECK(out[0].aggregation_level == kAggregationCapZoom);
    CHECK(out[0].rwi == 0.4);
    CHECK_FALSE(out[1].masked);
  }
  SUBCASE("pools stay inside a country") {
    const auto out = privacy_aggregate({est({14, 10, 10}, 1, 30), est({14, 11, 10}, -1, 30, "BB")});
    CHECK(out[0].masked);
    CHECK(out[1].masked);
    CHECK(out[0].rwi == 1.0);
  }
  CHECK_THROWS_AS(privacy_aggregate({}, 50, 15), InvalidLevel);
}

TEST_CASE("privacy aggregation invariants on random fields") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = oracle::random_population_field(rng);
    const auto out = privacy_aggregate(in);
    const auto check = oracle::check_privacy(in, out, kPrivacyThreshold, kAggregationCapZoom);
    CHECK(check.violations == 0);
    CHECK(check.max_mean_error <= 1e-9);
    // Order of the input does not change any cell's result.
    auto shuffled = in;
    shuffle(std::span<TileEstimate>(shuffled), rng);
    auto out2 = privacy_aggregate(shuffled);
    std::map<std::uint64_t, double> a;
    for (const auto& e : out) {
      a[tile_key(e.tile)] = e.rwi;
    }
    for (const auto& e : out2) {
      CHECK(a.at(tile_key(e.tile)) == e.rwi);
    }
  }
}

TEST_CASE("aggregate to units") {
  const std::vector<TileEstimate> tiles = {est({14, 1, 1}, 0, 1), est({14, 1, 2}, 1, 3),
                                           est({14, 1, 3}, 5, 0), est({14, 1, 4}, 2, 9)};
  const std::vector<AdminAssignment> assign = {
      {{14, 1, 1}, "admin1", "u1"}, {{14, 1, 2}, "admin1", "u1"}, {{14, 1, 3}, "admin1", "empty"},
      {{14, 1, 4}, "admin1", "solo"}, {{14, 1, 4}, "admin2", "other"}};
  const auto all = aggregate_to_units(tiles, assign);
  CHECK(all.units.size() == 3);
  const auto r = aggregate_to_units(tiles, assign, "admin1");
  REQUIRE(r.units.size() == 2);
  CHECK(r.dropped == std::vector<std::string>{"empty"});
  for (const auto& u : r.units) {
    if (u.unit_id == "u1") {
      CHECK(u.mean_rwi == doctest::Approx(0.75));
      CHECK(u.population == 4.0);
    } else {
      CHECK(u.unit_id == "solo");
      CHECK(u.mean_rwi == 2.0);
    }
  }
}

TEST_CASE("unit validation") {
  const std::vector<AdminAggregate> units = {unit("a", 0, 1), unit("b", 0, 1), unit("c", 1, 1),
                                             unit("d", 1, 1)};
  UnitTruth truth;
  const std::vector<double> y = {0, 1, 2, 3};
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  for (std::size_t i = 0; i < 4; ++i) {
    truth[{"admin1", ids[i]}] = y[i];
  }
  CHECK(validate_units(units, truth, false).pooled_r2 == doctest::Approx(0.8));
  UnitTruth same;
  UnitTruth affine;
  for (const auto& u : units) {
    same[{"admin1", u.unit_id}] = u.mean_rwi;
    affine[{"admin1", u.unit_id}] = 3 * u.mean_rwi - 2;
  }
  CHECK(validate_units(units, same).pooled_r2 == doctest::Approx(1.0));
  CHECK(validate_units(units, affine).pooled_r2 == doctest::Approx(1.0));
  UnitTruth one;
  one[{"admin1", "a"}] = 1.0;
  CHECK_THROWS_AS(validate_units(units, one), InvalidInput);
}

TEST_CASE("estimate files round-trip") {
  testutil::TempDir dir;
  std::vector<TileEstimate> tiles = {est({14, 9000, 7000}, -0.125, 12.5),
                                     est({14, 8000, 7000}, 1.0 / 3.0, 0)};
  tiles[0].masked = true;
  tiles[0].aggregation_level = 8;
  save_estimates(dir / "rwi.csv", tiles, "# test");
  const auto back = load_estimates(dir / "rwi.csv");
  REQUIRE(back.size() == 2);
  // Sorted by quadkey on write.
  CHECK(back[0].tile == tiles[1].tile);
  CHECK(back[0].rwi == tiles[1].rwi);
  CHECK(back[1].masked);
  CHECK(back[1].aggregation_level == 8);
  CHECK(back[1].population == 12.5);

  save_geojson(dir / "t.geojson", tiles);
  const auto j = nlohmann::json::parse(testutil::read_file(dir / "t.geojson"));
  CHECK(j["type"] == "FeatureCollection");
  CHECK(j["features"].size() == 2);
}
