#include "povmap/error.hpp"
#include "povmap/random.hpp"
#include "povmap/targeting.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace povmap;

namespace {

constexpr double kKmPerDegree = 111.1950802335329;

std::vector<std::string> make_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("h" + std::to_string(100 + i));
  }
  return ids;
}

TargetHousehold hh(std::string id, LatLon p, double wealth, double weight = 1.0) {
  return {std::move(id), "AA", p, wealth, weight};
}

} // namespace

TEST_CASE("scheme parsing") {
  CHECK(parse_scheme("ml_tiles").kind == SchemeKind::ml_tiles);
  CHECK(parse_scheme("ml_units:admin2").level == "admin2");
  CHECK(parse_scheme("survey_units_impute:admin1").kind == SchemeKind::survey_units_impute);
  CHECK(parse_scheme("knn_clusters:5").k == 5);
  CHECK(parse_scheme("survey_units_exclude:admin1").label() == "survey_units_exclude:admin1");
  CHECK_THROWS_AS(parse_scheme("knn_clusters:0"), InvalidInput);
  CHECK_THROWS_AS(parse_scheme("ml_units"), InvalidInput);
  CHECK_THROWS_AS(parse_scheme("lottery"), InvalidInput);
}

TEST_CASE("budget targeting examples") {
  const std::vector<double> truth = {1, 2, 3, 4};
  const auto ids = make_ids(4);
  const auto grouped = simulate_budget_targeting(truth, std::vector<double>{0, 0, 1, 1}, {}, ids, 0.5, 1);
  CHECK(grouped.accuracy == 1.0);
  CHECK(grouped.precision == 1.0);
  CHECK(grouped.recall == 1.0);
  const auto oracle = simulate_budget_targeting(truth, truth, {}, ids, 0.25, 1);
  CHECK(oracle.accuracy == 1.0);
  const auto reversed = simulate_budget_targeting(truth, std::vector<double>{4, 3, 2, 1}, {}, ids, 0.5, 1);
  CHECK(reversed.precision == 0.0);
  CHECK(reversed.accuracy == 0.0);
  CHECK_THROWS_AS(simulate_budget_targeting(truth, truth, {}, ids, 1.0, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_budget_targeting(truth, truth, {}, ids, 0.0, 1), InvalidInput);
  CHECK_THROWS_AS(simulate_budget_targeting(truth, std::vector<double>{0, 0, NAN, 1}, {}, ids, 0.5, 1),
                  InvalidInput);
}

TEST_CASE("budget targeting properties on weighted instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<double> truth(n), pred(n), w(n);
    const std::size_t groups = 1 + uniform_index(rng, 5);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = std::floor(10 * uniform01(rng));
      pred[i] = static_cast<double>(uniform_index(rng, groups));
      w[i] = 0.1 + 3 * uniform01(rng);
    }
    const auto ids = make_ids(n);
    for (double b : {0.25, 0.5, 0.1 + 0.8 * uniform01(rng)}) {
      const auto o = simulate_budget_targeting(truth, pred, w, ids, b, trial);
      CHECK(o.precision == o.recall);
      CHECK(o.accuracy >= 0.0);
      CHECK(o.accuracy <= 1.0);
      double total = 0, sel = 0, poor = 0, overlap = 0;
      std::size_t fractional = 0;
      for (std::size_t i = 0; i < n; ++i) {
        total += w[i];
        sel += w[i] * o.selected[i];
        poor += w[i] * o.true_poor[i];
        overlap += w[i] * std::min(o.selected[i], o.true_poor[i]);
        fractional += (o.selected[i] > 0 && o.selected[i] < 1) ? 1 : 0;
      }
      CHECK(fractional <= 1);
      CHECK(std::abs(sel - b * total) <= 1e-9 * total);
      CHECK(std::abs(poor - b * total) <= 1e-9 * total);
      CHECK(o.accuracy == doctest::Approx(1 - 2 * (b * total - overlap) / total).epsilon(1e-12));
      // No household outside the selection is predicted strictly poorer than one inside.
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (o.selected[i] > 0 && o.selected[j] < 1) {
            CHECK(pred[i] <= pred[j]);
          }
        }
      }
      const auto again = simulate_budget_targeting(truth, pred, w, ids, b, trial);
      CHECK(again.selected == o.selected);
      const auto perfect = simulate_budget_targeting(truth, truth, w, ids, b, trial);
      CHECK(perfect.accuracy == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(perfect.accuracy >= o.accuracy - 1e-12);
    }
  }
}

TEST_CASE("budget targeting matches brute-force enumeration") {
  Rng rng(77);
  int checked = 0;
  while (checked < 300) {
    const std::size_t n = 2 + uniform_index(rng, 9);
    const double b = (n % 4 == 0 && uniform01(rng) < 0.5) ? 0.25 : 0.5;
    if (n % 2 == 1) {
      continue;
    }
    std::vector<double> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<double>(uniform_index(rng, 6));
      pred[i] = static_cast<double>(uniform_index(rng, 3));
    }
    const auto ids = make_ids(n);
    const auto o = simulate_budget_targeting(truth, pred, {}, ids, b, checked);
    CHECK(oracle::brute_force_targeting(truth, pred, static_cast<std::size_t>(b * n), o.true_poor,
                                        o.selected, o.accuracy, o.precision, o.recall));
    ++checked;
  }
}

TEST_CASE("household R^2") {
  CHECK(household_r2(std::vector<double>{0, 1, 2, 3}, std::vector<double>{0, 0, 1, 1},
                     std::vector<double>{1, 1, 1, 1}) == doctest::Approx(0.8));
  CHECK(household_r2(std::vector<double>{0, 0, 5, 5}, std::vector<double>{1, 1, 2, 2}, {}) ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(household_r2(std::vector<double>{0, 1}, std::vector<double>{2, 2}, {}),
                  UndefinedMetric);
}

TEST_CASE("wealth assignment schemes") {
  const LatLon origin{0.0, 0.0};
  TargetingInputs in;
  SUBCASE("tile estimates") {
    TileEstimate e;
    e.tile = latlon_to_tile(origin, kBaseZoom);
    e.rwi = 0.3;
    in.estimates = {e};
    const auto a = assign_predicted_wealth(std::vector<TargetHousehold>{hh("a", origin, 1),
                                                                        hh("b", {10, 10}, 1)},
                                           parse_scheme("ml_tiles"), in);
    CHECK(*a.predicted[0] == 0.3);
    CHECK_FALSE(a.predicted[1].has_value());
    CHECK(a.counts->units == a.counts->with_estimates);
  }
  SUBCASE("nearest clusters") {
    in.clusters = {{LatLon{5.0 / kKmPerDegree, 0}, 9.0, 1.0}, {LatLon{1.0 / kKmPerDegree, 0}, 2.0, 1.0}};
    const std::vector<TargetHousehold> one = {hh("a", origin, 1)};
    CHECK(*assign_predicted_wealth(one, parse_scheme("knn_clusters:1"), in).predicted[0] == 2.0);
    in.clusters.clear();
    for (int i = 1; i <= 5; ++i) {
      in.clusters.push_back({LatLon{i * 3.0, 0}, double(i), 1.0});
    }
    const auto five = assign_predicted_wealth(one, parse_scheme("knn_clusters:5"), in);
    CHECK(*five.predicted[0] == doctest::Approx(3.0));
    CHECK_FALSE(five.counts.has_value());
    CHECK_THROWS_AS(assign_predicted_wealth(one, parse_scheme("knn_clusters:6"), in), InvalidInput);
  }
  SUBCASE("survey units, excluded and imputed") {
    // Three units, each one tile; the survey covers u1 and u3 only.
    const TileId t1 = latlon_to_tile({0, 0}, kBaseZoom);
    const TileId t2 = latlon_to_tile({0, 0.1}, kBaseZoom);
    const TileId t3 = latlon_to_tile({0, 1.0}, kBaseZoom);
    in.assignment = {{t1, "admin1", "u1"}, {t2, "admin1", "u2"}, {t3, "admin1", "u3"}};
    for (const auto& t : {t1, t2, t3}) {
      TileEstimate e;
      e.tile = t;
      e.population = 100;
      e.rwi = static_cast<double>(t.x % 7);
      in.estimates.push_back(e);
    }
    in.clusters = {{tile_center(t1), 1.0, 1.0}, {tile_center(t1), 3.0, 3.0}, {tile_center(t3), 7.0, 1.0}};
    const std::vector<TargetHousehold> h = {hh("a", tile_center(t1), 0), hh("b", tile_center(t2), 0),
                                            hh("c", tile_center(t3), 0)};
    const auto ex = assign_predicted_wealth(h, parse_scheme("survey_units_exclude:admin1"), in);
    CHECK(*ex.predicted[0] == doctest::Approx(2.5));
    CHECK_FALSE(ex.predicted[1].has_value());
    CHECK(*ex.predicted[2] == 7.0);
    CHECK(ex.counts->units == 3);
    CHECK(ex.counts->with_estimates == 2);
    const auto im = assign_predicted_wealth(h, parse_scheme("survey_units_impute:admin1"), in);
    CHECK(*im.predicted[1] == doctest::Approx(2.5));
    const auto ml = assign_predicted_wealth(h, parse_scheme("ml_units:admin1"), in);
    CHECK(*ml.predicted[2] == static_cast<double>(t3.x % 7));
    CHECK(ml.counts->with_estimates == 3);
    const std::vector<TargetHousehold> lost = {hh("z", {40, 40}, 0)};
    CHECK_THROWS_AS(assign_predicted_wealth(lost, parse_scheme("ml_units:admin1"), in), InvalidInput);
  }
}

TEST_CASE("targeting table") {
  testutil::TempDir dir;
  std::vector<TargetHousehold> households;
  TargetingInputs in;
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    const LatLon p{0.01 * i, 0.0};
    households.push_back(hh("h" + std::to_string(i), p, i + standard_normal(rng), 1 + uniform01(rng)));
    TileEstimate e;
    e.tile = latlon_to_tile(p, kBaseZoom);
    e.rwi = i;
    e.population = 10;
    in.estimates.push_back(e);
    in.clusters.push_back({p, double(i), 1.0});
  }
  const std::vector<double> budgets = {0.25, 0.5};
  const std::vector<TargetingReport> reports = {
      run_targeting(households, parse_scheme("ml_tiles"), in, budgets, 3),
      run_targeting(households, parse_scheme("knn_clusters:1"), in, budgets, 3)};
  for (const auto& r : reports) {
    REQUIRE(r.outcomes.size() == 2);
    CHECK(r.households == 40);
    for (const auto& o : r.outcomes) {
      CHECK(o.precision == o.recall);
    }
  }
  emit_table(dir / "t.csv", reports, "# test");
  const auto text = testutil::read_file(dir / "t.csv");
  std::istringstream lines(text);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    CHECK(std::count(line.begin(), line.end(), ',') == 11);
    ++rows;
  }
  CHECK(rows == 3);
  CHECK(text.find("accuracy_25") != std::string::npos);
  CHECK(text.find("precision_recall_50") != std::string::npos);
}
