#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/ingest.hpp"
#include "povmap/pca.hpp"
#include "povmap/random.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace povmap;

namespace {

std::string features_header() {
  std::string h = "quadkey,country";
  for (const auto& n : canonical_feature_names()) {
    h += "," + n;
  }
  return h + "\n";
}

std::string features_row(const std::string& qk, const std::string& country, double v) {
  std::string r = qk + "," + country;
  for (std::size_t i = 0; i < canonical_feature_names().size(); ++i) {
    r += "," + csv::format(v + static_cast<double>(i));
  }
  return r + "\n";
}

FeatureTable table_of(const std::vector<std::string>& countries,
                      const std::vector<std::vector<double>>& rows) {
  FeatureTable t;
  for (std::size_t j = 0; j < rows.front().size(); ++j) {
    t.feature_names.push_back("f" + std::to_string(j));
  }
  t.values = Matrix(0, rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.tiles.push_back(TileId{14, static_cast<std::int64_t>(i), 0});
    t.countries.push_back(countries[i]);
    t.values.append_row(rows[i]);
  }
  return t;
}

// Largest eigenvalue of a symmetric matrix by power iteration, deflated.
std::vector<double> oracle_eigenvalues(std::vector<std::vector<double>> a, std::size_t k) {
  const std::size_t d = a.size();
  std::vector<double> out;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) {
      v[i] = 1.0 + 0.1 * static_cast<double>(i);
    }
    double lambda = 0.0;
    for (int it = 0; it < 5000; ++it) {
      std::vector<double> w(d, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          w[i] += a[i][j] * v[j];
        }
      }
      double norm = 0.0;
      for (double x : w) {
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) {
        lambda = 0.0;
        break;
      }
      lambda = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        lambda += v[i] * w[i];
      }
      for (std::size_t i = 0; i < d; ++i) {
        v[i] = w[i] / norm;
      }
    }
    out.push_back(lambda);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        a[i][j] -= lambda * v[i] * v[j];
      }
    }
  }
  return out;
}

} // namespace

TEST_CASE("csv parsing skips manifests and formats round-trip numbers") {
  std::istringstream in("# povmap manifest\na,b\n1,2\n\n3,\n");
  const auto t = csv::parse(in, "mem.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(csv::to_double(t, 0, 1) == 2.0);
  CHECK(std::isnan(csv::to_optional_double(t, 1, 1)));
  CHECK_THROWS_AS(csv::to_double(t, 1, 1), SchemaError);
  CHECK(t.where(1) == "mem.csv:5");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 0.0}) {
    CHECK(std::stod(csv::format(v)) == v);
  }
  CHECK(csv::format(0.0) == "0");
  CHECK(csv::format(-0.0) == "0");
}

TEST_CASE("feature loading") {
  testutil::TempDir dir;
  SUBCASE("header only gives an empty table") {
    const auto p = testutil::write_file(dir / "f.csv", features_header());
    CHECK(load_features(p).size() == 0);
  }
  SUBCASE("three rows keep their order") {
    const auto p = testutil::write_file(
        dir / "f.csv", features_header() + features_row("00000000000003", "AA", 1) +
                           features_row("00000000000001", "AA", 2) +
                           features_row("00000000000002", "BB", 3));
    const auto t = load_features(p);
    REQUIRE(t.size() == 3);
    CHECK(quadkey(t.tiles[0]) == "00000000000003");
    CHECK(quadkey(t.tiles[2]) == "00000000000002");
    CHECK(t.countries[2] == "BB");
    CHECK(t.values(1, 5) == 7.0);
  }
  SUBCASE("short quadkey names the row") {
    const auto p = testutil::write_file(dir / "f.csv",
                                        features_header() + features_row("0000000000003", "AA", 1));
    try {
      load_features(p);
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("f.csv:2") != std::string::npos);
    }
  }
  SUBCASE("duplicate quadkeys are rejected") {
    const auto p = testutil::write_file(dir / "f.csv",
                                        features_header() + features_row("00000000000003", "AA", 1) +
                                            features_row("00000000000003", "AA", 2));
    CHECK_THROWS_AS(load_features(p), SchemaError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_features(dir / "absent.csv"), Error);
  }
}

TEST_CASE("other loaders") {
  testutil::TempDir dir;
  const auto pop = load_population(testutil::write_file(
      dir / "p.csv", "quadkey,population\n00000000000001,12.5\n"));
  CHECK(pop.at(parse_quadkey("00000000000001")) == 12.5);
  CHECK(pop.at(parse_quadkey("00000000000002")) == 0.0);

  const auto clusters = load_clusters(testutil::write_file(
      dir / "c.csv", "cluster_id,country,lat,lon,urban,survey_year\nc1,AA,1.5,2.5,1,2018\n"));
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].urban);
  CHECK(clusters[0].centroid.lat == 1.5);
  CHECK_THROWS_AS(load_clusters(testutil::write_file(
                      dir / "c2.csv", "cluster_id,country,lat,lon,urban,survey_year\nc1,AA,1.5,2.5,2,2018\n")),
                  SchemaError);

  std::string hh = "household_id,country,cluster_id,lat,lon,weight";
  for (const auto& a : kAssetNames) {
    hh += "," + a;
  }
  hh += "\nh1,AA,c1,,,1";
  for (std::size_t i = 0; i < kAssetNames.size(); ++i) {
    hh += ",1";
  }
  hh += "\n";
  const auto households = load_households(testutil::write_file(dir / "h.csv", hh));
  REQUIRE(households.size() == 1);
  CHECK_FALSE(households[0].location.has_value());

  const auto stats = load_country_stats(testutil::write_file(
      dir / "s.csv", "iso2,gdp_pc_usd,gdp_year,gini,gini_year\nTG,679,2019,0.431,2015\n"));
  CHECK(stats.at("TG").gini == 0.431);
}

TEST_CASE("per-country normalization") {
  const auto t = normalize_per_country(table_of({"AA", "AA", "AA", "BB", "BB", "BB"},
                                                {{1, 5}, {2, 5}, {3, 5}, {1, 0}, {2, 0}, {3, 0}}));
  CHECK(t.values(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-12));
  CHECK(t.values(1, 0) == doctest::Approx(0.0));
  CHECK(t.values(2, 0) == doctest::Approx(1.224744871391589).epsilon(1e-12));
  CHECK(t.values(0, 1) == 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t.values(i, 0) == t.values(i + 3, 0));
  }
  const auto again = normalize_per_country(t);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(again.values(i, j) == doctest::Approx(t.values(i, j)).epsilon(1e-9));
    }
  }
  auto unseen = table_of({"CC"}, {{1, 2}});
  CHECK_THROWS_AS(apply_normalization(unseen, t.norm_stats), InvalidInput);
}

TEST_CASE("normalization property: z-scores have mean 0 and sd 1") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 20);
    std::vector<std::string> c(n, "AA");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back({standard_normal(rng) * 10 + 3, uniform01(rng)});
    }
    const auto t = normalize_per_country(table_of(c, rows));
    for (std::size_t j = 0; j < 2; ++j) {
      double m = 0.0;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        m += t.values(i, j);
        s += t.values(i, j) * t.values(i, j);
      }
      CHECK(std::abs(m / n) < 1e-12);
      CHECK(s / n == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("pca examples") {
  Matrix line(0, 2);
  for (double t : {0.0, 1.0, 2.0, 5.0}) {
    line.append_row(std::vector<double>{t, 2.0 * t + 1.0});
  }
  const auto m = pca_fit(line, 1, false);
  CHECK(m.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));

  // The isotropic cross {(1,0),(0,1),(-1,0),(0,-1)} splits variance evenly.
  Matrix cross(0, 2);
  for (auto p : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}, std::pair{-1.0, 0.0}, std::pair{0.0, -1.0}}) {
    cross.append_row(std::vector<double>{p.first, p.second});
  }
  const auto c = pca_fit(cross, 2, false);
  CHECK(c.explained_variance_ratio[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.explained_variance_ratio[1] == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(pca_fit(cross, 4, false), InvalidInput);
  CHECK_THROWS_AS(pca_fit(cross, 0, false), InvalidInput);
  CHECK_THROWS_AS(pca_fit(Matrix(3, 2, 1.0), 1, false), DegenerateInput);
}

TEST_CASE("pca properties on random data") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 8 + uniform_index(rng, 20);
    const std::size_t d = 2 + uniform_index(rng, 5);
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = standard_normal(rng);
      for (std::size_t j = 0; j < d; ++j) {
        x(i, j) = z * static_cast<double>(j + 1) + standard_normal(rng);
      }
    }
    const std::size_t k = std::min(n - 1, d);
    const auto m = pca_fit(x, k, trial % 2 == 1);

    // Orthonormal components, sign convention, ratios summing to one.
    for (std::size_t a = 0; a < k; ++a) {
      double maxabs = 0.0;
      double signed_max = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dot += m.components(a, j) * m.components(b, j);
        }
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-8).scale(1.0));
      }
      for (std::size_t j = 0; j < d; ++j) {
        if (std::abs(m.components(a, j)) > maxabs) {
          maxabs = std::abs(m.components(a, j));
          signed_max = m.components(a, j);
        }
      }
      CHECK(signed_max > 0.0);
    }
    const double total = std::accumulate(m.explained_variance_ratio.begin(),
                                         m.explained_variance_ratio.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    const auto cum = m.cumulative_explained_variance();
    CHECK(std::is_sorted(cum.begin(), cum.end()));

    // Eigenvalues agree with an independent power-iteration oracle.
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
          cov[a][b] += (x(i, a) - m.column_means[a]) / m.column_scales[a] *
                       (x(i, b) - m.column_means[b]) / m.column_scales[b];
        }
        cov[a][b] /= static_cast<double>(n - 1);
      }
    }
    const auto oracle = oracle_eigenvalues(cov, 1);
    CHECK(m.eigenvalues[0] == doctest::Approx(oracle[0]).epsilon(1e-6));

    // Projection variance equals the eigenvalue; full-rank reconstruction.
    const auto scores = pca_project(m, x);
    for (std::size_t a = 0; a < k; ++a) {
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        var += scores(i, a) * scores(i, a);
      }
      var /= static_cast<double>(n - 1);
      CHECK(var == doctest::Approx(m.eigenvalues[a]).epsilon(1e-6).scale(1.0));
    }
    if (k == d) {
      const auto back = pca_reconstruct(m, scores);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          CHECK(back(i, j) == doctest::Approx(x(i, j)).epsilon(1e-6).scale(1.0));
        }
      }
    }

    std::stringstream ss;
    save_pca(m, ss);
    const auto loaded = load_pca(ss);
    REQUIRE(loaded.k() == m.k());
    CHECK(loaded.eigenvalues == m.eigenvalues);
    CHECK(loaded.components.data()[0] == m.components.data()[0]);
  }
}
