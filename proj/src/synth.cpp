#include "povmap/synth.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/ingest.hpp"
#include "povmap/random.hpp"
#include "povmap/records.hpp"
#include "povmap/tilegrid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/core.h>

namespace povmap {

void SynthConfig::validate() const {
  if (countries < 1 || countries > 26 * 26) {
    throw InvalidInput(fmt::format("--countries must be in [1, {}]", 26 * 26));
  }
  if (tiles < 16) {
    throw InvalidInput("--tiles must be at least 16");
  }
  if (clusters < 0 || eval_households < 0 || households_per_cluster < 2) {
    throw InvalidInput("cluster and household counts must be nonnegative, with at least two "
                       "households per cluster");
  }
  if (!(noise >= 0.0) || !(spatial_noise >= 0.0) || !(jitter >= 0.0)) {
    throw InvalidInput("--noise, --spatial-noise and --jitter must be nonnegative");
  }
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kKmPerDegree = 111.32;
constexpr std::int64_t kGap = 2;
constexpr int kLocationFields = 8;
constexpr double kWorld = static_cast<double>(std::int64_t{1} << kBaseZoom);

/// Sum of plane waves over block-relative coordinates.
struct Field {
  struct Wave {
    double a;
    double ku;
    double kv;
    double phase;
  };
  std::vector<Wave> waves;

  static Field random(Rng& rng, int n, double kmin, double kmax) {
    Field f;
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double k = kmin + (kmax - kmin) * uniform01(rng);
      const double theta = kTwoPi * uniform01(rng);
      const double a = 0.5 + 0.5 * uniform01(rng);
      f.waves.push_back({a, k * std::cos(theta), k * std::sin(theta), kTwoPi * uniform01(rng)});
      norm += a * a / 2.0;
    }
    // Unit variance over a full period.
    for (auto& w : f.waves) {
      w.a /= std::sqrt(norm);
    }
    return f;
  }

  double operator()(double u, double v) const {
    double s = 0.0;
    for (const auto& w : waves) {
      s += w.a * std::sin(kTwoPi * (w.ku * u + w.kv * v) + w.phase);
    }
    return s;
  }
};

struct Country {
  std::string iso2;
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  Field wealth;
  Field hidden;
  std::vector<Field> location;
  double lo = 0.0;
  double hi = 0.0;
};

struct Tile {
  TileId id;
  std::size_t country = 0;
  double wealth = 0.0;
  double truth = 0.0;
  double population = 0.0;
  std::vector<double> features;
};

LatLon from_tile_coords(double x, double y) {
  const double lon = x / kWorld * 360.0 - 180.0;
  const double n = std::numbers::pi - kTwoPi * y / kWorld;
  const double lat = std::atan(std::sinh(n)) * 180.0 / std::numbers::pi;
  return LatLon::make(lat, lon);
}

std::string iso_code(int c) {
  return {static_cast<char>('A' + c / 26), static_cast<char>('A' + c % 26)};
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::size_t pick_weighted(const std::vector<double>& cumulative, Rng& rng) {
  const double u = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

} // namespace

void synth_world(const SynthConfig& config, const std::filesystem::path& dir,
                 std::string_view manifest) {
  config.validate();
  std::filesystem::create_directories(dir);
  const auto side = static_cast<std::int64_t>(std::ceil(std::sqrt(config.tiles)));
  const int n_clusters = config.clusters > 0 ? config.clusters : std::max(config.tiles / 4, 10);
  const int n_eval = config.eval_households > 0 ? config.eval_households
                                                : std::max(config.tiles / 2, 10);

  // Image components: the first 40 mix wealth with a location field, the
  // rest are pure location fields.
  std::array<double, kImageComponents> img_mix{};
  {
    Rng rng(derive_seed(config.seed, "image-mix"));
    for (std::size_t k = 0; k < kImageComponents; ++k) {
      img_mix[k] = k < 40 ? 2.0 * uniform01(rng) - 1.0 : 0.0;
    }
  }

  std::vector<Country> countries;
  std::vector<Tile> tiles;
  for (int c = 0; c < config.countries; ++c) {
    Rng rng(derive_seed(config.seed, "country", static_cast<std::uint64_t>(c)));
    Country k;
    k.iso2 = iso_code(c);
    k.x0 = (std::int64_t{1} << (kBaseZoom - 1)) + c * (side + kGap);
    k.y0 = (std::int64_t{1} << (kBaseZoom - 1)) - side / 2;
    k.wealth = Field::random(rng, 3, 0.25, 0.6);
    k.hidden = Field::random(rng, 4, 1.5, 3.0);
    for (int j = 0; j < kLocationFields; ++j) {
      k.location.push_back(Field::random(rng, 2, 0.3, 1.2));
    }
    k.lo = 1e300;
    k.hi = -1e300;
    for (std::int64_t j = 0; j < side; ++j) {
      for (std::int64_t i = 0; i < side; ++i) {
        const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(side);
        const double v = (static_cast<double>(j) + 0.5) / static_cast<double>(side);
        Tile t;
        t.id = TileId{kBaseZoom, k.x0 + i, k.y0 + j};
        t.country = static_cast<std::size_t>(c);
        t.wealth = k.wealth(u, v);
        t.truth = t.wealth + config.spatial_noise * k.hidden(u, v);
        t.population = std::round(std::exp(5.0 + 0.5 * t.wealth + 1.2 * standard_normal(rng)));
        std::array<double, kLocationFields> loc{};
        for (int f = 0; f < kLocationFields; ++f) {
          loc[static_cast<std::size_t>(f)] = k.location[static_cast<std::size_t>(f)](u, v);
        }
        const double w = t.wealth;
        const double p = t.population;
        t.features = {1.5 + w + 0.3 * loc[0],
                      logistic(2.5 * (w - 0.5)),
                      300.0 + 200.0 * loc[1],
                      2.0 + 1.5 * (loc[2] + 2.0),
                      800.0 + 300.0 * loc[3],
                      p,
                      2.0 * std::exp(0.8 * w),
                      5.0 * std::exp(1.2 * w),
                      0.2 * p * std::exp(0.5 * w),
                      0.15 * p * std::exp(0.3 * w),
                      0.02 * p * std::exp(1.0 * w),
                      std::exp(w) * (1.0 + 0.2 * loc[4])};
        for (std::size_t m = 0; m < kImageComponents; ++m) {
          const double l = loc[m % kLocationFields] * (1.0 + 0.1 * static_cast<double>(m / kLocationFields));
          t.features.push_back(img_mix[m] * w + (1.0 - std::abs(img_mix[m])) * l);
        }
        k.lo = std::min(k.lo, w);
        k.hi = std::max(k.hi, w);
        tiles.push_back(std::move(t));
      }
    }
    countries.push_back(std::move(k));
  }

  const auto per_country = static_cast<std::size_t>(side * side);
  auto tile_at = [&](std::size_t c, std::int64_t x, std::int64_t y) -> const Tile& {
    const auto& k = countries[c];
    return tiles[c * per_country + static_cast<std::size_t>((y - k.y0) * side + (x - k.x0))];
  };
  auto path = [&](std::string_view name) { return dir / std::string(name); };

  {
    csv::Writer w(path(SynthFiles::features), manifest);
    std::vector<std::string> header = {"quadkey", "country"};
    for (const auto& n : canonical_feature_names()) {
      header.push_back(n);
    }
    w.row(header);
    for (const auto& t : tiles) {
      std::vector<std::string> row = {quadkey(t.id), countries[t.country].iso2};
      for (double f : t.features) {
        row.push_back(csv::format(f));
      }
      w.row(row);
    }
    w.close();
  }
  {
    csv::Writer w(path(SynthFiles::population), manifest);
    w.row({"quadkey", "population"});
    for (const auto& t : tiles) {
      w.row({quadkey(t.id), csv::format(t.population)});
    }
    w.close();
  }

  csv::Writer cw(path(SynthFiles::clusters), manifest);
  cw.row({"cluster_id", "country", "lat", "lon", "urban", "survey_year"});
  csv::Writer hw(path(SynthFiles::households), manifest);
  {
    std::vector<std::string> header = {"household_id", "country", "cluster_id", "lat", "lon",
                                       "weight"};
    header.insert(header.end(), kAssetNames.begin(), kAssetNames.end());
    hw.row(header);
  }
  csv::Writer ew(path(SynthFiles::eval_households), manifest);
  ew.row({"household_id", "country", "lat", "lon", "weight", "wealth"});

  for (std::size_t c = 0; c < countries.size(); ++c) {
    const auto& k = countries[c];
    Rng rng(derive_seed(config.seed, "survey", c));
    std::vector<double> cumulative;
    double acc = 0.0;
    for (std::size_t i = 0; i < per_country; ++i) {
      acc += tiles[c * per_country + i].population + 1.0;
      cumulative.push_back(acc);
    }
    auto true_wealth = [&](double x, double y) {
      const double u = (x - static_cast<double>(k.x0)) / static_cast<double>(side);
      const double v = (y - static_cast<double>(k.y0)) / static_cast<double>(side);
      return k.wealth(u, v) + config.spatial_noise * k.hidden(u, v);
    };
    const std::size_t n_assets = kAssetNames.size() - 1;
    auto assets = [&](double wealth) {
      std::vector<std::string> out;
      for (std::size_t a = 0; a < n_assets; ++a) {
        const double threshold =
            k.lo + (static_cast<double>(a) + 0.5) / static_cast<double>(n_assets) * (k.hi - k.lo);
        out.push_back(wealth > threshold ? "1" : "0");
      }
      out.push_back(csv::format(std::round(100.0 * std::max(1.0, 3.0 + 1.2 * wealth)) / 100.0));
      return out;
    };

    for (int cl = 0; cl < n_clusters; ++cl) {
      const auto& t = tiles[c * per_country + pick_weighted(cumulative, rng)];
      const double x = static_cast<double>(t.id.x) + uniform01(rng);
      const double y = static_cast<double>(t.id.y) + uniform01(rng);
      const LatLon truth = from_tile_coords(x, y);
      const bool urban = t.features[1] >= 0.5;
      const double max_km = (urban ? 2.0 : 5.0) * config.jitter;
      const double d = max_km * uniform01(rng);
      const double theta = kTwoPi * uniform01(rng);
      const LatLon shown = LatLon::make(
          truth.lat + d * std::cos(theta) / kKmPerDegree,
          truth.lon + d * std::sin(theta) / (kKmPerDegree * std::cos(truth.lat * std::numbers::pi / 180.0)));
      const std::string id = fmt::format("{}-C{:04d}", k.iso2, cl);
      cw.row({id, k.iso2, csv::format(shown.lat), csv::format(shown.lon), urban ? "1" : "0",
              "2018"});
      const double base = true_wealth(x, y) + config.noise * standard_normal(rng);
      for (int h = 0; h < config.households_per_cluster; ++h) {
        const double wealth = base + config.noise * standard_normal(rng);
        std::vector<std::string> row = {fmt::format("{}-H{:02d}", id, h), k.iso2, id, "", "", "1"};
        const auto a = assets(wealth);
        row.insert(row.end(), a.begin(), a.end());
        hw.row(row);
      }
    }
    for (int e = 0; e < n_eval; ++e) {
      const auto& t = tiles[c * per_country + pick_weighted(cumulative, rng)];
      const double x = static_cast<double>(t.id.x) + uniform01(rng);
      const double y = static_cast<double>(t.id.y) + uniform01(rng);
      const LatLon p = from_tile_coords(x, y);
      const double weight = 0.5 + 1.5 * uniform01(rng);
      const double wealth = true_wealth(x, y) + config.noise * standard_normal(rng);
      ew.row({fmt::format("{}-E{:05d}", k.iso2, e), k.iso2, csv::format(p.lat), csv::format(p.lon),
              csv::format(weight), csv::format(wealth)});
    }
  }
  cw.close();
  hw.close();
  ew.close();

  {
    csv::Writer w(path(SynthFiles::country_stats), manifest);
    w.row({"iso2", "gdp_pc_usd", "gdp_year", "gini", "gini_year"});
    csv::Writer a(path(SynthFiles::country_attributes), manifest);
    a.row({"iso2", "area_km2", "population", "island", "landlocked", "continent",
           "neighbors_with_ground_truth"});
    const std::array<std::string, 3> continents = {"Africa", "Americas", "Asia"};
    for (std::size_t c = 0; c < countries.size(); ++c) {
      Rng rng(derive_seed(config.seed, "country-stats", c));
      const double gdp = std::round(std::exp(7.0 + uniform01(rng)));
      const double gini = std::round(1000.0 * (0.3 + 0.25 * uniform01(rng))) / 1000.0;
      w.row({countries[c].iso2, csv::format(gdp), "2019", csv::format(gini), "2018"});
      double pop = 0.0;
      for (std::size_t i = 0; i < per_country; ++i) {
        pop += tiles[c * per_country + i].population;
      }
      const double tile_km = 2.0 * std::numbers::pi * kEarthRadiusKm / kWorld;
      const bool island = c % 5 == 4;
      const bool landlocked = !island && c % 3 == 1;
      const int neighbors = (c > 0 ? 1 : 0) + (c + 1 < countries.size() ? 1 : 0);
      a.row({countries[c].iso2, csv::format(std::round(static_cast<double>(per_country) * tile_km * tile_km)),
             csv::format(pop), island ? "1" : "0", landlocked ? "1" : "0", continents[c % 3],
             std::to_string(island ? 0 : neighbors)});
    }
    w.close();
    a.close();
  }

  {
    csv::Writer w(path(SynthFiles::admin_assignment), manifest);
    w.row({"quadkey", "level", "unit_id"});
    csv::Writer u(path(SynthFiles::unit_truth), manifest);
    u.row({"level", "unit_id", "value"});
    const std::array<std::int64_t, 2> block = {8, 4};
    for (std::size_t c = 0; c < countries.size(); ++c) {
      const auto& k = countries[c];
      for (std::size_t l = 0; l < kSynthLevels.size(); ++l) {
        const std::int64_t b = block[l];
        const std::int64_t n = (side + b - 1) / b;
        for (std::int64_t bj = 0; bj < n; ++bj) {
          for (std::int64_t bi = 0; bi < n; ++bi) {
            const std::string id = fmt::format("{}-{}-{}-{}", k.iso2, l + 1, bi, bj);
            double pop = 0.0;
            double sum = 0.0;
            for (std::int64_t j = bj * b; j < std::min(side, (bj + 1) * b); ++j) {
              for (std::int64_t i = bi * b; i < std::min(side, (bi + 1) * b); ++i) {
                const auto& t = tile_at(c, k.x0 + i, k.y0 + j);
                w.row({quadkey(t.id), kSynthLevels[l], id});
                pop += t.population;
                sum += t.population * t.truth;
              }
            }
            if (pop > 0.0) {
              u.row({kSynthLevels[l], id, csv::format(sum / pop)});
            }
          }
        }
      }
    }
    w.close();
    u.close();
  }
}

} // namespace povmap
