#include "povmap/ingest.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"

#include <cmath>
#include <set>

#include <fmt/core.h>

namespace povmap {

const std::vector<std::string>& scalar_feature_names() {
  static const std::vector<std::string> names = {
      "road_density",  "urban_builtup",  "elevation",       "slope",
      "precipitation", "population",     "cell_towers",     "wifi_points",
      "mobile_devices", "android_devices", "ios_devices",   "radiance"};
  return names;
}

const std::vector<std::string>& canonical_feature_names() {
  static const std::vector<std::string> names = [] {
    auto v = scalar_feature_names();
    for (std::size_t i = 0; i < kImageComponents; ++i) {
      v.push_back(fmt::format("img_pc_{:03d}", i));
    }
    return v;
  }();
  return names;
}

double NormStats::apply(const std::string& country, std::size_t feature, double value) const {
  auto it = by_country.find(country);
  if (it == by_country.end()) {
    throw InvalidInput(fmt::format("country '{}' has no normalization statistics", country));
  }
  const Moments& m = it->second.at(feature);
  return m.sd > 0.0 ? (value - m.mean) / m.sd : 0.0;
}

std::unordered_map<std::uint64_t, std::size_t> FeatureTable::index() const {
  std::unordered_map<std::uint64_t, std::size_t> idx;
  idx.reserve(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    idx.emplace(tile_key(tiles[i]), i);
  }
  return idx;
}

NormStats fit_normalization(const FeatureTable& table) {
  const std::size_t d = table.values.cols();
  NormStats stats;
  stats.feature_names = table.feature_names;
  std::map<std::string, std::vector<std::size_t>> rows_by_country;
  for (std::size_t i = 0; i < table.size(); ++i) {
    rows_by_country[table.countries[i]].push_back(i);
  }
  for (const auto& [country, rows] : rows_by_country) {
    std::vector<Moments> moments(d);
    const double n = static_cast<double>(rows.size());
    for (std::size_t f = 0; f < d; ++f) {
      double s = 0.0;
      for (auto r : rows) {
        s += table.values(r, f);
      }
      const double m = s / n;
      double ss = 0.0;
      for (auto r : rows) {
        const double dv = table.values(r, f) - m;
        ss += dv * dv;
      }
      double sd = std::sqrt(ss / n);
      // Spread that is only rounding noise is a constant feature.
      if (sd <= 1e-12 * std::max(1.0, std::abs(m))) {
        sd = 0.0;
      }
      moments[f] = {m, sd};
    }
    stats.by_country.emplace(country, std::move(moments));
  }
  return stats;
}

FeatureTable apply_normalization(FeatureTable table, const NormStats& stats) {
  if (stats.feature_names.size() != table.values.cols()) {
    throw InvalidInput(fmt::format("normalization has {} features, table has {}",
                                   stats.feature_names.size(), table.values.cols()));
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& country = table.countries[i];
    auto values = table.values.row(i);
    for (std::size_t f = 0; f < values.size(); ++f) {
      values[f] = stats.apply(country, f, values[f]);
    }
  }
  table.normalized = true;
  table.norm_stats = stats;
  return table;
}

FeatureTable normalize_per_country(FeatureTable table) {
  auto stats = fit_normalization(table);
  return apply_normalization(std::move(table), stats);
}

namespace {

TileId parse_base_tile(const csv::Table& t, std::size_t row, std::size_t col) {
  const std::string& key = t.rows[row][col];
  if (key.size() != static_cast<std::size_t>(kBaseZoom)) {
    throw SchemaError(fmt::format("{}: quadkey '{}' must have {} digits", t.where(row), key,
                                  kBaseZoom));
  }
  try {
    return parse_quadkey(key);
  } catch (const ParseError& e) {
    throw SchemaError(fmt::format("{}: {}", t.where(row), e.what()));
  }
}

bool parse_flag(const csv::Table& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows[row][col];
  if (s == "0") {
    return false;
  }
  if (s == "1") {
    return true;
  }
  throw SchemaError(fmt::format("{}: column '{}' must be 0 or 1, found '{}'", t.where(row),
                                t.header[col], s));
}

} // namespace

FeatureTable load_features(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  std::vector<std::string> expected = {"quadkey", "country"};
  for (const auto& n : canonical_feature_names()) {
    expected.push_back(n);
  }
  csv::require_header(t, expected);
  if (t.header.size() != expected.size()) {
    throw SchemaError(fmt::format("{}: unexpected extra columns after '{}'", t.source,
                                  expected.back()));
  }
  FeatureTable table;
  table.feature_names = canonical_feature_names();
  table.values = Matrix(0, table.feature_names.size());
  std::set<std::uint64_t> seen;
  std::vector<double> row(table.feature_names.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const TileId tile = parse_base_tile(t, r, 0);
    if (!seen.insert(tile_key(tile)).second) {
      throw SchemaError(fmt::format("{}: duplicate quadkey '{}'", t.where(r), t.rows[r][0]));
    }
    for (std::size_t f = 0; f < row.size(); ++f) {
      row[f] = csv::to_double(t, r, f + 2);
    }
    table.tiles.push_back(tile);
    table.countries.push_back(t.rows[r][1]);
    table.values.append_row(row);
  }
  return table;
}

PopulationTable load_population(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"quadkey", "population"});
  PopulationTable pop;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const TileId tile = parse_base_tile(t, r, 0);
    const double v = csv::to_double(t, r, 1);
    if (v < 0.0) {
      throw SchemaError(fmt::format("{}: negative population", t.where(r)));
    }
    if (!pop.by_tile.emplace(tile_key(tile), v).second) {
      throw SchemaError(fmt::format("{}: duplicate quadkey '{}'", t.where(r), t.rows[r][0]));
    }
  }
  return pop;
}

std::vector<ClusterObservation> load_clusters(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"cluster_id", "country", "lat", "lon", "urban", "survey_year"});
  std::vector<ClusterObservation> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ClusterObservation c;
    c.cluster_id = t.rows[r][0];
    if (!seen.insert(c.cluster_id).second) {
      throw SchemaError(fmt::format("{}: duplicate cluster_id '{}'", t.where(r), c.cluster_id));
    }
    c.country = t.rows[r][1];
    c.centroid = LatLon::make(csv::to_double(t, r, 2), csv::to_double(t, r, 3));
    c.urban = parse_flag(t, r, 4);
    c.survey_year = static_cast<int>(csv::to_int(t, r, 5));
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<HouseholdRecord> load_households(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  std::vector<std::string> expected = {"household_id", "country", "cluster_id", "lat", "lon",
                                       "weight"};
  for (const auto& a : kAssetNames) {
    expected.push_back(a);
  }
  csv::require_header(t, expected);
  std::vector<HouseholdRecord> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    HouseholdRecord h;
    h.id = t.rows[r][0];
    if (!seen.insert(h.id).second) {
      throw SchemaError(fmt::format("{}: duplicate household_id '{}'", t.where(r), h.id));
    }
    h.country = t.rows[r][1];
    h.cluster_id = t.rows[r][2];
    const double lat = csv::to_optional_double(t, r, 3);
    const double lon = csv::to_optional_double(t, r, 4);
    if (std::isnan(lat) != std::isnan(lon)) {
      throw SchemaError(fmt::format("{}: lat and lon must both be present or both empty",
                                    t.where(r)));
    }
    if (!std::isnan(lat)) {
      h.location = LatLon::make(lat, lon);
    }
    h.weight = csv::to_double(t, r, 5);
    if (h.weight < 0.0) {
      throw SchemaError(fmt::format("{}: negative survey weight", t.where(r)));
    }
    for (std::size_t a = 0; a < kAssetNames.size(); ++a) {
      h.assets.push_back(csv::to_double(t, r, 6 + a));
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::map<std::string, CountryStats> load_country_stats(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"iso2", "gdp_pc_usd", "gdp_year", "gini", "gini_year"});
  std::map<std::string, CountryStats> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    CountryStats s;
    s.iso2 = t.rows[r][0];
    s.gdp_pc = csv::to_double(t, r, 1);
    s.gdp_year = static_cast<int>(csv::to_int(t, r, 2));
    s.gini = csv::to_double(t, r, 3);
    s.gini_year = static_cast<int>(csv::to_int(t, r, 4));
    if (s.gdp_pc <= 0.0) {
      throw SchemaError(fmt::format("{}: gdp_pc_usd must be positive", t.where(r)));
    }
    if (!(s.gini > 0.0 && s.gini < 1.0)) {
      throw SchemaError(fmt::format("{}: gini must lie in (0, 1)", t.where(r)));
    }
    if (!out.emplace(s.iso2, s).second) {
      throw SchemaError(fmt::format("{}: duplicate country '{}'", t.where(r), s.iso2));
    }
  }
  return out;
}

std::map<std::string, CountryAttributes> load_country_attributes(
    const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"iso2", "area_km2", "population", "island", "landlocked", "continent",
                          "neighbors_with_ground_truth"});
  std::map<std::string, CountryAttributes> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    CountryAttributes a;
    a.iso2 = t.rows[r][0];
    a.area_km2 = csv::to_double(t, r, 1);
    a.population = csv::to_double(t, r, 2);
    a.island = parse_flag(t, r, 3);
    a.landlocked = parse_flag(t, r, 4);
    a.continent = t.rows[r][5];
    a.neighbors_with_ground_truth = static_cast<int>(csv::to_int(t, r, 6));
    if (a.area_km2 <= 0.0 || a.population <= 0.0) {
      throw SchemaError(fmt::format("{}: area and population must be positive", t.where(r)));
    }
    if (!out.emplace(a.iso2, a).second) {
      throw SchemaError(fmt::format("{}: duplicate country '{}'", t.where(r), a.iso2));
    }
  }
  return out;
}

std::vector<AdminAssignment> load_admin_assignment(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"quadkey", "level", "unit_id"});
  std::vector<AdminAssignment> out;
  std::set<std::pair<std::uint64_t, std::string>> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    AdminAssignment a{parse_base_tile(t, r, 0), t.rows[r][1], t.rows[r][2]};
    if (!seen.emplace(tile_key(a.tile), a.level).second) {
      throw SchemaError(fmt::format("{}: tile '{}' assigned twice at level '{}'", t.where(r),
                                    t.rows[r][0], a.level));
    }
    out.push_back(std::move(a));
  }
  return out;
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"country", "feature", "mean", "sd"});
  NormStats stats;
  stats.feature_names = canonical_feature_names();
  std::map<std::string, std::size_t> feature_index;
  for (std::size_t i = 0; i < stats.feature_names.size(); ++i) {
    feature_index[stats.feature_names[i]] = i;
  }
  std::map<std::string, std::vector<bool>> filled;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& country = t.rows[r][0];
    auto fit = feature_index.find(t.rows[r][1]);
    if (fit == feature_index.end()) {
      throw SchemaError(fmt::format("{}: unknown feature '{}'", t.where(r), t.rows[r][1]));
    }
    auto& moments = stats.by_country[country];
    auto& flags = filled[country];
    moments.resize(stats.feature_names.size());
    flags.resize(stats.feature_names.size(), false);
    moments[fit->second] = {csv::to_double(t, r, 2), csv::to_double(t, r, 3)};
    flags[fit->second] = true;
  }
  for (const auto& [country, flags] : filled) {
    for (std::size_t f = 0; f < flags.size(); ++f) {
      if (!flags[f]) {
        throw SchemaError(fmt::format("{}: country '{}' lacks statistics for '{}'", t.source,
                                      country, stats.feature_names[f]));
      }
    }
  }
  return stats;
}

void save_norm_stats(const NormStats& stats, const std::filesystem::path& path,
                     std::string_view manifest) {
  csv::Writer w(path, manifest);
  w.row({"country", "feature", "mean", "sd"});
  for (const auto& [country, moments] : stats.by_country) {
    for (std::size_t f = 0; f < moments.size(); ++f) {
      w.row({country, stats.feature_names[f], csv::format(moments[f].mean),
             csv::format(moments[f].sd)});
    }
  }
  w.close();
}

InputTables load_tables(const InputPaths& paths) {
  InputTables out;
  if (!paths.features.empty()) {
    out.features = load_features(paths.features);
  }
  if (!paths.population.empty()) {
    out.population = load_population(paths.population);
  }
  if (!paths.country_stats.empty()) {
    out.country_stats = load_country_stats(paths.country_stats);
  }
  if (!paths.clusters.empty()) {
    out.clusters = load_clusters(paths.clusters);
  }
  if (!paths.households.empty()) {
    out.households = load_households(paths.households);
  }
  return out;
}

} // namespace povmap
