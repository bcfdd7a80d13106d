#include "povmap/mapping.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/evaluation.hpp"
#include "povmap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/core.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace povmap {

std::vector<TileEstimate> predict_tiles(const WealthModel& model, const FeatureTable& features,
                                        const PopulationTable& population) {
  std::vector<TileEstimate> out(features.size());
  if (features.size() == 0) {
    return out;
  }
  const FeatureTable normalized =
      features.normalized ? features : apply_normalization(features, model.norm_stats);
  const auto pred = predict(model, normalized.values);
  parallel_for(out.size(), [&](std::size_t i) {
    auto& e = out[i];
    e.tile = features.tiles[i];
    e.country = features.countries[i];
    e.rwi = pred[i];
    e.population = population.at(e.tile);
    e.pooled_population = e.population;
  });
  return out;
}

std::vector<TileEstimate> privacy_aggregate(std::vector<TileEstimate> estimates, double threshold,
                                            int cap_zoom) {
  if (cap_zoom < kMinZoom || cap_zoom > kBaseZoom) {
    throw InvalidLevel(fmt::format("aggregation cap zoom {} outside [{}, {}]", cap_zoom, kMinZoom,
                                   kBaseZoom));
  }
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    auto& e = estimates[i];
    e.aggregation_level = e.tile.zoom;
    e.masked = false;
    e.pooled_population = e.population;
    if (!(e.population > threshold)) {
      pending.push_back(i);
    }
  }

  auto pool_mean = [&](const std::vector<std::size_t>& members, double& pop) {
    pop = 0.0;
    double num = 0.0;
    for (auto i : members) {
      pop += estimates[i].population;
      num += estimates[i].population * estimates[i].rwi;
    }
    return pop > 0.0 ? num / pop : 0.0;
  };

  const int start = pending.empty() ? cap_zoom : estimates[pending.front()].tile.zoom;
  for (int z = start - 1; z >= cap_zoom && !pending.empty(); --z) {
    // Groups keyed by (country, ancestor) so pools never straddle a border;
    // std::map keeps group order independent of input order.
    std::map<std::pair<std::string, std::uint64_t>, std::vector<std::size_t>> groups;
    for (auto i : pending) {
      groups[{estimates[i].country, tile_key(ancestor(estimates[i].tile, z))}].push_back(i);
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (auto& [key, members] : groups) {
      std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        return tile_key(estimates[a].tile) < tile_key(estimates[b].tile);
      });
      order.push_back(&members);
    }
    std::vector<char> done(order.size(), 0);
    parallel_for(order.size(), [&](std::size_t g) {
      double pop = 0.0;
      const double mean = pool_mean(*order[g], pop);
      if (pop > threshold) {
        for (auto i : *order[g]) {
          estimates[i].rwi = mean;
          estimates[i].aggregation_level = z;
          estimates[i].pooled_population = pop;
        }
        done[g] = 1;
      }
    });
    std::vector<std::size_t> still;
    for (std::size_t g = 0; g < order.size(); ++g) {
      if (!done[g]) {
        still.insert(still.end(), order[g]->begin(), order[g]->end());
      }
    }
    pending = std::move(still);
  }

  if (!pending.empty()) {
    std::map<std::pair<std::string, std::uint64_t>, std::vector<std::size_t>> groups;
    for (auto i : pending) {
      const TileId& t = estimates[i].tile;
      groups[{estimates[i].country, tile_key(t.zoom > cap_zoom ? ancestor(t, cap_zoom) : t)}]
          .push_back(i);
    }
    for (auto& [key, members] : groups) {
      std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
        return tile_key(estimates[a].tile) < tile_key(estimates[b].tile);
      });
      double pop = 0.0;
      const double mean = pool_mean(members, pop);
      for (auto i : members) {
        if (pop > 0.0) {
          estimates[i].rwi = mean;
        }
        estimates[i].aggregation_level = std::min(cap_zoom, estimates[i].tile.zoom);
        estimates[i].masked = true;
        estimates[i].pooled_population = pop;
      }
    }
  }
  return estimates;
}

UnitAggregation aggregate_to_units(std::span<const TileEstimate> estimates,
                                   std::span<const AdminAssignment> assignment,
                                   std::string_view level) {
  std::unordered_map<std::uint64_t, std::size_t> by_tile;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    by_tile.emplace(tile_key(estimates[i].tile), i);
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> members;
  for (const auto& a : assignment) {
    if (!level.empty() && a.level != level) {
      continue;
    }
    auto& list = members[{a.level, a.unit_id}];
    if (auto it = by_tile.find(tile_key(a.tile)); it != by_tile.end()) {
      list.push_back(it->second);
    }
  }
  std::vector<std::pair<std::string, std::string>> keys;
  std::vector<std::vector<std::size_t>*> lists;
  for (auto& [key, list] : members) {
    // Sum in tile order so the result does not depend on input order.
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return tile_key(estimates[a].tile) < tile_key(estimates[b].tile);
    });
    list.erase(std::unique(list.begin(), list.end()), list.end());
    keys.push_back(key);
    lists.push_back(&list);
  }
  std::vector<std::optional<AdminAggregate>> slots(keys.size());
  parallel_for(keys.size(), [&](std::size_t u) {
    double pop = 0.0;
    double num = 0.0;
    std::map<std::string, double> country_pop;
    std::size_t n = 0;
    for (auto i : *lists[u]) {
      const auto& e = estimates[i];
      if (!(e.population > 0.0)) {
        continue;
      }
      pop += e.population;
      num += e.population * e.rwi;
      country_pop[e.country] += e.population;
      ++n;
    }
    if (pop > 0.0) {
      AdminAggregate a;
      a.level = keys[u].first;
      a.unit_id = keys[u].second;
      a.mean_rwi = num / pop;
      a.population = pop;
      a.n_tiles = n;
      double best = -1.0;
      for (const auto& [c, p] : country_pop) {
        if (p > best) {
          best = p;
          a.country = c;
        }
      }
      slots[u] = std::move(a);
    }
  });
  UnitAggregation out;
  for (std::size_t u = 0; u < keys.size(); ++u) {
    if (slots[u]) {
      out.units.push_back(std::move(*slots[u]));
    } else {
      out.dropped.push_back(keys[u].second);
    }
  }
  if (!out.dropped.empty()) {
    spdlog::warn("{} admin unit(s) have no populated estimated tile and were dropped",
                 out.dropped.size());
  }
  return out;
}

UnitTruth load_unit_truth(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"level", "unit_id", "value"});
  UnitTruth out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double v = csv::to_double(t, r, 2);
    if (!out.emplace(std::pair{t.rows[r][0], t.rows[r][1]}, v).second) {
      throw SchemaError(fmt::format("{}: duplicate unit '{}'", t.where(r), t.rows[r][1]));
    }
  }
  return out;
}

UnitValidation validate_units(std::span<const AdminAggregate> units, const UnitTruth& truth,
                              bool population_weighted) {
  UnitValidation v;
  for (const auto& u : units) {
    auto it = truth.find({u.level, u.unit_id});
    if (it == truth.end()) {
      continue;
    }
    v.rows.push_back({u.unit_id, u.level, u.country, u.mean_rwi, it->second, u.population});
  }
  if (v.rows.size() < 2) {
    throw InvalidInput(
        fmt::format("unit validation needs at least two matched units, got {}", v.rows.size()));
  }
  auto score = [&](const std::vector<const UnitComparison*>& rows) {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> w;
    for (const auto* r : rows) {
      a.push_back(r->truth);
      b.push_back(r->predicted);
      w.push_back(r->population);
    }
    return r_squared(a, b, population_weighted ? std::span<const double>(w)
                                               : std::span<const double>{});
  };
  std::vector<const UnitComparison*> all;
  std::map<std::string, std::vector<const UnitComparison*>> by_country;
  for (const auto& r : v.rows) {
    all.push_back(&r);
    by_country[r.country].push_back(&r);
  }
  v.pooled_r2 = score(all);
  for (const auto& [c, rows] : by_country) {
    std::optional<double> r2;
    if (rows.size() >= 2) {
      try {
        r2 = score(rows);
      } catch (const UndefinedMetric&) {
      }
    }
    v.by_country[c] = r2;
  }
  return v;
}

void save_estimates(const std::filesystem::path& path, std::span<const TileEstimate> estimates,
                    std::string_view manifest) {
  const bool with_error = std::any_of(estimates.begin(), estimates.end(),
                                      [](const auto& e) { return !std::isnan(e.error); });
  csv::Writer w(path, manifest);
  std::vector<std::string> header = {"quadkey", "latitude", "longitude", "rwi",
                                     "aggregation_level", "masked", "population"};
  if (with_error) {
    header.emplace_back("error");
  }
  w.row(header);
  std::vector<std::size_t> order(estimates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quadkey(estimates[a].tile) < quadkey(estimates[b].tile);
  });
  for (auto i : order) {
    const auto& e = estimates[i];
    const LatLon c = tile_center(e.tile);
    std::vector<std::string> row = {quadkey(e.tile),
                                    csv::format(c.lat),
                                    csv::format(c.lon),
                                    csv::format(e.rwi),
                                    std::to_string(e.aggregation_level),
                                    e.masked ? "1" : "0",
                                    csv::format(e.population)};
    if (with_error) {
      row.push_back(csv::format(e.error));
    }
    w.row(row);
  }
  w.close();
}

std::vector<TileEstimate> load_estimates(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"quadkey", "latitude", "longitude", "rwi", "aggregation_level", "masked",
                          "population"});
  const bool with_error = t.has_column("error");
  const std::size_t err_col = with_error ? t.column("error") : 0;
  std::vector<TileEstimate> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    TileEstimate e;
    try {
      e.tile = parse_quadkey(t.rows[r][0]);
    } catch (const ParseError& ex) {
      throw SchemaError(fmt::format("{}: {}", t.where(r), ex.what()));
    }
    e.rwi = csv::to_double(t, r, 3);
    e.aggregation_level = static_cast<int>(csv::to_int(t, r, 4));
    e.masked = csv::to_int(t, r, 5) != 0;
    e.population = csv::to_double(t, r, 6);
    e.pooled_population = e.population;
    if (with_error) {
      e.error = csv::to_optional_double(t, r, err_col);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void save_units(const std::filesystem::path& path, std::span<const AdminAggregate> units,
                std::string_view manifest) {
  csv::Writer w(path, manifest);
  w.row({"level", "unit_id", "country", "mean_rwi", "population", "n_tiles"});
  for (const auto& u : units) {
    w.row({u.level, u.unit_id, u.country, csv::format(u.mean_rwi), csv::format(u.population),
           std::to_string(u.n_tiles)});
  }
  w.close();
}

void save_validation(const std::filesystem::path& path, const UnitValidation& v,
                     std::string_view manifest) {
  csv::Writer w(path, manifest);
  w.row({"level", "unit_id", "country", "predicted", "truth", "population"});
  for (const auto& r : v.rows) {
    w.row({r.level, r.unit_id, r.country, csv::format(r.predicted), csv::format(r.truth),
           csv::format(r.population)});
  }
  for (const auto& [c, r2] : v.by_country) {
    w.row({"r2", c, c, r2 ? csv::format(*r2) : "", "", ""});
  }
  w.row({"r2", "*", "*", csv::format(v.pooled_r2), "", ""});
  w.close();
}

void save_geojson(const std::filesystem::path& path, std::span<const TileEstimate> estimates) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& e : estimates) {
    const LatLonBox b = tile_bounds(e.tile);
    const LatLon c = tile_center(e.tile);
    nlohmann::json props = {{"quadkey", quadkey(e.tile)},
                            {"latitude", c.lat},
                            {"longitude", c.lon},
                            {"rwi", e.rwi},
                            {"aggregation_level", e.aggregation_level},
                            {"masked", e.masked},
                            {"population", e.population}};
    if (!std::isnan(e.error)) {
      props["error"] = e.error;
    }
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry",
                         {{"type", "Polygon"},
                          {"coordinates",
                           {{{b.west, b.south},
                             {b.east, b.south},
                             {b.east, b.north},
                             {b.west, b.north},
                             {b.west, b.south}}}}}}});
  }
  std::ofstream out(path);
  if (!out) {
    throw Error(fmt::format("cannot write {}", path.string()));
  }
  out << nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump() << '\n';
}

} // namespace povmap
