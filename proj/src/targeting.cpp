#include "povmap/targeting.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/evaluation.hpp"
#include "povmap/parallel.hpp"
#include "povmap/random.hpp"
#include "povmap/spatial_index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <array>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/core.h>

namespace povmap {

std::vector<TargetHousehold> load_target_households(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  csv::require_header(t, {"household_id", "country", "lat", "lon", "weight", "wealth"});
  std::vector<TargetHousehold> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    TargetHousehold h;
    h.id = t.rows[r][0];
    h.country = t.rows[r][1];
    try {
      h.location = LatLon::make(csv::to_double(t, r, 2), csv::to_double(t, r, 3));
    } catch (const InvalidInput& e) {
      throw SchemaError(fmt::format("{}: {}", t.where(r), e.what()));
    }
    h.weight = csv::to_double(t, r, 4);
    h.true_wealth = csv::to_double(t, r, 5);
    if (!(h.weight > 0.0) || !std::isfinite(h.weight)) {
      throw SchemaError(fmt::format("{}: household weight must be positive", t.where(r)));
    }
    if (!seen.insert(h.id).second) {
      throw SchemaError(fmt::format("{}: duplicate household_id '{}'", t.where(r), h.id));
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<SurveyCluster> survey_clusters(std::span<const ClusterObservation> clusters) {
  std::vector<SurveyCluster> out;
  for (const auto& c : clusters) {
    out.push_back({c.centroid, c.rwi_label, static_cast<double>(std::max(1, c.n_households))});
  }
  return out;
}

std::string Scheme::label() const {
  switch (kind) {
  case SchemeKind::ml_tiles:
    return "ml_tiles";
  case SchemeKind::ml_units:
    return "ml_units:" + level;
  case SchemeKind::survey_units_exclude:
    return "survey_units_exclude:" + level;
  case SchemeKind::survey_units_impute:
    return "survey_units_impute:" + level;
  case SchemeKind::knn_clusters:
    return fmt::format("knn_clusters:{}", k);
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{}
                                                               : text.substr(colon + 1);
  Scheme s;
  if (name == "ml_tiles" && arg.empty()) {
    s.kind = SchemeKind::ml_tiles;
    return s;
  }
  if (name == "knn_clusters") {
    int k = 0;
    const auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
    if (ec != std::errc{} || p != arg.data() + arg.size() || k < 1) {
      throw InvalidInput(fmt::format("scheme '{}': expected knn_clusters:<k> with k >= 1", text));
    }
    s.kind = SchemeKind::knn_clusters;
    s.k = k;
    return s;
  }
  const std::map<std::string_view, SchemeKind> unit_kinds = {
      {"ml_units", SchemeKind::ml_units},
      {"survey_units_exclude", SchemeKind::survey_units_exclude},
      {"survey_units_impute", SchemeKind::survey_units_impute}};
  if (auto it = unit_kinds.find(name); it != unit_kinds.end() && !arg.empty()) {
    s.kind = it->second;
    s.level = std::string(arg);
    return s;
  }
  throw InvalidInput(fmt::format(
      "unknown scheme '{}'; expected ml_tiles, ml_units:<level>, survey_units_exclude:<level>, "
      "survey_units_impute:<level> or knn_clusters:<k>",
      text));
}

namespace {

using UnitMap = std::unordered_map<std::uint64_t, std::string>;

UnitMap units_at_level(std::span<const AdminAssignment> assignment, const std::string& level) {
  UnitMap out;
  for (const auto& a : assignment) {
    if (a.level == level) {
      out.emplace(tile_key(a.tile), a.unit_id);
    }
  }
  if (out.empty()) {
    throw InvalidInput(fmt::format("admin assignment has no units at level '{}'", level));
  }
  return out;
}

const std::string* unit_of(const UnitMap& units, const LatLon& p) {
  auto it = units.find(tile_key(latlon_to_tile(p, kBaseZoom)));
  return it == units.end() ? nullptr : &it->second;
}

std::vector<std::string> household_units(std::span<const TargetHousehold> households,
                                         const UnitMap& units, const std::string& level) {
  std::vector<std::string> out;
  for (const auto& h : households) {
    const auto* u = unit_of(units, h.location);
    if (u == nullptr) {
      throw InvalidInput(fmt::format("household '{}' lies outside every '{}' unit", h.id, level));
    }
    out.push_back(*u);
  }
  return out;
}

std::set<std::string> all_units(const UnitMap& units) {
  std::set<std::string> out;
  for (const auto& [k, u] : units) {
    out.insert(u);
  }
  return out;
}

UnitCounts count_units(const std::set<std::string>& units, const std::set<std::string>& estimated,
                       const std::set<std::string>& with_truth) {
  UnitCounts c;
  c.units = units.size();
  c.with_estimates = estimated.size();
  c.with_truth = with_truth.size();
  for (const auto& u : with_truth) {
    c.with_both += estimated.contains(u) ? 1 : 0;
  }
  return c;
}

WealthAssignment ml_tiles(std::span<const TargetHousehold> households,
                          const TargetingInputs& inputs) {
  std::unordered_map<std::uint64_t, double> rwi;
  for (const auto& e : inputs.estimates) {
    rwi.emplace(tile_key(e.tile), e.rwi);
  }
  WealthAssignment out;
  std::set<std::uint64_t> truth_tiles;
  std::set<std::uint64_t> both;
  for (const auto& h : households) {
    const auto key = tile_key(latlon_to_tile(h.location, kBaseZoom));
    truth_tiles.insert(key);
    if (auto it = rwi.find(key); it != rwi.end()) {
      out.predicted.emplace_back(it->second);
      both.insert(key);
    } else {
      out.predicted.emplace_back(std::nullopt);
    }
  }
  out.counts = UnitCounts{rwi.size(), rwi.size(), truth_tiles.size(), both.size()};
  return out;
}

WealthAssignment ml_units(std::span<const TargetHousehold> households, const Scheme& scheme,
                          const TargetingInputs& inputs) {
  const auto units = units_at_level(inputs.assignment, scheme.level);
  const auto hh_units = household_units(households, units, scheme.level);
  const auto agg = aggregate_to_units(inputs.estimates, inputs.assignment, scheme.level);
  std::map<std::string, double> mean;
  for (const auto& u : agg.units) {
    mean.emplace(u.unit_id, u.mean_rwi);
  }
  WealthAssignment out;
  std::set<std::string> estimated;
  for (const auto& [u, m] : mean) {
    estimated.insert(u);
  }
  std::set<std::string> with_truth(hh_units.begin(), hh_units.end());
  for (const auto& u : hh_units) {
    auto it = mean.find(u);
    out.predicted.push_back(it == mean.end() ? std::nullopt : std::optional<double>(it->second));
  }
  out.counts = count_units(all_units(units), estimated, with_truth);
  return out;
}

WealthAssignment survey_units(std::span<const TargetHousehold> households, const Scheme& scheme,
                              const TargetingInputs& inputs) {
  const auto units = units_at_level(inputs.assignment, scheme.level);
  const auto hh_units = household_units(households, units, scheme.level);
  std::map<std::string, std::pair<double, double>> sums;
  for (const auto& c : inputs.clusters) {
    if (const auto* u = unit_of(units, c.location)) {
      auto& s = sums[*u];
      s.first += c.weight * c.wealth;
      s.second += c.weight;
    }
  }
  std::map<std::string, double> mean;
  std::set<std::string> surveyed;
  for (const auto& [u, s] : sums) {
    mean[u] = s.first / s.second;
    surveyed.insert(u);
  }
  if (mean.empty()) {
    throw InvalidInput(fmt::format("no survey cluster falls inside a '{}' unit", scheme.level));
  }

  std::map<std::string, double> imputed;
  if (scheme.kind == SchemeKind::survey_units_impute) {
    // Population-weighted unit centroids from the member tiles.
    std::unordered_map<std::uint64_t, double> pop;
    for (const auto& e : inputs.estimates) {
      pop.emplace(tile_key(e.tile), e.population);
    }
    std::map<std::string, std::array<double, 5>> acc;
    for (const auto& a : inputs.assignment) {
      if (a.level != scheme.level) {
        continue;
      }
      const LatLon c = tile_center(a.tile);
      auto it = pop.find(tile_key(a.tile));
      const double w = it == pop.end() ? 0.0 : it->second;
      auto& s = acc[a.unit_id];
      s[0] += w * c.lat;
      s[1] += w * c.lon;
      s[2] += w;
      s[3] += c.lat;
      s[4] += c.lon;
    }
    std::map<std::string, std::size_t> n_tiles;
    for (const auto& a : inputs.assignment) {
      if (a.level == scheme.level) {
        ++n_tiles[a.unit_id];
      }
    }
    std::map<std::string, LatLon> centroid;
    for (const auto& [u, s] : acc) {
      centroid[u] = s[2] > 0.0 ? LatLon{s[0] / s[2], s[1] / s[2]}
                               : LatLon{s[3] / static_cast<double>(n_tiles[u]),
                                        s[4] / static_cast<double>(n_tiles[u])};
    }
    std::vector<LatLon> pts;
    std::vector<std::string> ids;
    for (const auto& u : surveyed) {
      pts.push_back(centroid.at(u));
      ids.push_back(u);
    }
    const SpatialIndex index(pts);
    for (const auto& [u, c] : centroid) {
      if (!surveyed.contains(u)) {
        imputed[u] = mean.at(ids[index.nearest(c)->index]);
      }
    }
  }

  WealthAssignment out;
  for (const auto& u : hh_units) {
    if (auto it = mean.find(u); it != mean.end()) {
      out.predicted.emplace_back(it->second);
    } else if (auto jt = imputed.find(u); jt != imputed.end()) {
      out.predicted.emplace_back(jt->second);
    } else {
      out.predicted.emplace_back(std::nullopt);
    }
  }
  out.counts = count_units(all_units(units), surveyed,
                           std::set<std::string>(hh_units.begin(), hh_units.end()));
  return out;
}

WealthAssignment knn_clusters(std::span<const TargetHousehold> households, const Scheme& scheme,
                              const TargetingInputs& inputs) {
  if (inputs.clusters.size() < static_cast<std::size_t>(scheme.k)) {
    throw InvalidInput(fmt::format("{} nearest clusters requested but only {} available",
                                   scheme.k, inputs.clusters.size()));
  }
  std::vector<LatLon> pts;
  for (const auto& c : inputs.clusters) {
    pts.push_back(c.location);
  }
  const SpatialIndex index(pts);
  const auto k = static_cast<std::size_t>(scheme.k);
  WealthAssignment out;
  out.predicted.resize(households.size());
  parallel_for(households.size(), [&](std::size_t i) {
    const auto& p = households[i].location;
    double radius = 10.0;
    std::vector<std::pair<double, std::size_t>> hits;
    while (true) {
      hits.clear();
      for (auto j : index.within(p, radius)) {
        hits.emplace_back(haversine_km(p, pts[j]), j);
      }
      if (hits.size() >= k || radius >= std::numbers::pi * kEarthRadiusKm) {
        break;
      }
      radius = std::min(radius * 2.0, std::numbers::pi * kEarthRadiusKm);
    }
    std::sort(hits.begin(), hits.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sum += inputs.clusters[hits[j].second].wealth;
    }
    out.predicted[i] = sum / static_cast<double>(k);
  });
  return out;
}

} // namespace

WealthAssignment assign_predicted_wealth(std::span<const TargetHousehold> households,
                                         const Scheme& scheme, const TargetingInputs& inputs) {
  switch (scheme.kind) {
  case SchemeKind::ml_tiles:
    return ml_tiles(households, inputs);
  case SchemeKind::ml_units:
    return ml_units(households, scheme, inputs);
  case SchemeKind::survey_units_exclude:
  case SchemeKind::survey_units_impute:
    return survey_units(households, scheme, inputs);
  case SchemeKind::knn_clusters:
    return knn_clusters(households, scheme, inputs);
  }
  throw InvalidInput("unknown scheme");
}

BudgetOutcome simulate_budget_targeting(std::span<const double> true_wealth,
                                        std::span<const double> predicted,
                                        std::span<const double> weights,
                                        std::span<const std::string> ids, double budget,
                                        std::uint64_t seed) {
  const std::size_t n = true_wealth.size();
  if (!(budget > 0.0 && budget < 1.0)) {
    throw InvalidInput(fmt::format("budget {} outside (0, 1)", budget));
  }
  if (predicted.size() != n || ids.size() != n || (!weights.empty() && weights.size() != n)) {
    throw InvalidInput("targeting: inputs differ in length");
  }
  if (n == 0) {
    throw InvalidInput("targeting needs at least one household");
  }
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(true_wealth[i]) || !std::isfinite(predicted[i])) {
      throw InvalidInput(fmt::format("household '{}' has non-finite wealth", ids[i]));
    }
    if (!(w(i) > 0.0)) {
      throw InvalidInput(fmt::format("household '{}' has a nonpositive weight", ids[i]));
    }
    total += w(i);
  }
  const double target = budget * total;

  // Fills `member` along `order` until the weight reaches the target; the
  // first household that would overshoot gets fractional membership. Returns
  // the filled weight, which is the target itself whenever it was reached.
  auto fill = [&](const std::vector<std::size_t>& order, std::vector<double>& member) {
    member.assign(n, 0.0);
    double cum = 0.0;
    for (auto i : order) {
      const double room = target - cum;
      if (room <= 0.0) {
        break;
      }
      if (w(i) <= room) {
        member[i] = 1.0;
        cum += w(i);
      } else {
        member[i] = room / w(i);
        cum = target;
        break;
      }
    }
    return cum;
  };

  BudgetOutcome out;
  out.budget = budget;

  // A weighted random permutation (Efraimidis-Spirakis keys) orders households
  // that tie on predicted or on true wealth. Using the same keys for both means
  // predictions equal to the truth select exactly the true poor.
  Rng rng(seed);
  std::vector<double> key(n);
  std::vector<std::size_t> id_order(n);
  std::iota(id_order.begin(), id_order.end(), std::size_t{0});
  std::sort(id_order.begin(), id_order.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  for (auto i : id_order) {
    key[i] = std::log(uniform_open01(rng)) / w(i);
  }
  std::vector<std::size_t> by_truth(n);
  std::iota(by_truth.begin(), by_truth.end(), std::size_t{0});
  std::sort(by_truth.begin(), by_truth.end(), [&](std::size_t a, std::size_t b) {
    if (true_wealth[a] != true_wealth[b]) {
      return true_wealth[a] < true_wealth[b];
    }
    if (key[a] != key[b]) {
      return key[a] > key[b];
    }
    return ids[a] < ids[b];
  });
  const double poor_weight = fill(by_truth, out.true_poor);

  std::vector<std::size_t> by_pred(n);
  std::iota(by_pred.begin(), by_pred.end(), std::size_t{0});
  std::sort(by_pred.begin(), by_pred.end(), [&](std::size_t a, std::size_t b) {
    if (predicted[a] != predicted[b]) {
      return predicted[a] < predicted[b];
    }
    if (key[a] != key[b]) {
      return key[a] > key[b];
    }
    return ids[a] < ids[b];
  });
  const double selected_weight = fill(by_pred, out.selected);

  double overlap = 0.0;
  double misclassified = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    overlap += w(i) * std::min(out.selected[i], out.true_poor[i]);
    misclassified += w(i) * std::abs(out.selected[i] - out.true_poor[i]);
  }
  out.precision = overlap / selected_weight;
  out.recall = overlap / poor_weight;
  out.accuracy = 1.0 - misclassified / total;
  return out;
}

double household_r2(std::span<const double> true_wealth, std::span<const double> predicted,
                    std::span<const double> weights) {
  if (true_wealth.size() < 2) {
    throw InvalidInput("household R^2 needs at least two households");
  }
  return r_squared(true_wealth, predicted, weights);
}

TargetingReport run_targeting(std::span<const TargetHousehold> households, const Scheme& scheme,
                              const TargetingInputs& inputs, std::span<const double> budgets,
                              std::uint64_t seed) {
  const auto assigned = assign_predicted_wealth(households, scheme, inputs);
  TargetingReport report;
  report.scheme = scheme.label();
  report.counts = assigned.counts;
  std::vector<double> truth;
  std::vector<double> pred;
  std::vector<double> weights;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < households.size(); ++i) {
    if (assigned.predicted[i]) {
      truth.push_back(households[i].true_wealth);
      pred.push_back(*assigned.predicted[i]);
      weights.push_back(households[i].weight);
      ids.push_back(households[i].id);
    }
  }
  report.households = truth.size();
  if (truth.empty()) {
    throw InvalidInput(fmt::format("scheme {} leaves no household to evaluate", report.scheme));
  }
  try {
    report.r2 = household_r2(truth, pred, weights);
  } catch (const Error&) {
    report.r2 = std::nullopt;
  }
  report.outcomes.resize(budgets.size());
  parallel_for(budgets.size(), [&](std::size_t b) {
    report.outcomes[b] = simulate_budget_targeting(
        truth, pred, weights, ids, budgets[b],
        derive_seed(seed, report.scheme, static_cast<std::uint64_t>(std::llround(budgets[b] * 1e6))));
  });
  return report;
}

void emit_table(const std::filesystem::path& path, std::span<const TargetingReport> reports,
                std::string_view manifest) {
  if (reports.empty()) {
    throw InvalidInput("targeting table needs at least one report");
  }
  std::vector<std::string> header = {"scheme",           "units",
                                     "units_with_estimates", "pct_units_with_estimates",
                                     "units_with_truth", "units_with_both",
                                     "households",       "r2"};
  const auto& first = reports.front().outcomes;
  for (const auto& o : first) {
    header.push_back(fmt::format("accuracy_{}", csv::format(o.budget * 100.0)));
  }
  for (const auto& o : first) {
    header.push_back(fmt::format("precision_recall_{}", csv::format(o.budget * 100.0)));
  }
  csv::Writer w(path, manifest);
  w.row(header);
  for (const auto& r : reports) {
    if (r.outcomes.size() != first.size()) {
      throw InvalidInput("targeting reports use different budgets");
    }
    std::vector<std::string> row = {r.scheme};
    if (r.counts) {
      const auto& c = *r.counts;
      row.insert(row.end(),
                 {std::to_string(c.units), std::to_string(c.with_estimates),
                  csv::format(c.units > 0 ? 100.0 * static_cast<double>(c.with_estimates) /
                                                static_cast<double>(c.units)
                                          : 0.0),
                  std::to_string(c.with_truth), std::to_string(c.with_both)});
    } else {
      row.insert(row.end(), {"-", "-", "-", "-", "-"});
    }
    row.push_back(std::to_string(r.households));
    row.push_back(r.r2 ? csv::format(*r.r2) : "");
    for (const auto& o : r.outcomes) {
      row.push_back(csv::format(o.accuracy));
    }
    for (const auto& o : r.outcomes) {
      row.push_back(csv::format(o.precision));
    }
    w.row(row);
  }
  w.close();
}

} // namespace povmap
