#include "povmap/evaluation.hpp"

#include "povmap/error.hpp"
#include "povmap/parallel.hpp"
#include "povmap/random.hpp"
#include "povmap/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>

namespace povmap {

std::string_view to_string(CvProtocol p) {
  switch (p) {
  case CvProtocol::basic_kfold:
    return "basic_kfold";
  case CvProtocol::leave_country_out:
    return "leave_country_out";
  case CvProtocol::spatial:
    return "spatial";
  }
  return "unknown";
}

CvProtocol parse_protocol(std::string_view name) {
  if (name == "basic" || name == "basic_kfold") {
    return CvProtocol::basic_kfold;
  }
  if (name == "lco" || name == "leave_country_out") {
    return CvProtocol::leave_country_out;
  }
  if (name == "spatial") {
    return CvProtocol::spatial;
  }
  throw InvalidInput(fmt::format("unknown CV protocol '{}'", name));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x = x.select_rows(rows);
  for (auto r : rows) {
    out.y.push_back(y[r]);
    if (!weights.empty()) {
      out.weights.push_back(weights[r]);
    }
    if (!country.empty()) {
      out.country.push_back(country[r]);
    }
    if (!centroid.empty()) {
      out.centroid.push_back(centroid[r]);
    }
    if (!urban.empty()) {
      out.urban.push_back(urban[r]);
    }
    if (!ids.empty()) {
      out.ids.push_back(ids[r]);
    }
  }
  return out;
}

std::map<std::string, std::vector<std::size_t>> Dataset::rows_by_country() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < size(); ++i) {
    out[country.empty() ? std::string() : country[i]].push_back(i);
  }
  return out;
}

Dataset Dataset::from_clusters(std::span<const ClusterObservation> clusters) {
  Dataset d;
  if (clusters.empty()) {
    return d;
  }
  d.x = Matrix(0, clusters.front().features.size());
  for (const auto& c : clusters) {
    d.x.append_row(c.features);
    d.y.push_back(c.rwi_label);
    d.country.push_back(c.country);
    d.centroid.push_back(c.centroid);
    d.urban.push_back(c.urban);
    d.ids.push_back(c.cluster_id);
  }
  return d;
}

double r_squared(std::span<const double> y_true, std::span<const double> y_pred,
                 std::span<const double> weights) {
  return stats::squared_correlation(y_true, y_pred, weights);
}

double r_squared_sse(std::span<const double> y_true, std::span<const double> y_pred,
                     std::span<const double> weights) {
  if (y_true.size() != y_pred.size() || y_true.size() < 2) {
    throw InvalidInput("r_squared_sse: need two or more paired values");
  }
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double ws = 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ws += w(i);
    m += w(i) * y_true[i];
  }
  m /= ws;
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    sse += w(i) * (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    sst += w(i) * (y_true[i] - m) * (y_true[i] - m);
  }
  if (sst <= 0.0) {
    throw UndefinedMetric("R^2 undefined: zero variance");
  }
  return 1.0 - sse / sst;
}

double CvReport::mean_country_r2() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& [c, r2] : country_r2) {
    if (std::isfinite(r2)) {
      s += r2;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

std::vector<int> kfold_assignment(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) {
    throw InvalidInput("k-fold CV needs k >= 2");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<int> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  }
  return fold;
}

SpatialSplit spatial_split(std::span<const LatLon> centroids, std::span<const std::size_t> rows,
                           std::size_t anchor, int k) {
  if (k < 2) {
    throw InvalidInput("spatial CV needs k >= 2");
  }
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(rows.size());
  for (auto r : rows) {
    ranked.emplace_back(haversine_km(centroids[anchor], centroids[r]), r);
  }
  std::sort(ranked.begin(), ranked.end());
  const std::size_t n = rows.size();
  const auto kk = static_cast<std::size_t>(k);
  const std::size_t n_train = (n * (kk - 1) + kk - 1) / kk;
  SpatialSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? split.train : split.test).push_back(ranked[i].second);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

struct FoldTask {
  std::string country;
  int fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::optional<std::size_t> anchor;
};

CvReport evaluate_folds(const Dataset& data, std::vector<FoldTask> tasks, CvProtocol protocol,
                        int k, std::uint64_t seed, const GbdtParams& params) {
  CvReport report;
  report.protocol = protocol;
  report.params = params;
  report.k = k;
  report.seed = seed;
  report.folds.resize(tasks.size());
  std::vector<std::vector<double>> preds(tasks.size());

  parallel_for(tasks.size(), [&](std::size_t t) {
    const auto& task = tasks[t];
    const Dataset train = data.subset(task.train);
    const WealthModel model = train_model_for_cv(train, params);
    const Matrix test_x = data.x.select_rows(task.test);
    preds[t] = predict(model, test_x);
  });

  double sq = 0.0;
  double wsum = 0.0;
  std::vector<double> all_true;
  std::vector<double> all_pred;
  std::vector<double> all_w;
  std::map<std::string, std::pair<double, int>> per_country;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    auto& task = tasks[t];
    std::vector<double> yt;
    std::vector<double> wt;
    for (auto r : task.test) {
      yt.push_back(data.y[r]);
      wt.push_back(data.weight(r));
    }
    FoldResult fr;
    fr.country = task.country;
    fr.fold = task.fold;
    fr.anchor = task.anchor;
    double fold_sq = 0.0;
    double fold_w = 0.0;
    for (std::size_t i = 0; i < yt.size(); ++i) {
      const double e = yt[i] - preds[t][i];
      fold_sq += wt[i] * e * e;
      fold_w += wt[i];
      report.predictions.push_back({task.test[i], task.country, task.fold, yt[i], preds[t][i]});
    }
    fr.mse = fold_w > 0.0 ? fold_sq / fold_w : std::numeric_limits<double>::quiet_NaN();
    sq += fold_sq;
    wsum += fold_w;
    try {
      fr.r2 = r_squared(yt, preds[t], data.weights.empty() ? std::span<const double>{} : wt);
      auto& acc = per_country[task.country];
      acc.first += fr.r2;
      acc.second += 1;
    } catch (const UndefinedMetric&) {
      fr.r2 = std::numeric_limits<double>::quiet_NaN();
      ++report.undefined_folds;
      per_country.try_emplace(task.country, 0.0, 0);
    }
    all_true.insert(all_true.end(), yt.begin(), yt.end());
    all_pred.insert(all_pred.end(), preds[t].begin(), preds[t].end());
    all_w.insert(all_w.end(), wt.begin(), wt.end());
    fr.train_rows = std::move(task.train);
    fr.test_rows = std::move(task.test);
    report.folds[t] = std::move(fr);
  }
  for (const auto& [country, acc] : per_country) {
    report.country_r2[country] = acc.second > 0 ? acc.first / acc.second
                                                : std::numeric_limits<double>::quiet_NaN();
  }
  report.cv_mse = wsum > 0.0 ? sq / wsum : std::numeric_limits<double>::quiet_NaN();
  try {
    report.pooled_r2 =
        r_squared(all_true, all_pred, data.weights.empty() ? std::span<const double>{} : all_w);
  } catch (const UndefinedMetric&) {
    report.pooled_r2 = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

} // namespace

WealthModel train_model_for_cv(const Dataset& train, const GbdtParams& params) {
  return povmap::train(train.x, train.y, train.weights, params);
}

CvReport basic_kfold_cv(const Dataset& data, int k, std::uint64_t seed, const GbdtParams& params) {
  if (k < 2) {
    throw InvalidInput("k-fold CV needs k >= 2");
  }
  std::vector<FoldTask> tasks;
  for (const auto& [country, rows] : data.rows_by_country()) {
    if (rows.size() < static_cast<std::size_t>(k)) {
      throw InvalidInput(fmt::format("country '{}' has {} rows, fewer than k={}", country,
                                     rows.size(), k));
    }
    const auto fold = kfold_assignment(rows.size(), k, derive_seed(seed, country));
    for (int f = 0; f < k; ++f) {
      FoldTask task;
      task.country = country;
      task.fold = f;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        (fold[i] == f ? task.test : task.train).push_back(rows[i]);
      }
      tasks.push_back(std::move(task));
    }
  }
  return evaluate_folds(data, std::move(tasks), CvProtocol::basic_kfold, k, seed, params);
}

CvReport leave_country_out_cv(const Dataset& data, const GbdtParams& params) {
  const auto groups = data.rows_by_country();
  if (groups.size() < 2) {
    throw InvalidInput("leave-country-out CV needs at least two countries");
  }
  std::vector<FoldTask> tasks;
  int f = 0;
  for (const auto& [country, rows] : groups) {
    FoldTask task;
    task.country = country;
    task.fold = f++;
    task.test = rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.country[i] != country) {
        task.train.push_back(i);
      }
    }
    tasks.push_back(std::move(task));
  }
  return evaluate_folds(data, std::move(tasks), CvProtocol::leave_country_out,
                        static_cast<int>(groups.size()), 0, params);
}

CvReport spatial_cv(const Dataset& data, int k, std::uint64_t seed, const GbdtParams& params) {
  if (k < 2) {
    throw InvalidInput("spatial CV needs k >= 2");
  }
  if (data.centroid.size() != data.size()) {
    throw InvalidInput("spatial CV needs a centroid for every row");
  }
  std::vector<FoldTask> tasks;
  for (const auto& [country, rows] : data.rows_by_country()) {
    if (rows.size() < static_cast<std::size_t>(k)) {
      throw InvalidInput(fmt::format("country '{}' has {} rows, fewer than k={}", country,
                                     rows.size(), k));
    }
    // Anchors drawn without replacement: a partial Fisher-Yates shuffle.
    std::vector<std::size_t> pool = rows;
    Rng rng(derive_seed(seed, country));
    for (int f = 0; f < k; ++f) {
      const auto j = static_cast<std::size_t>(f) +
                     uniform_index(rng, pool.size() - static_cast<std::size_t>(f));
      std::swap(pool[static_cast<std::size_t>(f)], pool[j]);
      const std::size_t anchor = pool[static_cast<std::size_t>(f)];
      auto split = spatial_split(data.centroid, rows, anchor, k);
      FoldTask task;
      task.country = country;
      task.fold = f;
      task.train = std::move(split.train);
      task.test = std::move(split.test);
      task.anchor = anchor;
      tasks.push_back(std::move(task));
    }
  }
  return evaluate_folds(data, std::move(tasks), CvProtocol::spatial, k, seed, params);
}

CvReport run_cv(const Dataset& data, CvProtocol protocol, int k, std::uint64_t seed,
                const GbdtParams& params) {
  switch (protocol) {
  case CvProtocol::basic_kfold:
    return basic_kfold_cv(data, k, seed, params);
  case CvProtocol::leave_country_out:
    return leave_country_out_cv(data, params);
  case CvProtocol::spatial:
    return spatial_cv(data, k, seed, params);
  }
  throw InvalidInput("unknown protocol");
}

std::vector<GbdtParams> default_grid(const GbdtParams& base) {
  std::vector<GbdtParams> grid;
  for (int depth : kMaxDepthGrid) {
    for (double mcw : kMinChildWeightGrid) {
      GbdtParams p = base;
      p.max_depth = depth;
      p.min_child_weight = mcw;
      grid.push_back(p);
    }
  }
  return grid;
}

GridSearchResult grid_search(const Dataset& data, CvProtocol protocol,
                             std::span<const GbdtParams> grid, int k, std::uint64_t seed) {
  if (grid.empty()) {
    throw InvalidInput("grid search over an empty grid");
  }
  std::vector<GbdtParams> points(grid.begin(), grid.end());
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    if (a.max_depth != b.max_depth) {
      return a.max_depth < b.max_depth;
    }
    return a.min_child_weight < b.min_child_weight;
  });
  std::vector<CvReport> reports(points.size());
  parallel_for(points.size(),
               [&](std::size_t i) { reports[i] = run_cv(data, protocol, k, seed, points[i]); });

  GridSearchResult result;
  std::size_t best = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    result.evaluated.push_back({points[i], reports[i].cv_mse});
    const double a = reports[i].cv_mse;
    const double b = reports[best].cv_mse;
    // Strictly better only; near-equal scores keep the earlier (simpler) point.
    if (i > 0 && a < b - 1e-12 * std::max(std::abs(a), std::abs(b))) {
      best = i;
    }
  }
  result.best = points[best];
  result.report = std::move(reports[best]);
  return result;
}

std::vector<UnivariateR2> univariate_importance(const Dataset& data) {
  std::vector<UnivariateR2> out;
  for (const auto& [country, rows] : data.rows_by_country()) {
    std::vector<double> y;
    for (auto r : rows) {
      y.push_back(data.y[r]);
    }
    for (std::size_t f = 0; f < data.x.cols(); ++f) {
      std::vector<double> xf;
      for (auto r : rows) {
        xf.push_back(data.x(r, f));
      }
      double r2 = 0.0;
      const bool constant =
          std::all_of(xf.begin(), xf.end(), [&](double v) { return v == xf.front(); });
      if (!constant) {
        try {
          r2 = r_squared(y, xf);
        } catch (const UndefinedMetric&) {
          if (stats::population_sd(y) == 0.0) {
            throw UndefinedMetric(
                fmt::format("country '{}' has a constant label; univariate R^2 undefined", country));
          }
          r2 = 0.0;
        }
      } else if (stats::population_sd(y) == 0.0) {
        throw UndefinedMetric(
            fmt::format("country '{}' has a constant label; univariate R^2 undefined", country));
      }
      out.push_back({country, f, r2});
    }
  }
  return out;
}

CrossCountryMatrix cross_country_matrix(const Dataset& data, const GbdtParams& params, int k,
                                        std::uint64_t seed,
                                        const std::map<std::string, GbdtParams>& per_country) {
  const auto groups = data.rows_by_country();
  if (groups.size() < 2) {
    throw InvalidInput("cross-country matrix needs at least two countries");
  }
  CrossCountryMatrix m;
  std::vector<std::vector<std::size_t>> rows;
  for (const auto& [c, r] : groups) {
    m.countries.push_back(c);
    rows.push_back(r);
  }
  const std::size_t nc = m.countries.size();
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  m.r2.assign(nc, std::vector<double>(nc, nan));
  m.mse.assign(nc, std::vector<double>(nc, nan));
  auto params_for = [&](const std::string& c) {
    auto it = per_country.find(c);
    return it == per_country.end() ? params : it->second;
  };

  std::vector<WealthModel> models(nc);
  parallel_for(nc, [&](std::size_t j) {
    models[j] = train_model_for_cv(data.subset(rows[j]), params_for(m.countries[j]));
  });
  std::vector<CvReport> diagonal(nc);
  parallel_for(nc, [&](std::size_t i) {
    diagonal[i] = basic_kfold_cv(data.subset(rows[i]), k, seed, params_for(m.countries[i]));
  });
  for (std::size_t i = 0; i < nc; ++i) {
    const Dataset test = data.subset(rows[i]);
    for (std::size_t j = 0; j < nc; ++j) {
      if (i == j) {
        m.r2[i][i] = diagonal[i].country_r2.at(m.countries[i]);
        m.mse[i][i] = diagonal[i].cv_mse;
        continue;
      }
      const auto pred = predict(models[j], test.x);
      double sq = 0.0;
      double ws = 0.0;
      for (std::size_t r = 0; r < pred.size(); ++r) {
        sq += test.weight(r) * (test.y[r] - pred[r]) * (test.y[r] - pred[r]);
        ws += test.weight(r);
      }
      m.mse[i][j] = sq / ws;
      try {
        m.r2[i][j] = r_squared(test.y, pred, test.weights);
      } catch (const UndefinedMetric&) {
        m.r2[i][j] = nan;
      }
    }
  }
  return m;
}

SubsetR2 subset_r_squared(std::span<const double> y_true, std::span<const double> y_pred,
                          std::span<const std::string> groups) {
  if (y_true.size() != y_pred.size() || y_true.size() != groups.size()) {
    throw InvalidInput("subset_r_squared: length mismatch");
  }
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    members[groups[i]].push_back(i);
  }
  SubsetR2 out;
  for (const auto& [g, idx] : members) {
    if (idx.size() < 2) {
      out.skipped.push_back(g);
      continue;
    }
    std::vector<double> a;
    std::vector<double> b;
    for (auto i : idx) {
      a.push_back(y_true[i]);
      b.push_back(y_pred[i]);
    }
    try {
      out.by_group[g] = r_squared(a, b);
    } catch (const UndefinedMetric&) {
      out.by_group[g] = std::nullopt;
    }
  }
  try {
    out.pooled = r_squared(y_true, y_pred);
  } catch (const UndefinedMetric&) {
    out.pooled = std::nullopt;
  }
  return out;
}

} // namespace povmap
