#include "povmap/uncertainty.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/ingest.hpp"
#include "povmap/parallel.hpp"
#include "povmap/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

namespace povmap {

std::string_view to_string(ErrorSpec spec) {
  switch (spec) {
  case ErrorSpec::base:
    return "base";
  case ErrorSpec::imagery:
    return "imagery";
  case ErrorSpec::non_rwi:
    return "non_rwi";
  }
  return "unknown";
}

ErrorSpec parse_error_spec(std::string_view name) {
  if (name == "base") {
    return ErrorSpec::base;
  }
  if (name == "imagery") {
    return ErrorSpec::imagery;
  }
  if (name == "non_rwi") {
    return ErrorSpec::non_rwi;
  }
  throw InvalidInput(fmt::format("unknown error specification '{}'", name));
}

ClusterSet::ClusterSet(std::span<const ClusterObservation> clusters)
    : index([&] {
        std::vector<LatLon> pts;
        for (const auto& c : clusters) {
          pts.push_back(c.centroid);
        }
        return pts;
      }()) {
  for (const auto& c : clusters) {
    country.push_back(c.country);
  }
}

ClusterSet::ClusterSet(std::vector<LatLon> locations, std::vector<std::string> countries)
    : country(std::move(countries)), index(std::move(locations)) {
  if (country.size() != index.size()) {
    throw InvalidInput("cluster locations and countries differ in length");
  }
}

double log1p_nonneg(double x) { return std::log1p(std::max(0.0, x)); }

std::vector<std::string> continent_levels(const std::map<std::string, CountryAttributes>& attrs) {
  std::set<std::string> all;
  for (const auto& [iso, a] : attrs) {
    all.insert(a.continent);
  }
  std::vector<std::string> out(all.begin(), all.end());
  if (!out.empty()) {
    out.erase(out.begin());
  }
  return out;
}

namespace {

struct TileColumn {
  std::string name;
  std::string feature;
  bool log;
};

// Tile features the wealth model also uses, in predictor order.
const std::vector<TileColumn>& tile_columns() {
  static const std::vector<TileColumn> cols = {
      {"road_density", "road_density", false},
      {"ln_slope", "slope", true},
      {"ln_elevation", "elevation", true},
      {"ln_precipitation", "precipitation", true},
      {"urban", "urban_builtup", false},
      {"ln_radiance", "radiance", true},
      {"ln_population", "population", true},
      {"ln_cell_towers", "cell_towers", true},
      {"ln_wifi_points", "wifi_points", true},
      {"ln_mobile_devices", "mobile_devices", true},
      {"ln_android_devices", "android_devices", true},
      {"ln_ios_devices", "ios_devices", true},
  };
  return cols;
}

std::size_t feature_index(const std::string& name) {
  const auto& names = canonical_feature_names();
  auto it = std::find(names.begin(), names.end(), name);
  return static_cast<std::size_t>(it - names.begin());
}

} // namespace

PredictorTable build_error_predictors(std::span<const ErrorSite> sites, const ClusterSet& clusters,
                                      const std::map<std::string, CountryAttributes>& attrs,
                                      const std::map<std::string, CountryStats>& stats,
                                      ErrorSpec spec) {
  if (clusters.index.size() == 0) {
    throw InvalidInput("error predictors need at least one survey cluster");
  }
  const auto continents = continent_levels(attrs);
  PredictorTable t;
  t.names = {"ln_dist_border", "ln_dist_cluster", "ln_neighbors_with_ground_truth"};
  for (double r : kClusterRadiiKm) {
    t.names.push_back(fmt::format("ln_clusters_{}km", static_cast<int>(r)));
  }
  t.names.insert(t.names.end(), {"island", "landlocked"});
  for (const auto& c : continents) {
    t.names.push_back("continent_" + c);
  }
  t.names.insert(t.names.end(), {"ln_area", "ln_country_population", "ln_gdp_pc", "gini"});
  if (spec != ErrorSpec::non_rwi) {
    for (const auto& c : tile_columns()) {
      t.names.push_back(c.name);
    }
  }
  const std::size_t img0 = feature_index("img_pc_000");
  if (spec == ErrorSpec::imagery) {
    for (std::size_t k = 0; k < kImageComponents; ++k) {
      t.names.push_back(canonical_feature_names()[img0 + k]);
    }
  }
  for (const auto& s : sites) {
    if (!attrs.contains(s.country)) {
      throw InvalidInput(fmt::format("no country attributes for '{}'", s.country));
    }
    if (!stats.contains(s.country)) {
      throw InvalidInput(fmt::format("no GDP/Gini statistics for '{}'", s.country));
    }
    if (spec != ErrorSpec::non_rwi && s.features.size() != canonical_feature_names().size()) {
      throw InvalidInput(fmt::format("error site has {} features, expected {}", s.features.size(),
                                     canonical_feature_names().size()));
    }
  }
  std::vector<std::size_t> tile_idx;
  for (const auto& c : tile_columns()) {
    tile_idx.push_back(feature_index(c.feature));
  }

  t.values = Matrix(sites.size(), t.names.size());
  std::atomic<std::size_t> no_border{0};
  parallel_for(sites.size(), [&](std::size_t i) {
    const auto& s = sites[i];
    const auto& a = attrs.at(s.country);
    const auto& st = stats.at(s.country);
    auto row = t.values.row(i);
    std::size_t j = 0;
    const auto not_own = [&](std::size_t c) { return !s.own_cluster || *s.own_cluster != c; };
    const auto border = clusters.index.nearest(
        s.location, [&](std::size_t c) { return clusters.country[c] != s.country; });
    if (!border) {
      ++no_border;
    }
    row[j++] = border ? log1p_nonneg(border->distance_km) : 0.0;
    const auto near = clusters.index.nearest(s.location, not_own);
    row[j++] = near ? log1p_nonneg(near->distance_km) : 0.0;
    row[j++] = log1p_nonneg(a.neighbors_with_ground_truth);
    for (double r : kClusterRadiiKm) {
      auto hits = clusters.index.within(s.location, r);
      std::size_t n = hits.size();
      if (s.own_cluster && std::binary_search(hits.begin(), hits.end(), *s.own_cluster)) {
        --n;
      }
      row[j++] = log1p_nonneg(static_cast<double>(n));
    }
    row[j++] = a.island ? 1.0 : 0.0;
    row[j++] = a.landlocked ? 1.0 : 0.0;
    for (const auto& c : continents) {
      row[j++] = a.continent == c ? 1.0 : 0.0;
    }
    row[j++] = log1p_nonneg(a.area_km2);
    row[j++] = log1p_nonneg(a.population);
    row[j++] = log1p_nonneg(st.gdp_pc);
    row[j++] = st.gini;
    if (spec != ErrorSpec::non_rwi) {
      for (std::size_t c = 0; c < tile_columns().size(); ++c) {
        const double v = s.features[tile_idx[c]];
        if (tile_columns()[c].feature == "urban_builtup") {
          row[j++] = v >= 0.5 ? 1.0 : 0.0;
        } else {
          row[j++] = tile_columns()[c].log ? log1p_nonneg(v) : v;
        }
      }
    }
    if (spec == ErrorSpec::imagery) {
      for (std::size_t k = 0; k < kImageComponents; ++k) {
        row[j++] = s.features[img0 + k];
      }
    }
  });
  if (no_border > 0) {
    spdlog::warn("{} site(s) have no cluster in another country; border distance set to 0",
                 no_border.load());
  }
  return t;
}

LinearModel fit_least_squares(const Matrix& x, std::span<const double> y,
                              std::span<const double> weights, std::vector<std::string> names) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols() + 1;
  if (y.size() != n || (!weights.empty() && weights.size() != n)) {
    throw InvalidInput("least squares: design, response and weights differ in length");
  }
  if (n <= p) {
    throw InvalidInput(fmt::format("least squares needs more rows ({}) than coefficients ({})", n, p));
  }
  if (names.empty()) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      names.push_back(fmt::format("x{}", j));
    }
  }
  if (names.size() != x.cols()) {
    throw InvalidInput("least squares: predictor names do not match the design");
  }
  Eigen::MatrixXd a(n, p);
  Eigen::VectorXd b(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidInput("least squares: weights must be finite and nonnegative");
    }
    const double sw = std::sqrt(w);
    a(static_cast<Eigen::Index>(i), 0) = sw;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = sw * x(i, j);
    }
    b(static_cast<Eigen::Index>(i)) = sw * y[i];
    wsum += w;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  const Eigen::VectorXd beta = cod.solve(b);
  const Eigen::VectorXd resid = b - a * beta;

  LinearModel m;
  m.names.push_back("intercept");
  m.names.insert(m.names.end(), names.begin(), names.end());
  m.n = n;
  m.rank = static_cast<std::size_t>(cod.rank());
  m.rank_deficient = m.rank < p;
  if (m.rank_deficient) {
    spdlog::warn("least squares design has rank {} < {} coefficients; using the minimal-norm "
                 "solution",
                 m.rank, p);
  }
  m.beta.assign(beta.data(), beta.data() + p);

  const double sse = resid.squaredNorm();
  double ybar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ybar += (weights.empty() ? 1.0 : weights[i]) * y[i];
  }
  ybar /= wsum;
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sst += (weights.empty() ? 1.0 : weights[i]) * (y[i] - ybar) * (y[i] - ybar);
  }
  m.r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;

  const double sigma2 = sse / static_cast<double>(n - m.rank);
  // Cov(beta) = sigma^2 (A'A)^+, with (A'A)^+ = A^+ A^+'.
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  m.se.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    m.se[j] = std::sqrt(sigma2 * pinv.row(static_cast<Eigen::Index>(j)).squaredNorm());
  }
  return m;
}

std::vector<double> predict_error(const LinearModel& model, const Matrix& x) {
  if (x.cols() + 1 != model.beta.size()) {
    throw InvalidInput(fmt::format("error model expects {} predictors, got {}",
                                   model.beta.size() - 1, x.cols()));
  }
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), [&](std::size_t i) {
    double v = model.beta[0];
    for (std::size_t j = 0; j < x.cols(); ++j) {
      v += model.beta[j + 1] * x(i, j);
    }
    out[i] = std::max(0.0, v);
  });
  return out;
}

std::vector<CountryErrorSummary> country_error_summary(
    std::span<const std::string> countries, std::span<const double> errors,
    const std::map<std::string, std::vector<double>>& squared_residuals) {
  if (countries.size() != errors.size()) {
    throw InvalidInput("error summary: countries and errors differ in length");
  }
  std::map<std::string, std::vector<double>> by_country;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    by_country[countries[i]].push_back(errors[i]);
  }
  std::vector<CountryErrorSummary> out;
  for (const auto& [c, v] : by_country) {
    CountryErrorSummary s;
    s.country = c;
    s.n_tiles = v.size();
    s.mean = stats::mean(v);
    s.median = stats::median(v);
    s.sd = stats::population_sd(v);
    if (auto it = squared_residuals.find(c); it != squared_residuals.end() && !it->second.empty()) {
      s.mse_mean = stats::mean(it->second);
      s.mse_median = stats::median(it->second);
      s.mse_sd = stats::population_sd(it->second);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, std::vector<double>> country_attribute_vectors(
    std::span<const std::string> countries, const std::map<std::string, CountryAttributes>& attrs,
    const std::map<std::string, CountryStats>& stats, const ClusterSet& clusters) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& c : countries) {
    if (!attrs.contains(c) || !stats.contains(c)) {
      throw InvalidInput(fmt::format("no attributes or statistics for country '{}'", c));
    }
    const auto& a = attrs.at(c);
    const auto& s = stats.at(c);
    // Closest approach of the country's clusters to another country's cluster.
    double border = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < clusters.index.size(); ++i) {
      if (clusters.country[i] != c) {
        continue;
      }
      auto hit = clusters.index.nearest(clusters.index.point(i),
                                        [&](std::size_t j) { return clusters.country[j] != c; });
      if (hit && (!found || hit->distance_km < border)) {
        border = hit->distance_km;
        found = true;
      }
    }
    out[c] = {log1p_nonneg(a.area_km2),
              log1p_nonneg(a.population),
              a.island ? 1.0 : 0.0,
              a.landlocked ? 1.0 : 0.0,
              log1p_nonneg(border),
              static_cast<double>(a.neighbors_with_ground_truth),
              log1p_nonneg(s.gdp_pc),
              s.gini};
  }
  return out;
}

double cosine_dissimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("cosine dissimilarity: vectors differ in length");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    return std::equal(a.begin(), a.end(), b.begin()) ? 0.0 : 1.0;
  }
  const double cos = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
  return 1.0 - cos;
}

std::vector<std::vector<double>> dissimilarity_matrix(const std::vector<std::vector<double>>& vectors) {
  const std::size_t n = vectors.size();
  if (n == 0) {
    return {};
  }
  const std::size_t d = vectors.front().size();
  std::vector<std::vector<double>> z = vectors;
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (vectors[i].size() != d) {
        throw InvalidInput("attribute vectors differ in length");
      }
      col[i] = vectors[i][j];
    }
    const double m = stats::mean(col);
    const double sd = stats::population_sd(col);
    for (std::size_t i = 0; i < n; ++i) {
      z[i][j] = sd > 0.0 ? (col[i] - m) / sd : 0.0;
    }
  }
  std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out[i][j] = out[j][i] = cosine_dissimilarity(z[i], z[j]);
    }
  }
  return out;
}

std::vector<DissimilarityPoint> dissimilarity_curve(
    const std::vector<std::vector<double>>& dissimilarity,
    const std::vector<std::vector<double>>& transfer_error, std::size_t deciles) {
  const std::size_t n = dissimilarity.size();
  if (n < 2 || transfer_error.size() != n) {
    throw InvalidInput("dissimilarity curve needs matching matrices over at least two countries");
  }
  std::vector<double> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      pairs.push_back(dissimilarity[i][j]);
    }
  }
  std::vector<DissimilarityPoint> out;
  for (std::size_t k = 0; k < deciles; ++k) {
    DissimilarityPoint pt;
    pt.decile = static_cast<double>(k) / static_cast<double>(deciles);
    pt.threshold = stats::quantile(pairs, pt.decile);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double sum = 0.0;
      std::size_t m = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != c && dissimilarity[c][j] >= pt.threshold && std::isfinite(transfer_error[c][j])) {
          sum += transfer_error[c][j];
          ++m;
        }
      }
      if (m == 0) {
        ++pt.skipped;
        continue;
      }
      total += sum / static_cast<double>(m);
      ++pt.countries;
    }
    pt.mean_error = pt.countries > 0 ? total / static_cast<double>(pt.countries)
                                     : std::numeric_limits<double>::quiet_NaN();
    if (pt.skipped > 0) {
      spdlog::warn("dissimilarity threshold {}: {} country(ies) have no training country",
                   pt.threshold, pt.skipped);
    }
    out.push_back(pt);
  }
  return out;
}

void save_error_models(const std::filesystem::path& path,
                       const std::vector<std::pair<ErrorSpec, LinearModel>>& models,
                       std::string_view manifest) {
  std::vector<std::string> names;
  for (const auto& [spec, m] : models) {
    for (const auto& name : m.names) {
      if (std::find(names.begin(), names.end(), name) == names.end()) {
        names.push_back(name);
      }
    }
  }
  csv::Writer w(path, manifest);
  std::vector<std::string> header = {"predictor"};
  for (const auto& [spec, m] : models) {
    header.push_back(fmt::format("beta_{}", to_string(spec)));
    header.push_back(fmt::format("se_{}", to_string(spec)));
  }
  w.row(header);
  for (const auto& name : names) {
    std::vector<std::string> row = {name};
    for (const auto& [spec, m] : models) {
      auto it = std::find(m.names.begin(), m.names.end(), name);
      if (it == m.names.end()) {
        row.insert(row.end(), {"", ""});
      } else {
        const auto j = static_cast<std::size_t>(it - m.names.begin());
        row.push_back(csv::format(m.beta[j]));
        row.push_back(csv::format(m.se[j]));
      }
    }
    w.row(row);
  }
  std::vector<std::string> r2 = {"r2"};
  std::vector<std::string> nrow = {"n"};
  for (const auto& [spec, m] : models) {
    r2.insert(r2.end(), {csv::format(m.r2), ""});
    nrow.insert(nrow.end(), {std::to_string(m.n), ""});
  }
  w.row(r2);
  w.row(nrow);
  w.close();
}

void save_error_summary(const std::filesystem::path& path,
                        std::span<const CountryErrorSummary> rows, std::string_view manifest) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format(*v) : std::string(); };
  csv::Writer w(path, manifest);
  w.row({"country", "n_tiles", "mean_error", "median_error", "sd_error", "mean_mse", "median_mse",
         "sd_mse"});
  for (const auto& s : rows) {
    w.row({s.country, std::to_string(s.n_tiles), csv::format(s.mean), csv::format(s.median),
           csv::format(s.sd), opt(s.mse_mean), opt(s.mse_median), opt(s.mse_sd)});
  }
  w.close();
}

void save_dissimilarity(const std::filesystem::path& path,
                        std::span<const DissimilarityPoint> curve, std::string_view manifest) {
  csv::Writer w(path, manifest);
  w.row({"decile", "threshold", "mean_error", "countries", "skipped"});
  for (const auto& p : curve) {
    w.row({csv::format(p.decile), csv::format(p.threshold), csv::format(p.mean_error),
           std::to_string(p.countries), std::to_string(p.skipped)});
  }
  w.close();
}

} // namespace povmap
