#include "povmap/cli.hpp"

#include "povmap/awe.hpp"
#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/evaluation.hpp"
#include "povmap/gbdt.hpp"
#include "povmap/ingest.hpp"
#include "povmap/labels.hpp"
#include "povmap/mapping.hpp"
#include "povmap/parallel.hpp"
#include "povmap/stats.hpp"
#include "povmap/synth.hpp"
#include "povmap/targeting.hpp"
#include "povmap/uncertainty.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <spdlog/spdlog.h>

namespace povmap {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InvalidInput(fmt::format("cannot open input file {}", path.string()));
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 initialization failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) {
      EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += fmt::format("{:02x}", digest[i]);
  }
  return hex;
}

std::string manifest_line(std::uint64_t seed, std::span<const fs::path> inputs) {
  std::string line = fmt::format("# povmap {} seed={} inputs=", kVersion, seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    line += fmt::format("{}{}:{}", i == 0 ? "" : ",", inputs[i].filename().string(),
                        sha256_file(inputs[i]).substr(0, 16));
  }
  return line;
}

namespace {

constexpr std::string_view kTraining = "training.csv";
constexpr std::string_view kNormStats = "norm_stats.csv";
constexpr std::string_view kModel = "model.txt";
constexpr std::string_view kRwi = "rwi.csv";

fs::path require_file(const fs::path& p, std::string_view flag) {
  if (p.empty()) {
    throw InvalidInput(fmt::format("missing required input {}", flag));
  }
  if (!fs::exists(p)) {
    throw InvalidInput(fmt::format("input file {} given to {} does not exist", p.string(), flag));
  }
  return p;
}

// training.csv: cluster metadata, the label and the joined (normalized) features.
void save_training(const fs::path& path, std::span<const ClusterObservation> clusters,
                   std::string_view manifest) {
  csv::Writer w(path, manifest);
  std::vector<std::string> header = {"cluster_id", "country", "lat", "lon", "urban",
                                     "survey_year", "n_households", "rwi"};
  for (const auto& n : canonical_feature_names()) {
    header.push_back(n);
  }
  w.row(header);
  for (const auto& c : clusters) {
    std::vector<std::string> row = {c.cluster_id,
                                    c.country,
                                    csv::format(c.centroid.lat),
                                    csv::format(c.centroid.lon),
                                    c.urban ? "1" : "0",
                                    std::to_string(c.survey_year),
                                    std::to_string(c.n_households),
                                    csv::format(c.rwi_label)};
    for (double f : c.features) {
      row.push_back(csv::format(f));
    }
    w.row(row);
  }
  w.close();
}

std::vector<ClusterObservation> load_training(const fs::path& path) {
  const auto t = csv::read(path);
  std::vector<std::string> header = {"cluster_id", "country", "lat", "lon", "urban",
                                     "survey_year", "n_households", "rwi"};
  for (const auto& n : canonical_feature_names()) {
    header.push_back(n);
  }
  csv::require_header(t, header);
  std::vector<ClusterObservation> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    ClusterObservation c;
    c.cluster_id = t.rows[r][0];
    c.country = t.rows[r][1];
    c.centroid = LatLon::make(csv::to_double(t, r, 2), csv::to_double(t, r, 3));
    c.urban = csv::to_int(t, r, 4) != 0;
    c.survey_year = static_cast<int>(csv::to_int(t, r, 5));
    c.n_households = static_cast<int>(csv::to_int(t, r, 6));
    c.rwi_label = csv::to_double(t, r, 7);
    for (std::size_t f = 8; f < header.size(); ++f) {
      c.features.push_back(csv::to_double(t, r, f));
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) {
    throw InvalidInput(fmt::format("{} has no training rows", path.string()));
  }
  return out;
}

std::map<std::uint64_t, std::string> tile_countries(const FeatureTable& features) {
  std::map<std::uint64_t, std::string> out;
  for (std::size_t i = 0; i < features.size(); ++i) {
    out.emplace(tile_key(features.tiles[i]), features.countries[i]);
  }
  return out;
}

void attach_countries(std::vector<TileEstimate>& estimates, const FeatureTable& features) {
  const auto countries = tile_countries(features);
  for (auto& e : estimates) {
    auto it = countries.find(tile_key(e.tile));
    if (it == countries.end()) {
      throw InvalidInput(fmt::format("estimate for tile {} has no row in the features file",
                                     quadkey(e.tile)));
    }
    e.country = it->second;
  }
}

struct Common {
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  fs::path out = ".";
  bool verbose = false;
};

struct GbdtOptions {
  int max_depth = GbdtParams{}.max_depth;
  double min_child_weight = GbdtParams{}.min_child_weight;
  int trees = GbdtParams{}.n_trees;
  double learning_rate = GbdtParams{}.learning_rate;

  void add(CLI::App* app) {
    app->add_option("--max-depth", max_depth, "Tree depth limit")->capture_default_str();
    app->add_option("--min-child-weight", min_child_weight, "Minimum weight per leaf")
        ->capture_default_str();
    app->add_option("--trees", trees, "Boosting rounds")->capture_default_str();
    app->add_option("--learning-rate", learning_rate, "Shrinkage")->capture_default_str();
  }
  GbdtParams params(std::uint64_t seed) const {
    GbdtParams p;
    p.max_depth = max_depth;
    p.min_child_weight = min_child_weight;
    p.n_trees = trees;
    p.learning_rate = learning_rate;
    p.seed = seed;
    p.validate();
    return p;
  }
};

// ---------------------------------------------------------------- ingest

struct IngestCmd {
  fs::path features, population, clusters, households;
  bool weighted = false;

  void add(CLI::App* app) {
    app->add_option("--features", features, "features.csv")->required();
    app->add_option("--population", population, "population.csv")->required();
    app->add_option("--clusters", clusters, "clusters.csv")->required();
    app->add_option("--households", households, "households.csv")->required();
    app->add_flag("--weighted", weighted, "Survey-weight households in cluster means");
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(features, "--features"),
                                    require_file(population, "--population"),
                                    require_file(clusters, "--clusters"),
                                    require_file(households, "--households")};
    const auto manifest = manifest_line(c.seed, inputs);
    const auto table = normalize_per_country(load_features(features));
    const auto pop = load_population(population);
    const auto cl = load_clusters(clusters);
    const auto hh = load_households(households);
    const auto rwi = household_wealth_index_by_country(hh);
    std::vector<std::string> ids;
    for (const auto& x : cl) {
      ids.push_back(x.cluster_id);
    }
    const auto labels = cluster_label(hh, rwi, ids, weighted);
    const auto training = build_training_set(cl, labels, table, pop);
    if (training.unlabeled > 0 || training.unjoinable > 0) {
      spdlog::warn("{} cluster(s) without households and {} without features were dropped",
                   training.unlabeled, training.unjoinable);
    }
    if (training.clusters.empty()) {
      throw InvalidInput("no cluster could be labeled and joined to features");
    }
    save_training(c.out / kTraining, training.clusters, manifest);
    save_norm_stats(table.norm_stats, c.out / kNormStats, manifest);
    csv::Writer w(c.out / "household_rwi.csv", manifest);
    w.row({"household_id", "country", "cluster_id", "rwi"});
    for (std::size_t i = 0; i < hh.size(); ++i) {
      w.row({hh[i].id, hh[i].country, hh[i].cluster_id, csv::format(rwi[i])});
    }
    w.close();
    fmt::print("ingest: {} training clusters from {} households\n", training.clusters.size(),
               hh.size());
  }
};

// ---------------------------------------------------------------- train

struct TrainCmd {
  fs::path training, norm_stats;
  GbdtOptions gbdt;
  bool grid = false;
  std::string protocol = "spatial";
  int k = kDefaultFolds;

  void add(CLI::App* app) {
    app->add_option("--training", training, "training.csv")->required();
    app->add_option("--norm-stats", norm_stats, "norm_stats.csv")->required();
    gbdt.add(app);
    app->add_flag("--grid", grid, "Tune max_depth and min_child_weight by grid search");
    app->add_option("--protocol", protocol, "CV protocol used by --grid: basic, lco or spatial")
        ->capture_default_str();
    app->add_option("--k", k, "Folds")->capture_default_str();
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(training, "--training"),
                                    require_file(norm_stats, "--norm-stats")};
    const auto manifest = manifest_line(c.seed, inputs);
    const auto data = Dataset::from_clusters(load_training(training));
    GbdtParams params = gbdt.params(c.seed);
    if (grid) {
      const auto points = default_grid(params);
      const auto result = grid_search(data, parse_protocol(protocol), points, k, c.seed);
      params = result.best;
      fmt::print("train: grid search selected max_depth={} min_child_weight={} (CV MSE {})\n",
                 params.max_depth, csv::format(params.min_child_weight),
                 csv::format(result.report.cv_mse));
    }
    WealthModel model = povmap::train(data.x, data.y, data.weights, params);
    model.feature_names = canonical_feature_names();
    model.norm_stats = load_norm_stats(norm_stats);
    std::ofstream out(c.out / kModel);
    if (!out) {
      throw Error(fmt::format("cannot write {}", (c.out / kModel).string()));
    }
    out << manifest << '\n';
    save_model(model, out);
    fmt::print("train: {} trees on {} clusters\n", model.trees.size(), data.size());
  }
};

// ---------------------------------------------------------------- evaluate

struct EvaluateCmd {
  fs::path training;
  GbdtOptions gbdt;
  std::string protocol = "all";
  int k = kDefaultFolds;
  bool grid = false;
  bool cross_country = false;

  void add(CLI::App* app) {
    app->add_option("--training", training, "training.csv")->required();
    gbdt.add(app);
    app->add_option("--protocol", protocol, "basic, lco, spatial or all")->capture_default_str();
    app->add_option("--k", k, "Folds")->capture_default_str();
    app->add_flag("--grid", grid, "Grid-search hyperparameters within each protocol");
    app->add_flag("--cross-country", cross_country, "Also write the country x country matrix");
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(training, "--training")};
    const auto manifest = manifest_line(c.seed, inputs);
    const auto data = Dataset::from_clusters(load_training(training));
    const GbdtParams params = gbdt.params(c.seed);
    std::vector<CvProtocol> protocols;
    if (protocol == "all") {
      protocols = {CvProtocol::basic_kfold, CvProtocol::leave_country_out, CvProtocol::spatial};
    } else {
      protocols = {parse_protocol(protocol)};
    }

    csv::Writer cv(c.out / "cv_report.csv", manifest);
    cv.row({"protocol", "country", "fold", "r2", "mse", "max_depth", "min_child_weight"});
    csv::Writer oos(c.out / "oos_predictions.csv", manifest);
    oos.row({"protocol", "cluster_id", "country", "fold", "y_true", "y_pred"});
    csv::Writer sub(c.out / "subset_r2.csv", manifest);
    sub.row({"protocol", "group", "r2"});
    auto opt = [](double v) { return std::isfinite(v) ? csv::format(v) : std::string(); };

    for (auto p : protocols) {
      CvReport report;
      if (grid) {
        const auto points = default_grid(params);
        report = grid_search(data, p, points, k, c.seed).report;
      } else {
        report = run_cv(data, p, k, c.seed, params);
      }
      const std::string name(to_string(p));
      const std::string depth = std::to_string(report.params.max_depth);
      const std::string mcw = csv::format(report.params.min_child_weight);
      for (const auto& f : report.folds) {
        cv.row({name, f.country, std::to_string(f.fold), opt(f.r2), opt(f.mse), depth, mcw});
      }
      for (const auto& [country, r2] : report.country_r2) {
        cv.row({name, country, "mean", opt(r2), "", depth, mcw});
      }
      cv.row({name, "*", "mean", opt(report.mean_country_r2()), opt(report.cv_mse), depth, mcw});
      cv.row({name, "*", "pooled", opt(report.pooled_r2), opt(report.cv_mse), depth, mcw});
      std::vector<double> yt;
      std::vector<double> yp;
      std::vector<std::string> group;
      for (const auto& o : report.predictions) {
        oos.row({name, data.ids[o.row], o.country, std::to_string(o.fold), csv::format(o.y_true),
                 csv::format(o.y_pred)});
        yt.push_back(o.y_true);
        yp.push_back(o.y_pred);
        group.push_back(data.urban[o.row] ? "urban" : "rural");
      }
      const auto s = subset_r_squared(yt, yp, group);
      for (const auto& [g, r2] : s.by_group) {
        sub.row({name, g, r2 ? csv::format(*r2) : ""});
      }
      sub.row({name, "*", s.pooled ? csv::format(*s.pooled) : ""});
      fmt::print("evaluate: {} mean country R2 {} pooled R2 {}\n", name,
                 opt(report.mean_country_r2()), opt(report.pooled_r2));
    }
    cv.close();
    oos.close();
    sub.close();

    csv::Writer imp(c.out / "importance.csv", manifest);
    imp.row({"kind", "country", "feature", "value", "splits"});
    const WealthModel full = povmap::train(data.x, data.y, data.weights, params);
    const auto gain = gain_importance(full, data.x.cols());
    const auto& names = canonical_feature_names();
    for (std::size_t f = 0; f < gain.mean_gain.size(); ++f) {
      imp.row({"gain", "*", names[f], csv::format(gain.mean_gain[f]),
               std::to_string(gain.split_count[f])});
    }
    for (const auto& u : univariate_importance(data)) {
      imp.row({"univariate_r2", u.country, names[u.feature], csv::format(u.r2), ""});
    }
    imp.close();

    if (cross_country) {
      const auto m = cross_country_matrix(data, params, k, c.seed);
      csv::Writer w(c.out / "cross_country.csv", manifest);
      w.row({"test", "train", "r2", "mse"});
      for (std::size_t i = 0; i < m.countries.size(); ++i) {
        for (std::size_t j = 0; j < m.countries.size(); ++j) {
          w.row({m.countries[i], m.countries[j], opt(m.r2[i][j]), opt(m.mse[i][j])});
        }
      }
      w.close();
    }
  }
};

// ---------------------------------------------------------------- predict

struct PredictCmd {
  fs::path model, features, population;

  void add(CLI::App* app) {
    app->add_option("--model", model, "model.txt")->required();
    app->add_option("--features", features, "features.csv")->required();
    app->add_option("--population", population, "population.csv; unpopulated tiles are skipped");
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(model, "--model"),
                                    require_file(features, "--features")};
    if (!population.empty()) {
      inputs.push_back(require_file(population, "--population"));
    }
    const auto manifest = manifest_line(c.seed, inputs);
    std::ifstream in(model);
    const WealthModel m = load_model(in);
    const auto table = load_features(features);
    PopulationTable pop;
    if (!population.empty()) {
      pop = load_population(population);
    }
    auto estimates = predict_tiles(m, table, pop);
    if (!population.empty()) {
      std::erase_if(estimates, [](const TileEstimate& e) { return !(e.population > 0.0); });
    }
    save_estimates(c.out / kRwi, estimates, manifest);
    fmt::print("predict: {} tile estimates\n", estimates.size());
  }
};

// ---------------------------------------------------------------- aggregate

struct AggregateCmd {
  fs::path estimates, features, assignment, truth;
  std::string level;
  double threshold = kPrivacyThreshold;
  int cap = kAggregationCapZoom;
  bool geojson = false;
  bool unweighted = false;

  void add(CLI::App* app) {
    app->add_option("--estimates", estimates, "rwi.csv")->required();
    app->add_option("--features", features, "features.csv, to attach countries");
    app->add_option("--assignment", assignment, "admin_assignment.csv");
    app->add_option("--level", level, "Admin level to aggregate (default: every level)");
    app->add_option("--truth", truth, "Unit ground truth (level, unit_id, value)");
    app->add_option("--threshold", threshold, "Privacy population threshold")
        ->capture_default_str();
    app->add_option("--cap", cap, "Coarsest zoom for pooling")->capture_default_str();
    app->add_flag("--geojson", geojson, "Also write rwi_aggregated.geojson");
    app->add_flag("--unweighted", unweighted, "Unit-weighted validation R2");
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(estimates, "--estimates")};
    for (const auto& [p, flag] : {std::pair{features, "--features"},
                                  std::pair{assignment, "--assignment"},
                                  std::pair{truth, "--truth"}}) {
      if (!p.empty()) {
        inputs.push_back(require_file(p, flag));
      }
    }
    if (!truth.empty() && assignment.empty()) {
      throw InvalidInput("--truth needs --assignment");
    }
    const auto manifest = manifest_line(c.seed, inputs);
    auto est = load_estimates(estimates);
    if (!features.empty()) {
      attach_countries(est, load_features(features));
    }
    const auto pooled = privacy_aggregate(est, threshold, cap);
    save_estimates(c.out / "rwi_aggregated.csv", pooled, manifest);
    if (geojson) {
      save_geojson(c.out / "rwi_aggregated.geojson", pooled);
    }
    const auto masked = std::count_if(pooled.begin(), pooled.end(),
                                      [](const auto& e) { return e.masked; });
    fmt::print("aggregate: {} tiles, {} masked\n", pooled.size(), masked);
    if (assignment.empty()) {
      return;
    }
    const auto units = aggregate_to_units(est, load_admin_assignment(assignment), level);
    save_units(c.out / "units.csv", units.units, manifest);
    fmt::print("aggregate: {} units, {} dropped\n", units.units.size(), units.dropped.size());
    if (!truth.empty()) {
      const auto v = validate_units(units.units, load_unit_truth(truth), !unweighted);
      save_validation(c.out / "validation.csv", v, manifest);
      fmt::print("aggregate: unit validation R2 {} over {} units\n", csv::format(v.pooled_r2),
                 v.rows.size());
    }
  }
};

// ---------------------------------------------------------------- awe

struct AweCmd {
  fs::path estimates, features, country_stats;
  std::string mode = "icdf";
  std::size_t bins = 50;

  void add(CLI::App* app) {
    app->add_option("--estimates", estimates, "rwi.csv")->required();
    app->add_option("--features", features, "features.csv, to attach countries")->required();
    app->add_option("--country-stats", country_stats, "country_stats.csv")->required();
    app->add_option("--mode", mode, "icdf or literal")->capture_default_str();
    app->add_option("--bins", bins, "Histogram bins")->capture_default_str();
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(estimates, "--estimates"),
                                    require_file(features, "--features"),
                                    require_file(country_stats, "--country-stats")};
    if (mode != "icdf" && mode != "literal") {
      throw InvalidInput(fmt::format("--mode must be icdf or literal, not '{}'", mode));
    }
    const auto manifest = manifest_line(c.seed, inputs);
    auto est = load_estimates(estimates);
    attach_countries(est, load_features(features));
    const auto awe = rwi_to_awe(est, load_country_stats(country_stats),
                                mode == "icdf" ? AweMode::icdf : AweMode::literal);
    save_awe(c.out / "awe.csv", awe, manifest);
    std::vector<double> values;
    std::vector<double> weights;
    for (std::size_t i = 0; i < awe.size(); ++i) {
      values.push_back(awe[i].awe);
      weights.push_back(est[i].population);
    }
    if (values.size() >= 2) {
      save_distribution(c.out / "awe_distribution.csv", export_distribution(values, weights, bins),
                        manifest);
    }
    fmt::print("awe: {} tiles\n", awe.size());
  }
};

// ---------------------------------------------------------------- error

struct ErrorCmd {
  fs::path estimates, features, training, oos, country_stats, country_attributes, cross_country;
  // Basic k-fold holds every cluster out exactly once.
  std::string protocol = "basic";
  std::string spec = "base";

  void add(CLI::App* app) {
    app->add_option("--estimates", estimates, "rwi.csv")->required();
    app->add_option("--features", features, "features.csv (raw)")->required();
    app->add_option("--training", training, "training.csv")->required();
    app->add_option("--oos", oos, "oos_predictions.csv from evaluate")->required();
    app->add_option("--country-stats", country_stats, "country_stats.csv")->required();
    app->add_option("--country-attributes", country_attributes, "country_attributes.csv")
        ->required();
    app->add_option("--cross-country", cross_country, "cross_country.csv from evaluate");
    app->add_option("--protocol", protocol, "Which held-out residuals to model")
        ->capture_default_str();
    app->add_option("--spec", spec, "Specification used for tile errors: base, imagery, non_rwi")
        ->capture_default_str();
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(estimates, "--estimates"),
                                    require_file(features, "--features"),
                                    require_file(training, "--training"),
                                    require_file(oos, "--oos"),
                                    require_file(country_stats, "--country-stats"),
                                    require_file(country_attributes, "--country-attributes")};
    if (!cross_country.empty()) {
      inputs.push_back(require_file(cross_country, "--cross-country"));
    }
    const auto manifest = manifest_line(c.seed, inputs);
    const std::string proto(to_string(parse_protocol(protocol)));
    const ErrorSpec chosen = parse_error_spec(spec);

    const auto raw = load_features(features);
    const auto raw_index = raw.index();
    const auto clusters = load_training(training);
    const auto stats = load_country_stats(country_stats);
    const auto attrs = load_country_attributes(country_attributes);
    const ClusterSet cluster_set(clusters);

    // Mean absolute held-out residual per cluster.
    std::map<std::string, std::size_t> cluster_row;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      cluster_row.emplace(clusters[i].cluster_id, i);
    }
    std::vector<double> abs_sum(clusters.size(), 0.0);
    std::vector<int> abs_n(clusters.size(), 0);
    std::map<std::string, std::vector<double>> squared;
    const auto t = csv::read(oos);
    csv::require_header(t, {"protocol", "cluster_id", "country", "fold", "y_true", "y_pred"});
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.rows[r][0] != proto) {
        continue;
      }
      auto it = cluster_row.find(t.rows[r][1]);
      if (it == cluster_row.end()) {
        throw InvalidInput(fmt::format("{}: cluster '{}' is not in {}", t.where(r), t.rows[r][1],
                                       training.filename().string()));
      }
      const double e = csv::to_double(t, r, 4) - csv::to_double(t, r, 5);
      abs_sum[it->second] += std::abs(e);
      ++abs_n[it->second];
      squared[t.rows[r][2]].push_back(e * e);
    }

    std::vector<ErrorSite> sites;
    std::vector<double> y;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (abs_n[i] == 0) {
        continue;
      }
      auto it = raw_index.find(tile_key(latlon_to_tile(clusters[i].centroid, kBaseZoom)));
      if (it == raw_index.end()) {
        ++missing;
        continue;
      }
      const auto row = raw.values.row(it->second);
      sites.push_back({clusters[i].centroid, clusters[i].country,
                       std::vector<double>(row.begin(), row.end()), i});
      y.push_back(abs_sum[i] / abs_n[i]);
    }
    if (missing > 0) {
      spdlog::warn("{} cluster(s) fall on tiles without features and were left out", missing);
    }
    if (sites.empty()) {
      throw InvalidInput(fmt::format("no held-out residuals for protocol '{}' in {}", proto,
                                     oos.filename().string()));
    }

    auto est = load_estimates(estimates);
    attach_countries(est, raw);
    std::vector<ErrorSite> tile_sites;
    for (const auto& e : est) {
      const auto row = raw.values.row(raw_index.at(tile_key(e.tile)));
      tile_sites.push_back({tile_center(e.tile), e.country,
                            std::vector<double>(row.begin(), row.end()), std::nullopt});
    }

    std::vector<std::pair<ErrorSpec, LinearModel>> models;
    std::map<ErrorSpec, std::vector<double>> tile_errors;
    for (auto s : {ErrorSpec::base, ErrorSpec::imagery, ErrorSpec::non_rwi}) {
      const auto x = build_error_predictors(sites, cluster_set, attrs, stats, s);
      if (s != chosen && x.values.rows() <= x.values.cols() + 1) {
        spdlog::warn("skipping the {} specification: {} clusters for {} coefficients", to_string(s),
                     x.values.rows(), x.values.cols() + 1);
        continue;
      }
      auto m = fit_least_squares(x.values, y, {}, x.names);
      const auto tx = build_error_predictors(tile_sites, cluster_set, attrs, stats, s);
      tile_errors[s] = predict_error(m, tx.values);
      models.emplace_back(s, std::move(m));
    }
    save_error_models(c.out / "error_model.csv", models, manifest);

    std::vector<std::string> countries;
    for (std::size_t i = 0; i < est.size(); ++i) {
      est[i].error = tile_errors[chosen][i];
      countries.push_back(est[i].country);
    }
    save_estimates(c.out / "rwi_error.csv", est, manifest);
    const auto summary = country_error_summary(countries, tile_errors[chosen], squared);
    save_error_summary(c.out / "error_summary.csv", summary, manifest);

    // Rank agreement of per-country median errors across specifications.
    csv::Writer st(c.out / "spec_stability.csv", manifest);
    st.row({"spec_a", "spec_b", "spearman"});
    std::map<ErrorSpec, std::vector<double>> medians;
    for (const auto& [s, errs] : tile_errors) {
      for (const auto& row : country_error_summary(countries, errs)) {
        medians[s].push_back(row.median);
      }
    }
    for (auto other : {ErrorSpec::imagery, ErrorSpec::non_rwi}) {
      std::string value;
      if (medians[ErrorSpec::base].size() >= 2 && medians[other].size() >= 2) {
        try {
          value = csv::format(stats::spearman(medians[ErrorSpec::base], medians[other]));
        } catch (const UndefinedMetric&) {
        }
      }
      st.row({"base", std::string(to_string(other)), value});
    }
    st.close();

    if (!cross_country.empty()) {
      const auto cc = csv::read(cross_country);
      csv::require_header(cc, {"test", "train", "r2", "mse"});
      std::vector<std::string> names;
      for (std::size_t r = 0; r < cc.rows.size(); ++r) {
        if (std::find(names.begin(), names.end(), cc.rows[r][0]) == names.end()) {
          names.push_back(cc.rows[r][0]);
        }
      }
      const std::size_t n = names.size();
      std::vector<std::vector<double>> err(n, std::vector<double>(n, std::nan("")));
      for (std::size_t r = 0; r < cc.rows.size(); ++r) {
        const auto i = static_cast<std::size_t>(
            std::find(names.begin(), names.end(), cc.rows[r][0]) - names.begin());
        const auto j = static_cast<std::size_t>(
            std::find(names.begin(), names.end(), cc.rows[r][1]) - names.begin());
        if (j >= n) {
          throw InvalidInput(fmt::format("{}: unknown training country", cc.where(r)));
        }
        err[i][j] = csv::to_optional_double(cc, r, 3);
      }
      const auto vectors = country_attribute_vectors(names, attrs, stats, cluster_set);
      std::vector<std::vector<double>> vec;
      for (const auto& name : names) {
        vec.push_back(vectors.at(name));
      }
      const auto curve = dissimilarity_curve(dissimilarity_matrix(vec), err);
      save_dissimilarity(c.out / "dissimilarity.csv", curve, manifest);
    }
    fmt::print("error: fitted on {} clusters, predicted {} tiles\n", sites.size(), est.size());
  }
};

// ---------------------------------------------------------------- target

struct TargetCmd {
  fs::path households, estimates, assignment, training;
  std::vector<double> budgets{kDefaultBudgets.begin(), kDefaultBudgets.end()};
  std::vector<std::string> schemes;
  std::string country;

  void add(CLI::App* app) {
    app->add_option("--households", households, "eval_households.csv")->required();
    app->add_option("--estimates", estimates, "rwi.csv")->required();
    app->add_option("--assignment", assignment, "admin_assignment.csv");
    app->add_option("--training", training, "training.csv (survey clusters)");
    app->add_option("--budget", budgets, "Comma-separated budget shares")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--scheme", schemes,
                    "ml_tiles, ml_units:<level>, survey_units_exclude:<level>, "
                    "survey_units_impute:<level>, knn_clusters:<k> (repeatable)");
    app->add_option("--country", country, "Only evaluate households of this country");
  }

  void run(const Common& c) const {
    std::vector<fs::path> inputs = {require_file(households, "--households"),
                                    require_file(estimates, "--estimates")};
    if (!assignment.empty()) {
      inputs.push_back(require_file(assignment, "--assignment"));
    }
    if (!training.empty()) {
      inputs.push_back(require_file(training, "--training"));
    }
    const auto manifest = manifest_line(c.seed, inputs);
    auto hh = load_target_households(households);
    if (!country.empty()) {
      std::erase_if(hh, [&](const TargetHousehold& h) { return h.country != country; });
      if (hh.empty()) {
        throw InvalidInput(fmt::format("no evaluation household in country '{}'", country));
      }
    }
    TargetingInputs in;
    in.estimates = load_estimates(estimates);
    if (!assignment.empty()) {
      in.assignment = load_admin_assignment(assignment);
    }
    if (!training.empty()) {
      in.clusters = survey_clusters(load_training(training));
    }
    std::vector<Scheme> list;
    for (const auto& s : schemes) {
      list.push_back(parse_scheme(s));
    }
    if (list.empty()) {
      list.push_back(parse_scheme("ml_tiles"));
      std::set<std::string> levels;
      for (const auto& a : in.assignment) {
        levels.insert(a.level);
      }
      for (const auto& l : levels) {
        list.push_back(parse_scheme("ml_units:" + l));
      }
      if (!in.clusters.empty()) {
        for (const auto& l : levels) {
          list.push_back(parse_scheme("survey_units_exclude:" + l));
          list.push_back(parse_scheme("survey_units_impute:" + l));
        }
        list.push_back(parse_scheme("knn_clusters:1"));
        list.push_back(parse_scheme("knn_clusters:5"));
      }
    }
    std::vector<TargetingReport> reports(list.size());
    parallel_for(list.size(),
                 [&](std::size_t i) { reports[i] = run_targeting(hh, list[i], in, budgets, c.seed); });
    emit_table(c.out / "targeting_report.csv", reports, manifest);
    for (const auto& r : reports) {
      fmt::print("target: {} households={} accuracy@{}={}\n", r.scheme, r.households,
                 csv::format(r.outcomes.front().budget), csv::format(r.outcomes.front().accuracy));
    }
  }
};

// ---------------------------------------------------------------- synth

struct SynthCmd {
  SynthConfig config;

  void add(CLI::App* app) {
    app->add_option("--countries", config.countries, "Countries")->capture_default_str();
    app->add_option("--tiles", config.tiles, "Tiles per country")->capture_default_str();
    app->add_option("--clusters", config.clusters, "Clusters per country (0: tiles/4)")
        ->capture_default_str();
    app->add_option("--households-per-cluster", config.households_per_cluster,
                    "Survey households per cluster")
        ->capture_default_str();
    app->add_option("--eval-households", config.eval_households,
                    "Evaluation households per country (0: tiles/2)")
        ->capture_default_str();
    app->add_option("--noise", config.noise, "Idiosyncratic wealth noise sd")
        ->capture_default_str();
    app->add_option("--spatial-noise", config.spatial_noise,
                    "Amplitude of smooth wealth the features miss")
        ->capture_default_str();
    app->add_option("--jitter", config.jitter, "Scale on cluster displacement")
        ->capture_default_str();
  }

  void run(const Common& c) const {
    SynthConfig cfg = config;
    cfg.seed = c.seed;
    synth_world(cfg, c.out, manifest_line(c.seed, {}));
    fmt::print("synth: wrote world to {}\n", c.out.string());
  }
};

int dispatch(CLI::App& app, const std::vector<std::string>& args) {
  Common common;
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", common.threads, "Worker threads (0: all cores)")
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Random seed")->capture_default_str();
  app.add_option("-o,--out", common.out, "Output directory")->capture_default_str();
  app.add_flag("-v,--verbose", common.verbose, "Log progress");

  IngestCmd ingest;
  TrainCmd train;
  EvaluateCmd evaluate;
  PredictCmd predict;
  AggregateCmd aggregate;
  AweCmd awe;
  ErrorCmd error;
  TargetCmd target;
  SynthCmd synth;
  ingest.add(app.add_subcommand("ingest", "Label clusters and join tile features"));
  train.add(app.add_subcommand("train", "Fit the boosted wealth model"));
  evaluate.add(app.add_subcommand("evaluate", "Cross-validate the wealth model"));
  predict.add(app.add_subcommand("predict", "Estimate wealth for every tile"));
  aggregate.add(app.add_subcommand("aggregate", "Privacy pooling and admin-unit aggregation"));
  awe.add(app.add_subcommand("awe", "Absolute wealth estimates"));
  error.add(app.add_subcommand("error", "Model and predict estimation error"));
  target.add(app.add_subcommand("target", "Budget-constrained targeting simulation"));
  synth.add(app.add_subcommand("synth", "Generate a synthetic input world"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  app.parse(reversed);

  spdlog::set_level(common.verbose ? spdlog::level::info : spdlog::level::warn);
  ThreadLimit limit(common.threads);
  fs::create_directories(common.out);
  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "ingest") {
    ingest.run(common);
  } else if (name == "train") {
    train.run(common);
  } else if (name == "evaluate") {
    evaluate.run(common);
  } else if (name == "predict") {
    predict.run(common);
  } else if (name == "aggregate") {
    aggregate.run(common);
  } else if (name == "awe") {
    awe.run(common);
  } else if (name == "error") {
    error.run(common);
  } else if (name == "target") {
    target.run(common);
  } else if (name == "synth") {
    synth.run(common);
  }
  return 0;
}

} // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Tile-level wealth estimation pipeline", "povmap"};
  try {
    return dispatch(app, args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "povmap: error: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    args.emplace_back(argv[i]);
  }
  return run(args);
}

} // namespace povmap
