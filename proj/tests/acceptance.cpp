// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include "povmap/awe.hpp"
#include "povmap/csv.hpp"
#include "povmap/evaluation.hpp"
#include "povmap/gbdt.hpp"
#include "povmap/labels.hpp"
#include "povmap/mapping.hpp"
#include "povmap/random.hpp"
#include "povmap/targeting.hpp"
#include "povmap/tilegrid.hpp"
#include "povmap/uncertainty.hpp"

#include "oracles.hpp"
#include "pipeline.hpp"
#include "probit_oracle.hpp"
#include "test_util.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <set>

using namespace povmap;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Criterion 1 -------------------------------------------------------------

Verdict tile_suite() {
  Verdict v;
  const auto t0 = Clock::now();
  std::size_t exhaustive = 0;
  for (int z = 1; z <= 6; ++z) {
    const std::int64_t n = std::int64_t{1} << z;
    for (std::int64_t x = 0; x < n; ++x) {
      for (std::int64_t y = 0; y < n; ++y) {
        const TileId t{z, x, y};
        const auto key = quadkey(t);
        v.require(key.size() == static_cast<std::size_t>(z) && parse_quadkey(key) == t,
                  "exhaustive round-trip failed at " + key);
        ++exhaustive;
      }
    }
  }
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const int z = 7 + static_cast<int>(uniform_index(rng, 17));
    const auto n = std::uint64_t{1} << z;
    const TileId t{z, static_cast<std::int64_t>(uniform_index(rng, n)),
                   static_cast<std::int64_t>(uniform_index(rng, n))};
    v.require(parse_quadkey(quadkey(t)) == t, "random round-trip failed at " + quadkey(t));
  }
  for (int i = 0; i < 10000; ++i) {
    const LatLon p{-kMaxLatitude + 2 * kMaxLatitude * uniform01(rng), -180 + 360 * uniform01(rng)};
    const int z = 1 + static_cast<int>(uniform_index(rng, 23));
    const auto t = latlon_to_tile(p, z);
    v.require(tile_bounds(t).contains(p), fmt::format("point ({}, {}) outside its tile", p.lat, p.lon));
  }
  const double secs = seconds_since(t0);
  v.require(secs < 5.0, fmt::format("took {:.2f} s", secs));
  if (v.pass) {
    v.detail = fmt::format("{} exhaustive + 100000 random round-trips, 10000 points", exhaustive);
  }
  return v;
}

// Criterion 2 -------------------------------------------------------------

Verdict pinned_constants() {
  Verdict v;
  v.require(kDefaultFolds == 5, "default folds != 5");
  const auto sizes = [] {
    std::vector<int> s(5, 0);
    for (int f : kfold_assignment(100, kDefaultFolds, 0)) {
      ++s[static_cast<std::size_t>(f)];
    }
    return s;
  }();
  v.require(sizes == std::vector<int>(5, 20), "100 rows do not split into five folds of 20");

  const std::set<std::pair<int, double>> expected = [] {
    std::set<std::pair<int, double>> s;
    for (int d : {1, 3, 5, 10, 15, 20, 30}) {
      for (double w : {1.0, 3.0, 5.0, 7.0, 10.0}) {
        s.insert({d, w});
      }
    }
    return s;
  }();
  const auto grid = default_grid(GbdtParams{});
  std::set<std::pair<int, double>> got;
  for (const auto& g : grid) {
    got.insert({g.max_depth, g.min_child_weight});
  }
  v.require(grid.size() == 35 && got == expected, "hyperparameter grid differs");

  v.require(kPrivacyThreshold == 50.0, "privacy threshold != 50");
  v.require(kUrbanWindow == 2 && kRuralWindow == 4, "jitter window sides differ");
  v.require(join_window(LatLon{1.0, 1.0}, true).size() == 4 &&
                join_window(LatLon{1.0, 1.0}, false).size() == 16,
            "join windows are not 2x2 / 4x4");
  v.require(kDefaultBudgets == std::array<double, 2>{0.25, 0.5}, "default budgets differ");
  if (v.pass) {
    v.detail = "k=5, 35-point grid, threshold 50, windows 2x2/4x4, budgets 25%/50%";
  }
  return v;
}

// Criterion 3 -------------------------------------------------------------

Verdict gbdt_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(3);
  std::size_t depth1 = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + uniform_index(rng, 11);
    const std::size_t d = 1 + uniform_index(rng, 3);
    const int depth = 1 + static_cast<int>(uniform_index(rng, 2));
    Matrix x(n, d);
    std::vector<double> y(n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        x(i, j) = inst % 2 ? static_cast<double>(uniform_index(rng, 5)) : standard_normal(rng);
      }
      y[i] = standard_normal(rng);
      w[i] = inst % 3 ? 1.0 : 0.25 + uniform01(rng);
    }
    GbdtParams p;
    p.max_depth = depth;
    p.min_child_weight = static_cast<double>(uniform_index(rng, 3));
    p.n_trees = 10;
    p.learning_rate = 0.3;
    const Tree tree = fit_tree(x, y, w, p);
    const double got = oracle::tree_loss(tree, x, y, w);
    const double want = oracle::best_single_split_loss(x, y, w, p.min_child_weight);
    const double tol = 1e-12 * std::max(1.0, want);
    v.require(got <= want + tol, fmt::format("instance {}: tree loss {} > oracle {}", inst, got, want));
    if (depth == 1) {
      ++depth1;
      v.require(std::abs(got - want) <= tol,
                fmt::format("instance {}: depth-1 loss {} != oracle {}", inst, got, want));
    }
    const auto model = train(x, y, w, p);
    for (std::size_t t = 1; t < model.loss_history.size(); ++t) {
      v.require(model.loss_history[t] <= model.loss_history[t - 1] * (1 + 1e-12),
                fmt::format("instance {}: loss rose in round {}", inst, t));
    }
  }
  const double secs = seconds_since(t0);
  v.require(secs < 30.0, fmt::format("took {:.2f} s", secs));
  if (v.pass) {
    v.detail = fmt::format("200 instances ({} at depth 1), {:.2f} s", depth1, secs);
  }
  return v;
}

// Criteria 4 and 5 read these tables -------------------------------------

std::map<std::string, double> mean_r2_by_protocol(const fs::path& cv_report) {
  const auto t = csv::read(cv_report);
  std::map<std::string, double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r][1] == "*" && t.rows[r][2] == "mean") {
      out[t.rows[r][0]] = csv::to_double(t, r, 3);
    }
  }
  return out;
}

Verdict cv_ordering() {
  Verdict v;
  const auto t0 = Clock::now();
  testutil::TempDir dir;
  const auto d = [&](const char* s) { return (dir / s).string(); };
  pipeline::run({"--seed", "7", "-o", d("world"), "synth", "--countries", "3", "--tiles", "500",
                 "--spatial-noise", "0.8"});
  pipeline::run({"--seed", "7", "-o", d("ingest"), "ingest", "--features", d("world/features.csv"),
                 "--population", d("world/population.csv"), "--clusters", d("world/clusters.csv"),
                 "--households", d("world/households.csv")});
  pipeline::run({"--seed", "7", "-o", d("evaluate"), "evaluate", "--training",
                 d("ingest/training.csv"), "--protocol", "all"});
  const auto r2 = mean_r2_by_protocol(dir / "evaluate/cv_report.csv");
  const double basic = r2.at("basic_kfold");
  const double lco = r2.at("leave_country_out");
  const double spatial = r2.at("spatial");
  v.require(basic - spatial >= 0.05, fmt::format("basic {:.4f} - spatial {:.4f} < 0.05", basic, spatial));
  v.require(lco <= basic, fmt::format("lco {:.4f} > basic {:.4f}", lco, basic));
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, fmt::format("took {:.1f} s", secs));
  if (v.pass) {
    v.detail = fmt::format("basic {:.3f}, spatial {:.3f}, lco {:.3f}, {:.1f} s", basic, spatial, lco, secs);
  }
  return v;
}

Verdict end_to_end() {
  Verdict v;
  const auto t0 = Clock::now();
  testutil::TempDir dir;
  const auto d = [&](const std::string& s) { return (dir.path() / s).string(); };
  const std::vector<std::string> common = {"--seed", "7", "-o"};
  auto cmd = [&](const std::string& out, std::vector<std::string> rest) {
    std::vector<std::string> args = common;
    args.push_back(d(out));
    args.insert(args.end(), rest.begin(), rest.end());
    pipeline::run(args);
  };
  cmd("world", {"synth", "--countries", "3", "--tiles", "500", "--clusters", "300", "--noise", "0",
                "--spatial-noise", "0"});
  cmd("ingest", {"ingest", "--features", d("world/features.csv"), "--population",
                 d("world/population.csv"), "--clusters", d("world/clusters.csv"), "--households",
                 d("world/households.csv")});
  cmd("train", {"train", "--training", d("ingest/training.csv"), "--norm-stats",
                d("ingest/norm_stats.csv")});
  cmd("evaluate", {"evaluate", "--training", d("ingest/training.csv"), "--protocol", "basic"});
  cmd("predict", {"predict", "--model", d("train/model.txt"), "--features", d("world/features.csv"),
                  "--population", d("world/population.csv")});
  const double basic = mean_r2_by_protocol(dir.path() / "evaluate/cv_report.csv").at("basic_kfold");
  v.require(basic >= 0.95, fmt::format("basic-CV R2 {:.4f} < 0.95", basic));

  double worst = 1.0;
  std::string worst_at;
  for (const std::string level : {"admin1", "admin2"}) {
    cmd("aggregate_" + level,
        {"aggregate", "--estimates", d("predict/rwi.csv"), "--features", d("world/features.csv"),
         "--assignment", d("world/admin_assignment.csv"), "--level", level, "--truth",
         d("world/unit_truth.csv")});
    const auto t = csv::read(dir.path() / ("aggregate_" + level) / "validation.csv");
    std::size_t countries = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (t.rows[r][0] != "r2" || t.rows[r][1] == "*") {
        continue;
      }
      ++countries;
      const double r2 = t.rows[r][3].empty() ? 0.0 : csv::to_double(t, r, 3);
      if (r2 < worst) {
        worst = r2;
        worst_at = level + "/" + t.rows[r][1];
      }
    }
    v.require(countries == 3, level + ": expected unit R2 for 3 countries");
  }
  v.require(worst >= 0.95, fmt::format("unit R2 {:.4f} at {} < 0.95", worst, worst_at));
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, fmt::format("took {:.1f} s", secs));
  if (v.pass) {
    v.detail = fmt::format("basic-CV R2 {:.3f}, lowest per-country unit R2 {:.3f} ({}), {:.1f} s",
                           basic, worst, worst_at, secs);
  }
  return v;
}

// Criterion 6 -------------------------------------------------------------

Verdict awe_suite() {
  Verdict v;
  CountryStats s;
  s.iso2 = "AA";
  s.gdp_pc = 1000.0;
  s.gini = 0.5;
  const auto half = icdf_params(s);
  v.require(half.alpha == 1.5, fmt::format("alpha(0.5) = {}", half.alpha));
  s.gini = 1e-12;
  v.require(icdf_params(s).sigma < 1e-10, "sigma does not vanish as gini -> 0");

  for (double g : {0.1, 0.25, 0.3, 0.431, 0.5, 0.6, 0.75, 0.9}) {
    s.gini = g;
    const auto spec = icdf_params(s);
    double prev = 0.0;
    for (int i = 1; i <= 1000; ++i) {
      const double q = i / 1001.0;
      const double val = icdf_eval(spec, q);
      v.require(val >= prev, fmt::format("gini {}: icdf decreases at q={}", g, q));
      prev = val;
    }
    const double qs = spec.switch_quantile;
    const double left = icdf_eval(spec, qs);
    const double right = icdf_eval(spec, std::nextafter(qs, 1.0));
    const double pareto_limit = spec.x_m * std::pow(1.0 - qs, -1.0 / spec.alpha);
    v.require(std::abs(left - right) <= 1e-9 * left && std::abs(left - pareto_limit) <= 1e-9 * left,
              fmt::format("gini {}: discontinuity at the switch", g));
  }

  Rng rng(6);
  std::vector<TileEstimate> est;
  std::map<std::string, CountryStats> stats;
  const std::vector<std::string> countries = {"AA", "BB", "CC", "DD"};
  for (std::size_t c = 0; c < countries.size(); ++c) {
    CountryStats cs;
    cs.iso2 = countries[c];
    cs.gdp_pc = 300.0 * std::pow(4.0, static_cast<double>(c));
    cs.gini = 0.25 + 0.1 * static_cast<double>(c);
    stats[cs.iso2] = cs;
    const std::size_t n = 1 + c * 400;
    for (std::size_t i = 0; i < n; ++i) {
      TileEstimate e;
      e.tile = TileId{14, static_cast<std::int64_t>(c * 1000 + i), 0};
      e.country = cs.iso2;
      e.rwi = std::round(standard_normal(rng) * 4.0) / 4.0;
      est.push_back(e);
    }
  }
  const auto awe = rwi_to_awe(est, stats);
  std::map<std::string, std::pair<double, double>> mean;
  for (const auto& a : awe) {
    mean[a.country].first += a.awe;
    mean[a.country].second += 1.0;
  }
  for (const auto& [c, m] : mean) {
    const double gdp = stats.at(c).gdp_pc;
    v.require(std::abs(m.first / m.second - gdp) <= 1e-9 * gdp,
              fmt::format("{}: mean AWE {} != GDP {}", c, m.first / m.second, gdp));
  }

  double worst = 0.0;
  for (double p : oracle::kProbitQuantiles) {
    const double want = oracle::probit(p);
    const double err = std::abs(probit(p) - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, err);
  }
  v.require(worst <= 1e-9, fmt::format("probit error {}", worst));
  if (v.pass) {
    v.detail = fmt::format("8 Gini grids of 1000 points, 4 countries, probit max error {:.1e}", worst);
  }
  return v;
}

// Criterion 7 -------------------------------------------------------------

Verdict privacy() {
  Verdict v;
  Rng rng(7);
  std::size_t tiles = 0;
  std::size_t masked = 0;
  double worst = 0.0;
  for (int field = 0; field < 10000; ++field) {
    const auto in = oracle::random_population_field(rng);
    const auto out = privacy_aggregate(in);
    const auto c = oracle::check_privacy(in, out, kPrivacyThreshold, kAggregationCapZoom);
    v.require(c.violations == 0, fmt::format("field {}: {} exposed small pools", field, c.violations));
    worst = std::max(worst, c.max_mean_error);
    tiles += out.size();
    masked += static_cast<std::size_t>(std::count_if(out.begin(), out.end(), [](const auto& e) { return e.masked; }));
  }
  v.require(worst <= 1e-9, fmt::format("national mean moved by {}", worst));
  if (v.pass) {
    v.detail = fmt::format("10000 fields, {} tiles, {} masked, mean drift {:.1e}", tiles, masked, worst);
  }
  return v;
}

// Criterion 8 -------------------------------------------------------------

Verdict least_squares() {
  Verdict v;
  Rng rng(8);
  const std::size_t n = 10000;
  const std::size_t d = 25;
  std::vector<double> beta(d + 1);
  for (auto& b : beta) {
    b = 2.0 * standard_normal(rng);
  }
  Matrix x(n, d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double yi = beta[0];
    for (std::size_t j = 0; j < d; ++j) {
      x(i, j) = standard_normal(rng) + (j > 0 ? 0.3 * x(i, j - 1) : 0.0);
      yi += beta[j + 1] * x(i, j);
    }
    y[i] = yi + 1.5 * standard_normal(rng);
  }
  const auto m = fit_least_squares(x, y);
  double worst_z = 0.0;
  for (std::size_t j = 0; j <= d; ++j) {
    worst_z = std::max(worst_z, std::abs(m.beta[j] - beta[j]) / m.se[j]);
  }
  v.require(worst_z <= 3.0, fmt::format("coefficient off by {:.2f} SE", worst_z));

  std::vector<double> resid(n);
  double ynorm = 0.0;
  for (double yi : y) {
    ynorm += yi * yi;
  }
  ynorm = std::sqrt(ynorm);
  for (std::size_t i = 0; i < n; ++i) {
    double fit = m.beta[0];
    for (std::size_t j = 0; j < d; ++j) {
      fit += m.beta[j + 1] * x(i, j);
    }
    resid[i] = y[i] - fit;
  }
  double worst_ip = 0.0;
  for (std::size_t j = 0; j <= d; ++j) {
    double dot = 0.0;
    double cn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = j == 0 ? 1.0 : x(i, j - 1);
      dot += resid[i] * c;
      cn += c * c;
    }
    worst_ip = std::max(worst_ip, std::abs(dot) / (ynorm * std::sqrt(cn)));
  }
  v.require(worst_ip <= 1e-6, fmt::format("residual-predictor inner product {} x |y||x_j|", worst_ip));
  if (v.pass) {
    v.detail = fmt::format("max |error| {:.2f} SE, max <r, x_j> / (|y||x_j|) {:.1e}", worst_z, worst_ip);
  }
  return v;
}

// Criterion 9 -------------------------------------------------------------

Verdict targeting() {
  Verdict v;
  Rng rng(9);
  std::size_t sims = 0;
  for (int inst = 0; inst < 2000; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    std::vector<double> truth(n), pred(n), w(n);
    std::vector<std::string> ids(n);
    const std::size_t groups = 1 + uniform_index(rng, 8);
    double wmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = std::floor(20 * uniform01(rng));
      pred[i] = static_cast<double>(uniform_index(rng, groups));
      w[i] = 0.2 + 5 * uniform01(rng);
      wmax = std::max(wmax, w[i]);
      ids[i] = fmt::format("h{:04}", i);
    }
    for (double b : kDefaultBudgets) {
      const auto o = simulate_budget_targeting(truth, pred, w, ids, b, static_cast<std::uint64_t>(inst));
      ++sims;
      v.require(o.precision == o.recall, fmt::format("instance {}: precision != recall", inst));
      double total = 0.0;
      double sel = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        total += w[i];
        sel += w[i] * o.selected[i];
      }
      v.require(std::abs(sel - b * total) <= wmax, fmt::format("instance {}: budget missed", inst));
      const auto best = simulate_budget_targeting(truth, truth, w, ids, b, static_cast<std::uint64_t>(inst));
      ++sims;
      v.require(best.precision == best.recall, "oracle run: precision != recall");
      v.require(std::abs(best.accuracy - 1.0) <= 1e-12,
                fmt::format("instance {}: oracle accuracy {}", inst, best.accuracy));
    }
  }

  int brute = 0;
  while (brute < 500) {
    const std::size_t n = 2 + uniform_index(rng, 9);
    const double b = kDefaultBudgets[uniform_index(rng, 2)];
    const double m = b * static_cast<double>(n);
    if (m != std::floor(m)) {
      continue;
    }
    std::vector<double> truth(n), pred(n);
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<double>(uniform_index(rng, 5));
      pred[i] = static_cast<double>(uniform_index(rng, 4));
      ids[i] = fmt::format("h{}", i);
    }
    const auto o = simulate_budget_targeting(truth, pred, {}, ids, b, static_cast<std::uint64_t>(brute));
    ++sims;
    v.require(oracle::brute_force_targeting(truth, pred, static_cast<std::size_t>(m), o.true_poor, o.selected,
                                            o.accuracy, o.precision, o.recall),
              fmt::format("brute-force instance {} disagrees", brute));
    ++brute;
  }
  if (v.pass) {
    v.detail = fmt::format("{} simulations, 500 brute-force instances", sims);
  }
  return v;
}

// Criterion 10 ------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).string()] = testutil::read_file(e.path());
    }
  }
  return out;
}

Verdict determinism() {
  Verdict v;
  pipeline::Options o;
  o.synth_args = {"--countries", "3", "--tiles", "300", "--spatial-noise", "0.5"};
  o.seed = "11";
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* threads : {"1", "4", "1"}) {
    testutil::TempDir dir;
    o.threads = threads;
    pipeline::run_all(dir.path(), o);
    pipeline::run({"--seed", "11", "--threads", threads, "-o", (dir / "grid").string(), "train",
                   "--grid", "--training", (dir / "ingest/training.csv").string(), "--norm-stats",
                   (dir / "ingest/norm_stats.csv").string(), "--trees", "20"});
    runs.push_back(snapshot(dir.path()));
  }
  for (std::size_t r = 1; r < runs.size(); ++r) {
    v.require(runs[r].size() == runs[0].size(), "runs wrote different file sets");
    for (const auto& [name, bytes] : runs[0]) {
      auto it = runs[r].find(name);
      v.require(it != runs[r].end() && it->second == bytes, name + " differs between runs");
    }
  }
  if (v.pass) {
    v.detail = fmt::format("{} files identical across 3 runs (threads 1, 4, 1)", runs[0].size());
  }
  return v;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"tile-system suite", tile_suite},
      {"pinned constants", pinned_constants},
      {"GBDT oracle equivalence", gbdt_oracle},
      {"CV ordering on autocorrelated synthetic world", cv_ordering},
      {"end-to-end recovery on zero-noise world", end_to_end},
      {"AWE suite", awe_suite},
      {"privacy aggregation", privacy},
      {"least squares", least_squares},
      {"targeting", targeting},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    fmt::print("{} {:>2} {}: {}\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed),
             criteria.size());
  return failed == 0 ? 0 : 1;
}
