#include "povmap/cli.hpp"
#include "povmap/csv.hpp"
#include "povmap/ingest.hpp"

#include "pipeline.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <set>

namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).string()] = testutil::read_file(e.path());
    }
  }
  return out;
}

pipeline::Options small_world(std::string threads) {
  pipeline::Options o;
  o.synth_args = {"--countries", "2", "--tiles", "150", "--spatial-noise", "0.5"};
  o.seed = "5";
  o.threads = std::move(threads);
  return o;
}

} // namespace

TEST_CASE("manifest lines and hashing") {
  testutil::TempDir dir;
  const auto p = testutil::write_file(dir / "a.csv", "abc");
  CHECK(povmap::sha256_file(p) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::vector<fs::path> inputs = {p};
  CHECK(povmap::manifest_line(9, inputs) == "# povmap 1.0.0 seed=9 inputs=a.csv:ba7816bf8f01cfea");
}

TEST_CASE("command-line errors exit with status 1") {
  testutil::TempDir dir;
  pipeline::QuietStdout quiet;
  CHECK(povmap::run({"bogus"}) != 0);
  CHECK(povmap::run({"-o", (dir / "x").string(), "predict", "--model", (dir / "none.txt").string(),
                     "--features", (dir / "none.csv").string()}) == 1);
  CHECK(povmap::run({"-o", (dir / "x").string(), "synth", "--countries", "0"}) == 1);
}

TEST_CASE("full pipeline on a small world") {
  testutil::TempDir a;
  pipeline::run_all(a.path(), small_world("1"));

  for (const char* f : {"ingest/training.csv", "ingest/norm_stats.csv", "train/model.txt",
                        "evaluate/cv_report.csv", "evaluate/oos_predictions.csv",
                        "evaluate/importance.csv", "evaluate/cross_country.csv",
                        "predict/rwi.csv", "aggregate/rwi_aggregated.csv", "aggregate/units.csv",
                        "aggregate/validation.csv", "awe/awe.csv", "awe/awe_distribution.csv",
                        "error/error_model.csv", "error/rwi_error.csv", "error/error_summary.csv",
                        "target/targeting_report.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(a.path() / f));
  }

  // One estimate per populated feature tile.
  const auto pop = povmap::load_population(a.path() / "world/population.csv");
  const auto features = povmap::load_features(a.path() / "world/features.csv");
  std::size_t populated = 0;
  for (const auto& t : features.tiles) {
    populated += pop.at(t) > 0.0 ? 1 : 0;
  }
  const auto rwi = povmap::csv::read(a.path() / "predict/rwi.csv");
  CHECK(rwi.rows.size() == populated);
  CHECK(rwi.header == std::vector<std::string>{"quadkey", "latitude", "longitude", "rwi",
                                               "aggregation_level", "masked", "population"});

  const auto cv = povmap::csv::read(a.path() / "evaluate/cv_report.csv");
  std::set<std::string> protocols;
  for (const auto& r : cv.rows) {
    protocols.insert(r[0]);
  }
  CHECK(protocols.size() == 3);

  const auto table = povmap::csv::read(a.path() / "target/targeting_report.csv");
  CHECK(table.header.size() == 12);
  CHECK(table.rows.size() >= 4);

  SUBCASE("re-running with another thread count is byte-identical") {
    testutil::TempDir b;
    pipeline::run_all(b.path(), small_world("3"));
    const auto sa = snapshot(a.path());
    const auto sb = snapshot(b.path());
    REQUIRE(sa.size() == sb.size());
    for (const auto& [name, bytes] : sa) {
      CAPTURE(name);
      CHECK(sb.at(name) == bytes);
    }
  }
}
