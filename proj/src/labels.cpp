#include "povmap/labels.hpp"

#include "povmap/error.hpp"
#include "povmap/parallel.hpp"
#include "povmap/pca.hpp"

#include <cmath>

#include <fmt/core.h>

namespace povmap {

namespace {

// Unit vector spanning the leading principal direction. When the top
// eigenvalue is repeated the direction is ambiguous; we take the projection
// of the all-ones vector onto the tied eigenspace ("more assets, more
// wealth"), which is deterministic.
std::vector<double> leading_direction(const PcaModel& pca) {
  const std::size_t d = pca.dims();
  const double top = pca.eigenvalues.front();
  std::size_t tied = 1;
  while (tied < pca.k() && pca.eigenvalues[tied] >= top * (1.0 - 1e-9)) {
    ++tied;
  }
  std::vector<double> dir(pca.components.row(0).begin(), pca.components.row(0).end());
  if (tied == 1) {
    return dir;
  }
  std::vector<double> u(d, 0.0);
  for (std::size_t c = 0; c < tied; ++c) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += pca.components(c, j);
    }
    for (std::size_t j = 0; j < d; ++j) {
      u[j] += dot * pca.components(c, j);
    }
  }
  double norm = 0.0;
  for (double v : u) {
    norm += v * v;
  }
  if (norm < 1e-20) {
    return dir;
  }
  norm = std::sqrt(norm);
  for (auto& v : u) {
    v /= norm;
  }
  return u;
}

} // namespace

std::vector<double> household_wealth_index(std::span<const HouseholdRecord> households) {
  const std::size_t n = households.size();
  if (n < 2) {
    throw InvalidInput("the wealth index needs at least two households");
  }
  const std::size_t d = households.front().assets.size();
  Matrix assets(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    if (households[i].assets.size() != d) {
      throw InvalidInput(fmt::format("household '{}' has {} assets, expected {}",
                                     households[i].id, households[i].assets.size(), d));
    }
    for (std::size_t j = 0; j < d; ++j) {
      assets(i, j) = households[i].assets[j];
    }
  }
  const PcaModel pca = pca_fit(assets, std::min(n - 1, d), /*scale=*/true);
  const auto dir = leading_direction(pca);

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      s += dir[j] * (assets(i, j) - pca.column_means[j]) / pca.column_scales[j];
    }
    scores[i] = s;
  }

  // Orientation: positive covariance with electricity (column 0); if that
  // column is constant, positive total loading.
  double cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += scores[i] * (assets(i, 0) - pca.column_means[0]);
  }
  double orient = cov;
  if (std::abs(cov) < 1e-12) {
    orient = 0.0;
    for (double v : dir) {
      orient += v;
    }
  }
  if (orient < 0.0) {
    for (auto& s : scores) {
      s = -s;
    }
  }
  return scores;
}

std::vector<double> household_wealth_index_by_country(std::span<const HouseholdRecord> households) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < households.size(); ++i) {
    groups[households[i].country].push_back(i);
  }
  std::vector<double> out(households.size());
  for (const auto& [country, rows] : groups) {
    std::vector<HouseholdRecord> subset;
    subset.reserve(rows.size());
    for (auto r : rows) {
      subset.push_back(households[r]);
    }
    const auto scores = household_wealth_index(subset);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out[rows[i]] = scores[i];
    }
  }
  return out;
}

ClusterLabels cluster_label(std::span<const HouseholdRecord> households,
                            std::span<const double> rwi, std::span<const std::string> clusters,
                            bool weighted) {
  if (rwi.size() != households.size()) {
    throw InvalidInput("cluster_label: index and household counts differ");
  }
  struct Acc {
    double sum = 0.0;
    double weight = 0.0;
    int n = 0;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < households.size(); ++i) {
    if (!std::isfinite(rwi[i])) {
      continue;
    }
    const double w = weighted ? households[i].weight : 1.0;
    auto& a = acc[households[i].cluster_id];
    a.sum += w * rwi[i];
    a.weight += w;
    a.n += 1;
  }
  ClusterLabels out;
  for (const auto& id : clusters) {
    auto it = acc.find(id);
    if (it == acc.end() || it->second.n == 0 || it->second.weight <= 0.0) {
      ++out.skipped;
      continue;
    }
    out.by_cluster[id] = {it->second.sum / it->second.weight, it->second.n};
  }
  return out;
}

std::vector<TileId> join_window(const LatLon& centroid, bool urban) {
  const TileFraction loc = locate(centroid, kBaseZoom);
  const std::int64_t n = std::int64_t{1} << kBaseZoom;
  // Top-left corner of the 2x2 block toward the centroid's quadrant.
  std::int64_t x0 = loc.fx >= 0.5 ? loc.tile.x : loc.tile.x - 1;
  std::int64_t y0 = loc.fy >= 0.5 ? loc.tile.y : loc.tile.y - 1;
  int side = kUrbanWindow;
  if (!urban) {
    x0 -= 1;
    y0 -= 1;
    side = kRuralWindow;
  }
  std::vector<TileId> tiles;
  tiles.reserve(static_cast<std::size_t>(side * side));
  for (int dy = 0; dy < side; ++dy) {
    const std::int64_t y = y0 + dy;
    if (y < 0 || y >= n) {
      continue;
    }
    for (int dx = 0; dx < side; ++dx) {
      const std::int64_t x = ((x0 + dx) % n + n) % n;
      tiles.push_back({kBaseZoom, x, y});
    }
  }
  return tiles;
}

std::vector<double> spatial_join(const ClusterObservation& cluster, const FeatureTable& features,
                                 const std::unordered_map<std::uint64_t, std::size_t>& index,
                                 const PopulationTable& population) {
  const auto window = join_window(cluster.centroid, cluster.urban);
  std::vector<std::size_t> rows;
  std::vector<double> weights;
  for (const auto& t : window) {
    auto it = index.find(tile_key(t));
    if (it == index.end()) {
      continue;
    }
    rows.push_back(it->second);
    weights.push_back(population.at(t));
  }
  if (rows.empty()) {
    throw UnjoinableCluster(
        fmt::format("cluster '{}' has no feature tile in its join window", cluster.cluster_id));
  }
  double total = 0.0;
  for (double w : weights) {
    total += w;
  }
  if (total <= 0.0) {
    std::fill(weights.begin(), weights.end(), 1.0);
    total = static_cast<double>(weights.size());
  }
  std::vector<double> out(features.values.cols(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = features.values.row(rows[i]);
    const double w = weights[i] / total;
    for (std::size_t f = 0; f < out.size(); ++f) {
      out[f] += w * v[f];
    }
  }
  return out;
}

TrainingSet build_training_set(std::span<const ClusterObservation> clusters,
                               const ClusterLabels& labels, const FeatureTable& features,
                               const PopulationTable& population) {
  const auto index = features.index();
  std::vector<ClusterObservation> joined(clusters.size());
  std::vector<char> status(clusters.size(), 0); // 0 ok, 1 unlabeled, 2 unjoinable
  parallel_for(clusters.size(), [&](std::size_t i) {
    auto c = clusters[i];
    auto it = labels.by_cluster.find(c.cluster_id);
    if (it == labels.by_cluster.end()) {
      status[i] = 1;
      return;
    }
    c.rwi_label = it->second.rwi;
    c.n_households = it->second.n_households;
    try {
      c.features = spatial_join(c, features, index, population);
    } catch (const UnjoinableCluster&) {
      status[i] = 2;
      return;
    }
    joined[i] = std::move(c);
  });
  TrainingSet out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (status[i] == 1) {
      ++out.unlabeled;
    } else if (status[i] == 2) {
      ++out.unjoinable;
    } else {
      out.clusters.push_back(std::move(joined[i]));
    }
  }
  return out;
}

} // namespace povmap
