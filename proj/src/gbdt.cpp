#include "povmap/gbdt.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"
#include "povmap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/core.h>

namespace povmap {

void GbdtParams::validate() const {
  if (max_depth < 0) {
    throw InvalidInput("max_depth must be >= 0");
  }
  if (!(min_child_weight >= 0.0) || !std::isfinite(min_child_weight)) {
    throw InvalidInput("min_child_weight must be a finite number >= 0");
  }
  if (n_trees < 1) {
    throw InvalidInput("n_trees must be >= 1");
  }
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw InvalidInput("learning_rate must lie in (0, 1]");
  }
}

double Tree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                                                         : n.right);
  }
  return nodes[i].value;
}

int Tree::depth() const {
  std::function<int(std::size_t)> rec = [&](std::size_t i) -> int {
    if (nodes[i].is_leaf()) {
      return 0;
    }
    return 1 + std::max(rec(static_cast<std::size_t>(nodes[i].left)),
                        rec(static_cast<std::size_t>(nodes[i].right)));
  };
  return nodes.empty() ? 0 : rec(0);
}

namespace {

// Below this many (rows x features) a node's split search stays serial.
constexpr std::size_t kParallelWork = 1 << 16;

using SortedColumns = std::vector<std::vector<std::uint32_t>>;

SortedColumns presort(const Matrix& x) {
  SortedColumns cols(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& c = cols[f];
    c.resize(x.rows());
    std::iota(c.begin(), c.end(), 0u);
    std::stable_sort(c.begin(), c.end(), [&](auto a, auto b) { return x(a, f) < x(b, f); });
  }
  return cols;
}

struct SplitCandidate {
  double gain = 0.0;
  double threshold = 0.0;
  std::size_t left_count = 0;
  bool found = false;
};

class TreeBuilder {
public:
  TreeBuilder(const Matrix& x, std::span<const double> g, std::span<const double> w,
              const GbdtParams& params, SortedColumns sorted)
      : x_(x), g_(g), w_(w), params_(params), sorted_(std::move(sorted)),
        goes_left_(x.rows(), 0), scratch_(x.cols()) {}

  Tree build() {
    tree_.nodes.clear();
    if (x_.rows() > 0) {
      grow(0, x_.rows(), 0);
    } else {
      tree_.nodes.push_back(TreeNode{});
    }
    return std::move(tree_);
  }

private:
  int grow(std::size_t begin, std::size_t end, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();

    // Node sums in row-index order so they do not depend on which feature's
    // ordering we read them from.
    const auto& order = sorted_.front();
    double s = 0.0;
    double wsum = 0.0;
    double uncentered = 0.0;
    row_buf_.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                    order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(row_buf_.begin(), row_buf_.end());
    for (auto r : row_buf_) {
      s += w_[r] * g_[r];
      wsum += w_[r];
      uncentered += w_[r] * g_[r] * g_[r];
    }
    const double value = wsum > 0.0 ? s / wsum : 0.0;

    SplitCandidate best;
    int best_feature = -1;
    if (depth < params_.max_depth && wsum >= 2.0 * params_.min_child_weight && end - begin >= 2) {
      const std::size_t d = x_.cols();
      std::vector<SplitCandidate> per_feature(d);
      auto search = [&](std::size_t f) { per_feature[f] = best_split(f, begin, end, s, wsum); };
      if ((end - begin) * d >= kParallelWork) {
        parallel_for(d, search);
      } else {
        for (std::size_t f = 0; f < d; ++f) {
          search(f);
        }
      }
      // Gains that are pure rounding noise do not count as improvements.
      const double min_gain = 1e-20 * uncentered;
      for (std::size_t f = 0; f < d; ++f) {
        const auto& c = per_feature[f];
        if (c.found && c.gain > min_gain && (best_feature < 0 || c.gain > best.gain)) {
          best = c;
          best_feature = static_cast<int>(f);
        }
      }
    }

    if (best_feature < 0) {
      auto& leaf = tree_.nodes[static_cast<std::size_t>(id)];
      leaf.value = value;
      leaf.weight_sum = wsum;
      return id;
    }

    const auto f = static_cast<std::size_t>(best_feature);
    const std::size_t mid = begin + best.left_count;
    for (std::size_t i = begin; i < end; ++i) {
      goes_left_[sorted_[f][i]] = i < mid ? 1 : 0;
    }
    auto partition = [&](std::size_t g) {
      auto& col = sorted_[g];
      auto& tmp = scratch_[g];
      tmp.clear();
      std::size_t out = begin;
      for (std::size_t i = begin; i < end; ++i) {
        if (goes_left_[col[i]]) {
          col[out++] = col[i];
        } else {
          tmp.push_back(col[i]);
        }
      }
      std::copy(tmp.begin(), tmp.end(), col.begin() + static_cast<std::ptrdiff_t>(out));
    };
    if ((end - begin) * x_.cols() >= kParallelWork) {
      parallel_for(x_.cols(), partition);
    } else {
      for (std::size_t g = 0; g < x_.cols(); ++g) {
        partition(g);
      }
    }

    {
      auto& node = tree_.nodes[static_cast<std::size_t>(id)];
      node.feature = best_feature;
      node.threshold = best.threshold;
      node.gain = best.gain;
      node.value = value;
      node.weight_sum = wsum;
    }
    const int left = grow(begin, mid, depth + 1);
    const int right = grow(mid, end, depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = left;
    tree_.nodes[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  SplitCandidate best_split(std::size_t f, std::size_t begin, std::size_t end, double s,
                            double wsum) const {
    const auto& col = sorted_[f];
    SplitCandidate best;
    double sl = 0.0;
    double wl = 0.0;
    const double mcw = params_.min_child_weight;
    for (std::size_t i = begin; i + 1 < end; ++i) {
      const auto r = col[i];
      sl += w_[r] * g_[r];
      wl += w_[r];
      const double xv = x_(r, f);
      const double xn = x_(col[i + 1], f);
      if (!(xv < xn)) {
        continue;
      }
      const double wr = wsum - wl;
      if (wl < mcw || wr < mcw || wl <= 0.0 || wr <= 0.0) {
        continue;
      }
      const double sr = s - sl;
      // Same quantity as S_L^2/W_L + S_R^2/W_R - S^2/W, written in a form
      // that cannot go negative through cancellation.
      const double diff = sl / wl - sr / wr;
      const double gain = wl * wr / wsum * diff * diff;
      if (!best.found || gain > best.gain) {
        double thr = 0.5 * (xv + xn);
        if (!(thr > xv)) {
          thr = xn;
        }
        best = {gain, thr, i + 1 - begin, true};
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> g_;
  std::span<const double> w_;
  const GbdtParams& params_;
  SortedColumns sorted_;
  std::vector<char> goes_left_;
  std::vector<std::vector<std::uint32_t>> scratch_;
  std::vector<std::uint32_t> row_buf_;
  Tree tree_;
};

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw InvalidInput(fmt::format("{} contains a non-finite value", what));
    }
  }
}

std::vector<double> unit_weights_if_empty(std::span<const double> w, std::size_t n) {
  if (w.empty()) {
    return std::vector<double>(n, 1.0);
  }
  return {w.begin(), w.end()};
}

double weighted_mse(std::span<const double> y, std::span<const double> pred,
                    std::span<const double> w) {
  double s = 0.0;
  double ws = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - pred[i];
    s += w[i] * e * e;
    ws += w[i];
  }
  return s / ws;
}

} // namespace

Tree fit_tree(const Matrix& x, std::span<const double> residuals, std::span<const double> weights,
              const GbdtParams& params) {
  params.validate();
  if (residuals.size() != x.rows()) {
    throw InvalidInput("fit_tree: residual count does not match rows");
  }
  const auto w = unit_weights_if_empty(weights, x.rows());
  if (w.size() != x.rows()) {
    throw InvalidInput("fit_tree: weight count does not match rows");
  }
  check_finite(x.data(), "feature matrix");
  check_finite(residuals, "residuals");
  check_finite(w, "weights");
  TreeBuilder builder(x, residuals, w, params, presort(x));
  return builder.build();
}

double WealthModel::predict_row(std::span<const double> row) const {
  double s = 0.0;
  for (const auto& t : trees) {
    s += t.predict(row);
  }
  return base_score + params.learning_rate * s;
}

WealthModel train(const Matrix& x, std::span<const double> y, std::span<const double> weights,
                  const GbdtParams& params) {
  params.validate();
  const std::size_t n = x.rows();
  if (n < 2) {
    throw InvalidInput("training needs at least two rows");
  }
  if (y.size() != n) {
    throw InvalidInput("label count does not match rows");
  }
  const auto w = unit_weights_if_empty(weights, n);
  if (w.size() != n) {
    throw InvalidInput("weight count does not match rows");
  }
  check_finite(x.data(), "feature matrix");
  check_finite(y, "labels");
  check_finite(w, "weights");
  double wsum = 0.0;
  double wy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] < 0.0) {
      throw InvalidInput("weights must be nonnegative");
    }
    wsum += w[i];
    wy += w[i] * y[i];
  }
  if (wsum <= 0.0) {
    throw InvalidInput("total weight must be positive");
  }

  WealthModel model;
  model.params = params;
  model.n_rows = n;
  model.base_score = wy / wsum;

  // Tree outputs are accumulated as in predict_row so training-time and
  // prediction-time values agree bit for bit.
  std::vector<double> tree_sum(n, 0.0);
  std::vector<double> pred(n, model.base_score);
  std::vector<double> residual(n);
  model.loss_history.push_back(weighted_mse(y, pred, w));
  const auto sorted = presort(x);

  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      residual[i] = y[i] - pred[i];
    }
    TreeBuilder builder(x, residual, w, params, sorted);
    model.trees.push_back(builder.build());
    const Tree& tree = model.trees.back();
    for (std::size_t i = 0; i < n; ++i) {
      tree_sum[i] += tree.predict(x.row(i));
      pred[i] = model.base_score + params.learning_rate * tree_sum[i];
    }
    const double loss = weighted_mse(y, pred, w);
    const double prev = model.loss_history.back();
    if (loss > prev + 1e-12 * model.loss_history.front()) {
      throw std::logic_error(
          fmt::format("boosting round {} increased training loss ({} -> {})", t + 1, prev, loss));
    }
    model.loss_history.push_back(loss);
  }
  return model;
}

std::vector<double> predict(const WealthModel& model, const Matrix& rows) {
  if (!model.feature_names.empty() && rows.cols() != model.feature_names.size()) {
    throw InvalidInput(fmt::format("model expects {} features, rows have {}",
                                   model.feature_names.size(), rows.cols()));
  }
  std::size_t needed = 0;
  for (const auto& t : model.trees) {
    for (const auto& nd : t.nodes) {
      if (!nd.is_leaf()) {
        needed = std::max(needed, static_cast<std::size_t>(nd.feature) + 1);
      }
    }
  }
  if (rows.cols() < needed) {
    throw InvalidInput(fmt::format("rows have {} features, model splits on feature {}",
                                   rows.cols(), needed - 1));
  }
  std::vector<double> out(rows.rows());
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (rows.rows() + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(rows.rows(), (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      out[i] = model.predict_row(rows.row(i));
    }
  });
  return out;
}

FeatureImportance gain_importance(const WealthModel& model, std::size_t n_features) {
  if (n_features == 0) {
    n_features = model.feature_names.size();
  }
  FeatureImportance imp;
  imp.mean_gain.assign(n_features, 0.0);
  imp.split_count.assign(n_features, 0);
  for (const auto& t : model.trees) {
    for (const auto& nd : t.nodes) {
      if (nd.is_leaf()) {
        continue;
      }
      const auto f = static_cast<std::size_t>(nd.feature);
      if (f >= n_features) {
        imp.mean_gain.resize(f + 1, 0.0);
        imp.split_count.resize(f + 1, 0);
      }
      imp.mean_gain[f] += nd.gain;
      imp.split_count[f] += 1;
    }
  }
  for (std::size_t f = 0; f < imp.mean_gain.size(); ++f) {
    if (imp.split_count[f] > 0) {
      imp.mean_gain[f] /= static_cast<double>(imp.split_count[f]);
    }
  }
  return imp;
}

// Model file: line-oriented text, numbers in shortest round-trip form.
void save_model(const WealthModel& model, std::ostream& out) {
  const auto& p = model.params;
  out << "povmap-gbdt 1\n";
  out << "max_depth " << p.max_depth << '\n';
  out << "min_child_weight " << csv::format(p.min_child_weight) << '\n';
  out << "n_trees " << p.n_trees << '\n';
  out << "learning_rate " << csv::format(p.learning_rate) << '\n';
  out << "seed " << p.seed << '\n';
  out << "rows " << model.n_rows << '\n';
  out << "base_score " << csv::format(model.base_score) << '\n';
  out << "features " << model.feature_names.size() << '\n';
  for (const auto& name : model.feature_names) {
    out << "feature " << name << '\n';
  }
  out << "norm_countries " << model.norm_stats.by_country.size() << '\n';
  for (const auto& [country, moments] : model.norm_stats.by_country) {
    out << "norm " << country;
    for (const auto& m : moments) {
      out << ' ' << csv::format(m.mean) << ' ' << csv::format(m.sd);
    }
    out << '\n';
  }
  out << "trees " << model.trees.size() << '\n';
  for (const auto& t : model.trees) {
    out << "tree " << t.nodes.size() << '\n';
    // Preorder layout means children follow their parent; indices are implied.
    for (const auto& nd : t.nodes) {
      if (nd.is_leaf()) {
        out << "leaf " << csv::format(nd.value) << ' ' << csv::format(nd.weight_sum) << '\n';
      } else {
        out << "split " << nd.feature << ' ' << csv::format(nd.threshold) << ' '
            << csv::format(nd.gain) << ' ' << csv::format(nd.value) << ' '
            << csv::format(nd.weight_sum) << '\n';
      }
    }
  }
  out << "end\n";
}

namespace {

class ModelReader {
public:
  explicit ModelReader(std::istream& in) : in_(in) {}

  std::istringstream line(const std::string& tag) {
    std::string text;
    if (!std::getline(in_, text)) {
      throw ParseError(fmt::format("model file truncated before '{}'", tag));
    }
    ++line_no_;
    std::istringstream ls(text);
    std::string got;
    ls >> got;
    if (got != tag) {
      throw ParseError(
          fmt::format("model file line {}: expected '{}', found '{}'", line_no_, tag, got));
    }
    return ls;
  }

  template <typename T>
  T value(const std::string& tag) {
    auto ls = line(tag);
    return read<T>(ls, tag);
  }

  template <typename T>
  T read(std::istringstream& ls, const std::string& tag) {
    if constexpr (std::is_same_v<T, double>) {
      std::string tok;
      if (!(ls >> tok)) {
        throw ParseError(fmt::format("model file line {}: missing value for '{}'", line_no_, tag));
      }
      return std::stod(tok);
    } else {
      T v{};
      if (!(ls >> v)) {
        throw ParseError(fmt::format("model file line {}: bad value for '{}'", line_no_, tag));
      }
      return v;
    }
  }

  std::size_t line_no() const { return line_no_; }

private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

} // namespace

WealthModel load_model(std::istream& in) {
  std::string header;
  // Manifest comments may precede the header.
  while (std::getline(in, header) && header.starts_with('#')) {
  }
  if (!in || header != "povmap-gbdt 1") {
    throw ParseError("not a povmap-gbdt version 1 model file");
  }
  ModelReader r(in);
  WealthModel m;
  m.params.max_depth = r.value<int>("max_depth");
  m.params.min_child_weight = r.value<double>("min_child_weight");
  m.params.n_trees = r.value<int>("n_trees");
  m.params.learning_rate = r.value<double>("learning_rate");
  m.params.seed = r.value<std::uint64_t>("seed");
  m.n_rows = r.value<std::size_t>("rows");
  m.base_score = r.value<double>("base_score");
  const auto n_features = r.value<std::size_t>("features");
  for (std::size_t i = 0; i < n_features; ++i) {
    m.feature_names.push_back(r.value<std::string>("feature"));
  }
  m.norm_stats.feature_names = m.feature_names;
  const auto n_countries = r.value<std::size_t>("norm_countries");
  for (std::size_t c = 0; c < n_countries; ++c) {
    auto ls = r.line("norm");
    const auto country = r.read<std::string>(ls, "norm");
    std::vector<Moments> moments(n_features);
    for (auto& mo : moments) {
      mo.mean = r.read<double>(ls, "norm");
      mo.sd = r.read<double>(ls, "norm");
    }
    m.norm_stats.by_country.emplace(country, std::move(moments));
  }
  const auto n_trees = r.value<std::size_t>("trees");
  for (std::size_t t = 0; t < n_trees; ++t) {
    const auto n_nodes = r.value<std::size_t>("tree");
    Tree tree;
    tree.nodes.resize(n_nodes);
    std::size_t next = 0;
    // Rebuild child links from the preorder sequence.
    std::function<int()> read_node = [&]() -> int {
      if (next >= n_nodes) {
        throw ParseError("model file: tree node count mismatch");
      }
      const int id = static_cast<int>(next++);
      std::string text;
      if (!std::getline(in, text)) {
        throw ParseError("model file truncated inside a tree");
      }
      std::istringstream ls(text);
      std::string kind;
      ls >> kind;
      TreeNode nd;
      if (kind == "leaf") {
        nd.value = r.read<double>(ls, "leaf");
        nd.weight_sum = r.read<double>(ls, "leaf");
        tree.nodes[static_cast<std::size_t>(id)] = nd;
        return id;
      }
      if (kind != "split") {
        throw ParseError(fmt::format("model file: unknown node kind '{}'", kind));
      }
      nd.feature = r.read<int>(ls, "split");
      nd.threshold = r.read<double>(ls, "split");
      nd.gain = r.read<double>(ls, "split");
      nd.value = r.read<double>(ls, "split");
      nd.weight_sum = r.read<double>(ls, "split");
      if (nd.feature < 0 || (n_features > 0 && static_cast<std::size_t>(nd.feature) >= n_features)) {
        throw ParseError("model file: split feature out of range");
      }
      tree.nodes[static_cast<std::size_t>(id)] = nd;
      const int left = read_node();
      const int right = read_node();
      tree.nodes[static_cast<std::size_t>(id)].left = left;
      tree.nodes[static_cast<std::size_t>(id)].right = right;
      return id;
    };
    read_node();
    if (next != n_nodes) {
      throw ParseError("model file: tree node count mismatch");
    }
    m.trees.push_back(std::move(tree));
  }
  std::string end;
  if (!std::getline(in, end) || end != "end") {
    throw ParseError("model file: missing 'end' marker");
  }
  return m;
}

} // namespace povmap
