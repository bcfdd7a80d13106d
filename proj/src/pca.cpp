#include "povmap/pca.hpp"

#include "povmap/csv.hpp"
#include "povmap/error.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <fmt/core.h>

namespace povmap {

std::vector<double> PcaModel::cumulative_explained_variance() const {
  std::vector<double> out(explained_variance_ratio.size());
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    s += explained_variance_ratio[i];
    out[i] = s;
  }
  return out;
}

PcaModel pca_fit(const Matrix& data, std::size_t k, bool scale) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  if (n < 2) {
    throw InvalidInput("PCA needs at least two rows");
  }
  if (k < 1 || k > std::min(n - 1, d)) {
    throw InvalidInput(fmt::format("PCA k={} outside [1, {}]", k, std::min(n - 1, d)));
  }
  PcaModel model;
  model.scaled = scale;
  model.column_means.assign(d, 0.0);
  model.column_scales.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += data(i, j);
    }
    model.column_means[j] = s / static_cast<double>(n);
    if (scale) {
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dv = data(i, j) - model.column_means[j];
        ss += dv * dv;
      }
      const double sd = std::sqrt(ss / static_cast<double>(n));
      if (sd > 0.0) {
        model.column_scales[j] = sd;
      }
    }
  }

  Eigen::MatrixXd centered(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      centered(i, j) = (data(i, j) - model.column_means[j]) / model.column_scales[j];
    }
  }
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const double total = cov.trace();
  if (!(total > 0.0)) {
    throw DegenerateInput("PCA input has no variance: every column is constant");
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw DegenerateInput("covariance eigendecomposition failed");
  }
  // Eigen returns ascending eigenvalues.
  model.components = Matrix(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    const auto col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j) {
      if (std::abs(v(j)) > std::abs(v(arg))) {
        arg = j;
      }
    }
    if (v(arg) < 0.0) {
      v = -v;
    }
    for (std::size_t j = 0; j < d; ++j) {
      model.components(c, j) = v(static_cast<Eigen::Index>(j));
    }
    const double lambda = std::max(0.0, solver.eigenvalues()(col));
    model.eigenvalues.push_back(lambda);
    model.explained_variance_ratio.push_back(lambda / total);
  }
  return model;
}

Matrix pca_project(const PcaModel& model, const Matrix& rows) {
  const std::size_t d = model.dims();
  if (rows.cols() != d) {
    throw InvalidInput(fmt::format("PCA projection expects {} columns, got {}", d, rows.cols()));
  }
  Matrix out(rows.rows(), model.k());
  std::vector<double> z(d);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      z[j] = (rows(i, j) - model.column_means[j]) / model.column_scales[j];
    }
    for (std::size_t c = 0; c < model.k(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        s += z[j] * model.components(c, j);
      }
      out(i, c) = s;
    }
  }
  return out;
}

Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores) {
  if (scores.cols() != model.k()) {
    throw InvalidInput("score matrix width does not match the number of components");
  }
  const std::size_t d = model.dims();
  Matrix out(scores.rows(), d);
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < model.k(); ++c) {
        s += scores(i, c) * model.components(c, j);
      }
      out(i, j) = s * model.column_scales[j] + model.column_means[j];
    }
  }
  return out;
}

namespace {

void write_line(std::ostream& out, const char* tag, std::span<const double> values) {
  out << tag;
  for (double v : values) {
    out << ' ' << csv::format(v);
  }
  out << '\n';
}

std::vector<double> read_line(std::istream& in, const std::string& tag, std::size_t count) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(fmt::format("PCA model truncated before '{}'", tag));
  }
  std::istringstream ls(line);
  std::string got;
  ls >> got;
  if (got != tag) {
    throw ParseError(fmt::format("PCA model: expected '{}', found '{}'", tag, got));
  }
  std::vector<double> values;
  std::string tok;
  while (ls >> tok) {
    values.push_back(std::stod(tok));
  }
  if (values.size() != count) {
    throw ParseError(fmt::format("PCA model: '{}' has {} values, expected {}", tag,
                                 values.size(), count));
  }
  return values;
}

} // namespace

void save_pca(const PcaModel& model, std::ostream& out) {
  out << "povmap-pca 1\n";
  out << "dims " << model.dims() << ' ' << model.k() << ' ' << (model.scaled ? 1 : 0) << '\n';
  write_line(out, "means", model.column_means);
  write_line(out, "scales", model.column_scales);
  write_line(out, "eigenvalues", model.eigenvalues);
  write_line(out, "ratios", model.explained_variance_ratio);
  for (std::size_t c = 0; c < model.k(); ++c) {
    write_line(out, "component", model.components.row(c));
  }
}

PcaModel load_pca(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "povmap-pca 1") {
    throw ParseError("not a povmap-pca version 1 file");
  }
  std::string tag;
  std::size_t d = 0;
  std::size_t k = 0;
  int scaled = 0;
  if (!std::getline(in, line)) {
    throw ParseError("PCA model truncated");
  }
  std::istringstream ls(line);
  if (!(ls >> tag >> d >> k >> scaled) || tag != "dims") {
    throw ParseError("PCA model: malformed dims line");
  }
  PcaModel m;
  m.scaled = scaled != 0;
  m.column_means = read_line(in, "means", d);
  m.column_scales = read_line(in, "scales", d);
  m.eigenvalues = read_line(in, "eigenvalues", k);
  m.explained_variance_ratio = read_line(in, "ratios", k);
  m.components = Matrix(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    const auto row = read_line(in, "component", d);
    std::copy(row.begin(), row.end(), m.components.row(c).begin());
  }
  return m;
}

} // namespace povmap
