#include "rcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace rcl {

namespace {

// Returns the class count vector, enforcing contiguous labels in [0, L) with
// every class represented.
Eigen::VectorXi class_histogram(const Eigen::VectorXi& labels, int num_classes,
                                const char* caller) {
  Eigen::VectorXi hist = Eigen::VectorXi::Zero(num_classes);
  for (long i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument(std::string(caller) + ": label out of range");
    hist[y] += 1;
  }
  for (int y = 0; y < num_classes; ++y)
    if (hist[y] == 0)
      throw std::invalid_argument(std::string(caller) + ": class " + std::to_string(y) +
                                  " absent from labels");
  return hist;
}

Eigen::MatrixXd class_centroids(const Eigen::MatrixXd& points, const Eigen::VectorXi& labels,
                                const Eigen::VectorXi& hist) {
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(hist.size(), points.cols());
  for (long i = 0; i < points.rows(); ++i) centroids.row(labels[i]) += points.row(i);
  for (long y = 0; y < hist.size(); ++y) centroids.row(y) /= static_cast<double>(hist[y]);
  return centroids;
}

}  // namespace

Eigen::VectorXd per_class_accuracy(const Eigen::VectorXi& predictions,
                                   const Eigen::VectorXi& labels, int num_classes) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("per_class_accuracy: length mismatch");
  if (num_classes < 1) throw std::invalid_argument("per_class_accuracy: need at least one class");
  const Eigen::VectorXi hist = class_histogram(labels, num_classes, "per_class_accuracy");

  Eigen::VectorXi correct = Eigen::VectorXi::Zero(num_classes);
  for (long i = 0; i < labels.size(); ++i)
    if (predictions[i] == labels[i]) correct[labels[i]] += 1;

  Eigen::VectorXd acc(num_classes);
  for (int y = 0; y < num_classes; ++y)
    acc[y] = static_cast<double>(correct[y]) / static_cast<double>(hist[y]);
  return acc;
}

double arithmetic_mean_acc(const Eigen::VectorXd& per_class) {
  if (per_class.size() == 0) throw std::invalid_argument("arithmetic_mean_acc: empty vector");
  return per_class.mean();
}

double harmonic_mean_acc(const Eigen::VectorXd& per_class) {
  if (per_class.size() == 0) throw std::invalid_argument("harmonic_mean_acc: empty vector");
  double inv_sum = 0.0;
  for (long y = 0; y < per_class.size(); ++y) {
    if (per_class[y] == 0.0) return 0.0;
    inv_sum += 1.0 / per_class[y];
  }
  return static_cast<double>(per_class.size()) / inv_sum;
}

double calinski_harabasz(const Eigen::MatrixXd& points, const Eigen::VectorXi& labels) {
  const long n = points.rows();
  if (labels.size() != n) throw std::invalid_argument("calinski_harabasz: length mismatch");
  const int k = labels.size() > 0 ? labels.maxCoeff() + 1 : 0;
  if (k < 2) throw std::invalid_argument("calinski_harabasz: need at least 2 classes");
  if (n <= k) throw std::invalid_argument("calinski_harabasz: need more points than classes");
  const Eigen::VectorXi hist = class_histogram(labels, k, "calinski_harabasz");
  const Eigen::MatrixXd centroids = class_centroids(points, labels, hist);
  const Eigen::RowVectorXd global = points.colwise().mean();

  double between = 0.0;
  for (int y = 0; y < k; ++y)
    between += hist[y] * (centroids.row(y) - global).squaredNorm();
  double within = 0.0;
  for (long i = 0; i < n; ++i)
    within += (points.row(i) - centroids.row(labels[i])).squaredNorm();

  if (within == 0.0)
    throw std::domain_error("calinski_harabasz: zero within-class dispersion (index unbounded)");
  return (between / (k - 1)) / (within / (n - k));
}

double davies_bouldin(const Eigen::MatrixXd& points, const Eigen::VectorXi& labels) {
  const long n = points.rows();
  if (labels.size() != n) throw std::invalid_argument("davies_bouldin: length mismatch");
  const int k = labels.size() > 0 ? labels.maxCoeff() + 1 : 0;
  if (k < 2) throw std::invalid_argument("davies_bouldin: need at least 2 classes");
  const Eigen::VectorXi hist = class_histogram(labels, k, "davies_bouldin");
  const Eigen::MatrixXd centroids = class_centroids(points, labels, hist);

  Eigen::VectorXd scatter = Eigen::VectorXd::Zero(k);  // mean distance to own centroid
  for (long i = 0; i < n; ++i)
    scatter[labels[i]] += (points.row(i) - centroids.row(labels[i])).norm();
  for (int y = 0; y < k; ++y) scatter[y] /= static_cast<double>(hist[y]);

  double total = 0.0;
  for (int y = 0; y < k; ++y) {
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      if (j == y) continue;
      const double separation = (centroids.row(y) - centroids.row(j)).norm();
      if (separation == 0.0)
        throw std::domain_error("davies_bouldin: coincident centroids for classes " +
                                std::to_string(y) + " and " + std::to_string(j));
      worst = std::max(worst, (scatter[y] + scatter[j]) / separation);
    }
    total += worst;
  }
  return total / k;
}

MarginStats margin_stats(const Eigen::MatrixXd& unit_embeddings, const Eigen::VectorXi& labels) {
  const long n = unit_embeddings.rows();
  if (labels.size() != n) throw std::invalid_argument("margin_stats: length mismatch");
  if (n == 0) throw std::invalid_argument("margin_stats: empty input");
  for (long i = 0; i < n; ++i)
    if (std::abs(unit_embeddings.row(i).norm() - 1.0) > 1e-9)
      throw std::invalid_argument("margin_stats: row " + std::to_string(i) +
                                  " is not unit-normalized");
  const int k = labels.maxCoeff() + 1;
  const Eigen::VectorXi hist = class_histogram(labels, k, "margin_stats");

  Eigen::MatrixXd sim_sum = Eigen::MatrixXd::Zero(k, k);
  const Eigen::MatrixXd gram = unit_embeddings * unit_embeddings.transpose();
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j) {
      sim_sum(labels[i], labels[j]) += gram(i, j);
      if (labels[i] != labels[j]) sim_sum(labels[j], labels[i]) += gram(i, j);
    }

  MarginStats stats;
  stats.num_classes = k;
  stats.intra_mean.resize(k);
  stats.margin.resize(k);
  stats.inter_mean = Eigen::MatrixXd::Zero(k, k);
  for (int y = 0; y < k; ++y) {
    const long pairs = static_cast<long>(hist[y]) * (hist[y] - 1) / 2;
    if (pairs > 0) stats.intra_mean[y] = sim_sum(y, y) / static_cast<double>(pairs);
    for (int j = 0; j < k; ++j) {
      if (j == y) continue;
      stats.inter_mean(y, j) =
          sim_sum(y, j) / (static_cast<double>(hist[y]) * static_cast<double>(hist[j]));
    }
  }
  for (int y = 0; y < k; ++y) {
    if (!stats.intra_mean[y].has_value() || k < 2) continue;
    double worst = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j)
      if (j != y) worst = std::max(worst, stats.inter_mean(y, j));
    stats.margin[y] = *stats.intra_mean[y] - worst;
  }
  return stats;
}

void write_metrics(const MetricsReport& report, std::ostream& out) {
  const int k = static_cast<int>(report.per_class_accuracy.size());
  out << "metrics-v1\n" << std::setprecision(17);
  out << "num_classes = " << k << "\n";
  out << "per_class_accuracy =";
  for (int y = 0; y < k; ++y) out << ' ' << report.per_class_accuracy[y];
  out << "\n";
  out << "arithmetic_mean_acc = " << report.arithmetic_mean << "\n";
  out << "harmonic_mean_acc = " << report.harmonic_mean << "\n";
  out << "harmonic_zero_class = " << (report.harmonic_zero_class ? 1 : 0) << "\n";
  out << "calinski_harabasz = " << report.chi << "\n";
  out << "davies_bouldin = " << report.dbi << "\n";
  for (int y = 0; y < report.margins.num_classes; ++y) {
    out << "intra_mean_" << y << " = ";
    if (report.margins.intra_mean[y].has_value()) out << *report.margins.intra_mean[y];
    else out << "none";
    out << "\n";
  }
  for (int y = 0; y < report.margins.num_classes; ++y)
    for (int j = 0; j < report.margins.num_classes; ++j) {
      if (j == y) continue;
      out << "inter_mean_" << y << "_" << j << " = " << report.margins.inter_mean(y, j) << "\n";
    }
  for (int y = 0; y < report.margins.num_classes; ++y) {
    out << "margin_" << y << " = ";
    if (report.margins.margin[y].has_value()) out << *report.margins.margin[y];
    else out << "none";
    out << "\n";
  }
}

}  // namespace rcl
