#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <vector>

namespace rcl {

// Cosine-similarity margin structure of a labelled embedding set. Intra-class
// means are absent for singleton classes; a class margin is its intra-class
// mean minus its worst (largest) inter-class mean.
struct MarginStats {
  int num_classes = 0;
  std::vector<std::optional<double>> intra_mean;
  Eigen::MatrixXd inter_mean;  // L x L, diagonal unused
  std::vector<std::optional<double>> margin;
};

struct MetricsReport {
  Eigen::VectorXd per_class_accuracy;
  double arithmetic_mean = 0.0;
  double harmonic_mean = 0.0;
  bool harmonic_zero_class = false;  // some class scored 0, harmonic pinned to 0
  double chi = 0.0;                  // Calinski-Harabasz index
  double dbi = 0.0;                  // Davies-Bouldin index
  MarginStats margins;
};

// Fraction correct per class. Every class in [0, num_classes) must occur in
// labels, otherwise the ratio is undefined and the call is rejected.
Eigen::VectorXd per_class_accuracy(const Eigen::VectorXi& predictions,
                                   const Eigen::VectorXi& labels, int num_classes);

double arithmetic_mean_acc(const Eigen::VectorXd& per_class);

// L / sum(1/a_y); defined as 0 when any class accuracy is 0 (the limit).
double harmonic_mean_acc(const Eigen::VectorXd& per_class);

// Between/within dispersion ratio normalized by degrees of freedom:
//   CHI = [B/(k-1)] / [W/(n-k)].
// Throws std::domain_error when the within-class dispersion is zero.
double calinski_harabasz(const Eigen::MatrixXd& points, const Eigen::VectorXi& labels);

// Mean over classes of the worst (S_y + S_j) / M_yj ratio. Throws
// std::domain_error when two class centroids coincide.
double davies_bouldin(const Eigen::MatrixXd& points, const Eigen::VectorXi& labels);

// Intra/inter cosine-similarity means and per-class margins; rows must be
// unit vectors.
MarginStats margin_stats(const Eigen::MatrixXd& unit_embeddings,
                         const Eigen::VectorXi& labels);

// Flat key-value text record.
void write_metrics(const MetricsReport& report, std::ostream& out);

}  // namespace rcl
