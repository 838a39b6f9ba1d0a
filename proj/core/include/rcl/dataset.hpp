#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "rcl/rng.hpp"

namespace rcl {

// A labelled feature set together with its class-frequency bookkeeping.
// Labels are contiguous class ids in [0, num_classes) and every class has at
// least one instance.
struct Dataset {
  Eigen::MatrixXd features;      // rows = instances, cols = input_dim
  Eigen::VectorXi labels;        // class id per row
  Eigen::VectorXi class_counts;  // n_y, length num_classes
  int num_classes = 0;
  int input_dim = 0;

  long rows() const { return features.rows(); }
};

// Throws std::invalid_argument if the count bookkeeping or label contiguity
// is broken.
void validate_dataset(const Dataset& dataset);

// One sampled training batch with two independently jittered copies for the
// contrastive branch. view_a carries the raw rows for the classifier branch.
struct Batch {
  Eigen::VectorXi indices;
  Eigen::VectorXi labels;
  Eigen::VectorXi batch_class_counts;  // |B_y|, length = dataset num_classes
  Eigen::MatrixXd view_a;
  Eigen::MatrixXd view_b;
  Eigen::MatrixXd view_c;

  long size() const { return indices.size(); }
};

// Long-tail shape of a synthetic dataset: class k of L receives
// round(max_count * imbalance_factor^(-k/(L-1))) instances.
struct LongTailProfile {
  int num_classes = 2;
  int max_count = 100;
  double imbalance_factor = 1.0;  // head count / tail count, >= 1
};

// Per-class counts with geometric decay between the head and tail endpoints.
// Rounds half up and rejects profiles where any class would round to zero.
Eigen::VectorXi make_longtail_counts(const LongTailProfile& profile);

// Isotropic Gaussian blobs of standard deviation noise_sigma around class
// centers placed on a ring of radius center_scale in the first two
// coordinates (ring rotation is seed-derived, so center placement is
// deterministic). When center_seed is given the centers are derived from it
// instead of seed; splits of one underlying distribution share a center_seed
// and differ only in their noise seed. Identical arguments give a
// bit-identical dataset.
Dataset gen_gaussian_mixture(const Eigen::VectorXi& counts, int input_dim,
                             double center_scale, double noise_sigma,
                             std::uint64_t seed,
                             std::optional<std::uint64_t> center_seed = {});

// Uniform without-replacement index draw; view_b/view_c add independent
// Gaussian jitter of scale jitter_sigma on top of the selected rows.
// Advances sampler_state; replaying the same state reproduces the batch.
Batch sample_batch(const Dataset& dataset, long batch_size, Rng& sampler_state,
                   double jitter_sigma);

// Text container: header "longtail-v1 L=<int> D=<int>", then one line per
// instance "<label> <f_1> ... <f_D>". Floats are printed with 17 significant
// digits so read(write(d)) == d exactly.
void write_dataset(const Dataset& dataset, std::ostream& out);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(std::istream& in, const std::string& name = "<stream>");
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace rcl
