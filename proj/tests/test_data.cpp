#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "rcl/dataset.hpp"
#include "rcl/errors.hpp"
#include "rcl/rng.hpp"

using Eigen::VectorXi;

TEST_CASE("make_longtail_counts endpoints") {
  const VectorXi cifar10_like = rcl::make_longtail_counts({10, 5000, 100.0});
  CHECK(cifar10_like[0] == 5000);
  CHECK(cifar10_like[9] == 50);

  const VectorXi cifar100_like = rcl::make_longtail_counts({100, 500, 100.0});
  CHECK(cifar100_like[0] == 500);
  CHECK(cifar100_like[99] == 5);

  const VectorXi balanced = rcl::make_longtail_counts({4, 8, 1.0});
  for (int k = 0; k < 4; ++k) CHECK(balanced[k] == 8);
}

TEST_CASE("make_longtail_counts validation") {
  CHECK_THROWS_AS(rcl::make_longtail_counts({1, 100, 10.0}), std::invalid_argument);
  CHECK_THROWS_AS(rcl::make_longtail_counts({5, 100, 0.5}), std::invalid_argument);
  // tail would round to zero
  CHECK_THROWS_AS(rcl::make_longtail_counts({5, 10, 100.0}), std::invalid_argument);
}

TEST_CASE("make_longtail_counts ratio and monotonicity") {
  rcl::Rng rng(9);
  for (int round = 0; round < 50; ++round) {
    const int L = 2 + static_cast<int>(rng.uniform_below(20));
    const double target = 1.0 + rng.uniform() * 200.0;
    const int n_max = 200 + static_cast<int>(rng.uniform_below(2000));
    rcl::LongTailProfile profile{L, n_max, target};
    if (std::floor(n_max / target + 0.5) < 1) continue;
    const VectorXi counts = rcl::make_longtail_counts(profile);
    CHECK(counts[0] == n_max);
    for (int k = 1; k < L; ++k) CHECK(counts[k] <= counts[k - 1]);
    // head/tail ratio reproduces the imbalance factor up to the tail rounding:
    // the tail count differs from n_max/IF by at most one half
    const double true_tail = n_max / target;
    const double ratio = static_cast<double>(counts[0]) / counts[L - 1];
    CHECK(ratio >= n_max / (true_tail + 0.5) - 1e-9);
    CHECK(ratio <= n_max / std::max(true_tail - 0.5, 0.5) + 1e-9);
    if (std::abs(true_tail - std::floor(true_tail)) < 1e-12)
      CHECK(ratio == doctest::Approx(target).epsilon(1e-12));  // integral division is exact
  }
}

TEST_CASE("gen_gaussian_mixture bookkeeping and determinism") {
  VectorXi counts(2);
  counts << 3, 2;
  const rcl::Dataset a = rcl::gen_gaussian_mixture(counts, 2, 10.0, 0.01, 7);
  CHECK(a.rows() == 5);
  CHECK(a.class_counts[0] == 3);
  CHECK(a.class_counts[1] == 2);
  CHECK(a.input_dim == 2);
  rcl::validate_dataset(a);

  const rcl::Dataset b = rcl::gen_gaussian_mixture(counts, 2, 10.0, 0.01, 7);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);

  const rcl::Dataset c = rcl::gen_gaussian_mixture(counts, 2, 10.0, 0.01, 8);
  CHECK((a.features - c.features).cwiseAbs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(rcl::gen_gaussian_mixture(counts, 2, 10.0, 0.0, 7), std::invalid_argument);
  CHECK_THROWS_AS(rcl::gen_gaussian_mixture(counts, 1, 10.0, 0.1, 7), std::invalid_argument);
}

TEST_CASE("gen_gaussian_mixture separable classes beat a nearest-centroid oracle") {
  VectorXi counts(2);
  counts << 50, 5;
  const double noise = 0.5;
  const rcl::Dataset data = rcl::gen_gaussian_mixture(counts, 2, 10.0 * noise, noise, 21);

  // nearest-centroid oracle computed from the generated set itself
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(2, 2);
  for (long i = 0; i < data.rows(); ++i) centroids.row(data.labels[i]) += data.features.row(i);
  for (int y = 0; y < 2; ++y) centroids.row(y) /= data.class_counts[y];

  long correct = 0;
  for (long i = 0; i < data.rows(); ++i) {
    const double d0 = (data.features.row(i) - centroids.row(0)).norm();
    const double d1 = (data.features.row(i) - centroids.row(1)).norm();
    const int pred = d0 <= d1 ? 0 : 1;
    if (pred == data.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / data.rows() > 0.95);
}

TEST_CASE("shared center seed aligns splits, noise stays independent") {
  VectorXi counts(3);
  counts << 4, 4, 4;
  const rcl::Dataset a = rcl::gen_gaussian_mixture(counts, 2, 5.0, 0.01, 100, 555);
  const rcl::Dataset b = rcl::gen_gaussian_mixture(counts, 2, 5.0, 0.01, 200, 555);
  // tiny noise: per-class means land near the shared centers
  for (int y = 0; y < 3; ++y) {
    Eigen::RowVector2d mean_a = Eigen::RowVector2d::Zero(), mean_b = Eigen::RowVector2d::Zero();
    for (long i = 0; i < a.rows(); ++i) {
      if (a.labels[i] == y) mean_a += a.features.row(i);
      if (b.labels[i] == y) mean_b += b.features.row(i);
    }
    CHECK((mean_a / 4 - mean_b / 4).norm() < 0.1);
  }
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sample_batch views and counts") {
  VectorXi counts(2);
  counts << 3, 2;
  const rcl::Dataset data = rcl::gen_gaussian_mixture(counts, 2, 4.0, 0.2, 77);

  rcl::Rng stream(5);
  const rcl::Batch full = rcl::sample_batch(data, data.rows(), stream, 0.0);
  CHECK(full.size() == 5);
  CHECK(full.batch_class_counts[0] == 3);
  CHECK(full.batch_class_counts[1] == 2);
  for (long j = 0; j < full.size(); ++j) {
    CHECK((full.view_a.row(j) - data.features.row(full.indices[j])).cwiseAbs().maxCoeff() == 0.0);
    CHECK((full.view_b.row(j) - full.view_a.row(j)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((full.view_c.row(j) - full.view_a.row(j)).cwiseAbs().maxCoeff() == 0.0);
  }

  const rcl::Batch four = rcl::sample_batch(data, 4, stream, 0.0);
  for (long i = 0; i < 4; ++i)
    for (long j = i + 1; j < 4; ++j) CHECK(four.indices[i] != four.indices[j]);

  CHECK_THROWS_AS(rcl::sample_batch(data, 0, stream, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rcl::sample_batch(data, 6, stream, 0.0), std::invalid_argument);
}

TEST_CASE("sample_batch stream replay") {
  VectorXi counts(2);
  counts << 10, 10;
  const rcl::Dataset data = rcl::gen_gaussian_mixture(counts, 3, 4.0, 0.2, 13);

  rcl::Rng stream(42);
  const rcl::Rng saved = stream;
  const rcl::Batch first = rcl::sample_batch(data, 6, stream, 0.3);
  const rcl::Batch second = rcl::sample_batch(data, 6, stream, 0.3);
  CHECK((first.view_b - second.view_b).cwiseAbs().maxCoeff() > 0.0);  // stream advanced

  rcl::Rng replay = saved;
  const rcl::Batch again = rcl::sample_batch(data, 6, replay, 0.3);
  CHECK((first.indices - again.indices).cwiseAbs().maxCoeff() == 0);
  CHECK((first.view_b - again.view_b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((first.view_c - again.view_c).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_batch label bookkeeping properties") {
  rcl::Rng seeds(3);
  for (int round = 0; round < 20; ++round) {
    VectorXi counts(3);
    counts << 5 + static_cast<int>(seeds.uniform_below(10)),
        1 + static_cast<int>(seeds.uniform_below(10)), 1 + static_cast<int>(seeds.uniform_below(4));
    const rcl::Dataset data = rcl::gen_gaussian_mixture(counts, 2, 3.0, 0.5, seeds.next_u64());
    rcl::Rng stream(seeds.next_u64());
    const long batch_size = 1 + static_cast<long>(seeds.uniform_below(
                                    static_cast<std::uint64_t>(data.rows())));
    const rcl::Batch batch = rcl::sample_batch(data, batch_size, stream, 0.1);
    CHECK(batch.batch_class_counts.sum() == batch_size);
    for (long j = 0; j < batch.size(); ++j)
      CHECK(batch.labels[j] == data.labels[batch.indices[j]]);
  }
}

TEST_CASE("dataset file round trip is exact") {
  rcl::Rng seeds(55);
  for (int round = 0; round < 25; ++round) {
    const int L = 2 + static_cast<int>(seeds.uniform_below(4));
    VectorXi counts(L);
    for (int y = 0; y < L; ++y) counts[y] = 1 + static_cast<int>(seeds.uniform_below(12));
    const rcl::Dataset data = rcl::gen_gaussian_mixture(
        counts, 2 + static_cast<int>(seeds.uniform_below(3)), 3.0, 0.7, seeds.next_u64());

    std::stringstream file;
    rcl::write_dataset(data, file);
    const rcl::Dataset parsed = rcl::read_dataset(file, "roundtrip");
    CHECK(parsed.num_classes == data.num_classes);
    CHECK(parsed.input_dim == data.input_dim);
    CHECK((parsed.labels - data.labels).cwiseAbs().maxCoeff() == 0);
    CHECK((parsed.class_counts - data.class_counts).cwiseAbs().maxCoeff() == 0);
    CHECK((parsed.features - data.features).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("read_dataset structured failures") {
  {
    std::stringstream empty;
    CHECK_THROWS_AS(rcl::read_dataset(empty, "empty"), rcl::ParseError);
  }
  {
    std::stringstream header_only("longtail-v1 L=2 D=2\n");
    CHECK_THROWS_AS(rcl::read_dataset(header_only, "header"), rcl::ParseError);
  }
  {
    std::stringstream bad_label("longtail-v1 L=2 D=2\n0 0.0 0.0\n2 1.0 1.0\n1 1.0 1.0\n");
    CHECK_THROWS_WITH_AS(rcl::read_dataset(bad_label, "lbl"),
                         "lbl:3: label 2 out of range [0, 2)", rcl::ParseError);
  }
  {
    std::stringstream missing_class("longtail-v1 L=3 D=2\n0 0.0 0.0\n1 1.0 1.0\n");
    CHECK_THROWS_AS(rcl::read_dataset(missing_class, "gap"), rcl::ParseError);
  }
  {
    std::stringstream short_row("longtail-v1 L=2 D=3\n0 0.0 0.0\n1 1.0 1.0 1.0\n");
    CHECK_THROWS_AS(rcl::read_dataset(short_row, "short"), rcl::ParseError);
  }
  {
    std::stringstream garbage("not-a-dataset\n");
    CHECK_THROWS_AS(rcl::read_dataset(garbage, "junk"), rcl::ParseError);
  }
}
