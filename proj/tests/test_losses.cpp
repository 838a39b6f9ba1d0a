#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "oracles.hpp"
#include "rcl/losses.hpp"
#include "rcl/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

VectorXd logits2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

rcl::EmbeddingBatch basis_batch(std::initializer_list<int> axes, std::initializer_list<int> labels,
                                int dim = 3) {
  rcl::EmbeddingBatch batch;
  batch.embeddings = MatrixXd::Zero(static_cast<long>(axes.size()), dim);
  long i = 0;
  for (const int axis : axes) batch.embeddings(i++, axis) = 1.0;
  batch.labels.resize(static_cast<long>(labels.size()));
  i = 0;
  for (const int label : labels) batch.labels[i++] = label;
  return batch;
}

rcl::EmbeddingBatch random_batch(rcl::Rng& rng, long rows, long dim, int num_classes,
                                 bool pair_up = true) {
  rcl::EmbeddingBatch batch;
  batch.embeddings = oracle::random_unit_rows(rng, rows, dim);
  batch.labels = oracle::random_labels(rng, rows, num_classes, pair_up);
  return batch;
}

rcl::Prototypes random_prototypes(rcl::Rng& rng, int num_classes, long dim) {
  return rcl::Prototypes{oracle::random_unit_rows(rng, num_classes, dim)};
}

// Gradient of a contrastive loss checked against central finite differences
// on the flattened embedding matrix (and prototypes when present).
double contrastive_grad_err(const std::function<rcl::ContrastiveLoss(
                                const rcl::EmbeddingBatch&, const rcl::Prototypes&)>& loss,
                            rcl::EmbeddingBatch batch, rcl::Prototypes prototypes,
                            bool check_prototypes) {
  const long m = batch.embeddings.rows();
  const long k = batch.embeddings.cols();
  const long pk = prototypes.centers.size();

  const rcl::ContrastiveLoss analytic = loss(batch, prototypes);

  VectorXd x(m * k + (check_prototypes ? pk : 0));
  for (long i = 0; i < m; ++i)
    for (long d = 0; d < k; ++d) x[i * k + d] = batch.embeddings(i, d);
  if (check_prototypes)
    for (long i = 0; i < prototypes.centers.rows(); ++i)
      for (long d = 0; d < k; ++d) x[m * k + i * k + d] = prototypes.centers(i, d);

  auto f = [&](const VectorXd& v) {
    rcl::EmbeddingBatch b = batch;
    rcl::Prototypes p = prototypes;
    for (long i = 0; i < m; ++i)
      for (long d = 0; d < k; ++d) b.embeddings(i, d) = v[i * k + d];
    if (check_prototypes)
      for (long i = 0; i < p.centers.rows(); ++i)
        for (long d = 0; d < k; ++d) p.centers(i, d) = v[m * k + i * k + d];
    return loss(b, p).value;
  };

  VectorXd numeric = oracle::finite_diff(f, x);
  VectorXd flat(x.size());
  for (long i = 0; i < m; ++i)
    for (long d = 0; d < k; ++d) flat[i * k + d] = analytic.embedding_grad(i, d);
  if (check_prototypes)
    for (long i = 0; i < prototypes.centers.rows(); ++i)
      for (long d = 0; d < k; ++d) flat[m * k + i * k + d] = analytic.prototype_grad(i, d);
  return oracle::max_rel_err_guarded(flat, numeric, oracle::fd_noise_floor(analytic.value));
}

}  // namespace

TEST_CASE("log_sum_exp basics") {
  VectorXd v(2);
  v << 0.0, 0.0;
  CHECK(rcl::log_sum_exp(v) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  v << 1000.0, 1000.0;
  CHECK(rcl::log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

  VectorXd single(1);
  single << -3.25;
  CHECK(rcl::log_sum_exp(single) == -3.25);  // exact singleton identity

  VectorXd empty(0);
  CHECK_THROWS_AS(rcl::log_sum_exp(empty), std::invalid_argument);
}

TEST_CASE("log_sum_exp shift identity") {
  rcl::Rng rng(11);
  for (int round = 0; round < 50; ++round) {
    VectorXd v(5);
    for (int i = 0; i < 5; ++i) v[i] = 4.0 * rng.normal();
    const double c = 10.0 * rng.normal();
    CHECK(std::abs(rcl::log_sum_exp((v.array() + c).matrix()) - (rcl::log_sum_exp(v) + c)) <
          1e-12);
  }
}

TEST_CASE("ce_loss examples") {
  auto uniform = rcl::ce_loss(logits2(0.0, 0.0), 0);
  CHECK(uniform.value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  auto wide = rcl::ce_loss(logits2(10.0, -10.0), 0);
  CHECK(wide.value == doctest::Approx(2.0611536203143807e-09).epsilon(1e-9));
  CHECK(wide.grad[0] == doctest::Approx(-2.0611536181902036e-09).epsilon(1e-9));
  CHECK(wide.grad[1] == doctest::Approx(2.0611536181902036e-09).epsilon(1e-9));

  CHECK_THROWS_AS(rcl::ce_loss(logits2(0, 0), 2), std::invalid_argument);
  CHECK_THROWS_AS(rcl::ce_loss(logits2(0, 0), -1), std::invalid_argument);
}

TEST_CASE("ce_loss gradient vs finite differences") {
  rcl::Rng rng(23);
  for (int round = 0; round < 20; ++round) {
    VectorXd f(4);
    for (int i = 0; i < 4; ++i) f[i] = 2.0 * rng.normal();
    const int y = static_cast<int>(rng.uniform_below(4));
    const auto loss = rcl::ce_loss(f, y);
    const VectorXd numeric =
        oracle::finite_diff([&](const VectorXd& v) { return rcl::ce_loss(v, y).value; }, f);
    CHECK(oracle::max_rel_err(loss.grad, numeric) < 1e-5);
  }
}

TEST_CASE("balanced_softmax_loss examples") {
  VectorXi equal(2);
  equal << 7, 7;
  CHECK(rcl::balanced_softmax_loss(logits2(0, 0), 0, equal).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));

  VectorXi skewed(2);
  skewed << 9, 1;
  CHECK(rcl::balanced_softmax_loss(logits2(0, 0), 1, skewed).value ==
        doctest::Approx(std::log(10.0)).epsilon(1e-14));

  VectorXi bad(2);
  bad << 0, 3;
  CHECK_THROWS_AS(rcl::balanced_softmax_loss(logits2(0, 0), 0, bad), std::invalid_argument);
}

TEST_CASE("logit_adjusted_loss examples") {
  VectorXd uniform(2);
  uniform << 0.5, 0.5;

  // tau = 0 disables the adjustment
  rcl::Rng rng(5);
  for (int round = 0; round < 10; ++round) {
    VectorXd f(2);
    f << rng.normal(), rng.normal();
    const int y = static_cast<int>(rng.uniform_below(2));
    CHECK(rcl::logit_adjusted_loss(f, y, uniform, 0.0).value ==
          doctest::Approx(rcl::ce_loss(f, y).value).epsilon(1e-15));
  }

  // uniform priors shift cancels
  CHECK(rcl::logit_adjusted_loss(logits2(1, 0), 0, uniform, 2.0).value ==
        doctest::Approx(0.31326168751822286).epsilon(1e-14));

  VectorXd skewed(2);
  skewed << 0.9, 0.1;
  CHECK(rcl::logit_adjusted_loss(logits2(0, 0), 1, skewed, 1.0).value ==
        doctest::Approx(std::log(10.0)).epsilon(1e-14));

  VectorXd zero(2);
  zero << 1.0, 0.0;
  CHECK_THROWS_AS(rcl::logit_adjusted_loss(logits2(0, 0), 0, zero, 1.0), std::invalid_argument);
}

TEST_CASE("classifier loss identity chain") {
  rcl::Rng rng(37);
  for (int round = 0; round < 100; ++round) {
    const int L = 2 + static_cast<int>(rng.uniform_below(5));
    VectorXd f(L);
    for (int i = 0; i < L; ++i) f[i] = 3.0 * rng.normal();
    const int y = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(L)));

    VectorXi counts(L);
    long total = 0;
    for (int i = 0; i < L; ++i) {
      counts[i] = 1 + static_cast<int>(rng.uniform_below(1000));
      total += counts[i];
    }
    const VectorXd priors = counts.cast<double>() / static_cast<double>(total);

    const double balanced = rcl::balanced_softmax_loss(f, y, counts).value;
    const double adjusted = rcl::logit_adjusted_loss(f, y, priors, 1.0).value;
    CHECK(std::abs(balanced - adjusted) < 1e-12);

    VectorXi equal = VectorXi::Constant(L, counts[0]);
    CHECK(std::abs(rcl::balanced_softmax_loss(f, y, equal).value - rcl::ce_loss(f, y).value) <
          1e-12);
  }
}

TEST_CASE("classifier losses are shift invariant") {
  rcl::Rng rng(41);
  for (int round = 0; round < 50; ++round) {
    VectorXd f(3);
    for (int i = 0; i < 3; ++i) f[i] = 2.0 * rng.normal();
    const double c = 5.0 * rng.normal();
    const VectorXd shifted = f.array() + c;
    const int y = static_cast<int>(rng.uniform_below(3));
    VectorXi counts(3);
    counts << 50, 10, 2;
    VectorXd priors(3);
    priors << 0.6, 0.3, 0.1;

    CHECK(std::abs(rcl::ce_loss(f, y).value - rcl::ce_loss(shifted, y).value) < 1e-12);
    CHECK(std::abs(rcl::balanced_softmax_loss(f, y, counts).value -
                   rcl::balanced_softmax_loss(shifted, y, counts).value) < 1e-12);
    CHECK(std::abs(rcl::logit_adjusted_loss(f, y, priors, 1.3).value -
                   rcl::logit_adjusted_loss(shifted, y, priors, 1.3).value) < 1e-12);
  }
}

TEST_CASE("scl_loss on a lone identical pair is zero") {
  rcl::EmbeddingBatch batch = basis_batch({0, 0}, {0, 0});
  CHECK(rcl::scl_loss(batch, 1.0).value == doctest::Approx(0.0).epsilon(1e-15));

  // strict mode keeps the anchor in the denominator and divides by |B_y|
  const double strict = rcl::scl_loss(batch, 1.0, {true}).value;
  CHECK(strict == doctest::Approx(0.34657359027997265).epsilon(1e-14));
}

TEST_CASE("scl_loss frozen oracle value on {e1, e1, e2}") {
  rcl::EmbeddingBatch batch = basis_batch({0, 0, 1}, {0, 0, 1});
  const double value = rcl::scl_loss(batch, 1.0).value;
  CHECK(value == doctest::Approx(0.31326168751822283).epsilon(1e-13));
  CHECK(std::abs(value - oracle::scl_oracle(batch.embeddings, batch.labels, 1.0)) < 1e-12);
}

TEST_CASE("scl_loss rejects unnormalized input") {
  rcl::EmbeddingBatch batch = basis_batch({0, 0}, {0, 0});
  batch.embeddings(0, 0) = 2.0;
  CHECK_THROWS_AS(rcl::scl_loss(batch, 1.0), std::invalid_argument);
  batch.embeddings(0, 0) = 1.0;
  batch.unit_normalized = false;
  CHECK_THROWS_AS(rcl::scl_loss(batch, 1.0), std::invalid_argument);
}

TEST_CASE("scl_loss gradient vs finite differences") {
  rcl::Rng rng(57);
  for (const double t : {1.0, 0.1}) {
    rcl::EmbeddingBatch batch = random_batch(rng, 8, 4, 3);
    const double err = contrastive_grad_err(
        [t](const rcl::EmbeddingBatch& b, const rcl::Prototypes&) { return rcl::scl_loss(b, t); },
        batch, rcl::Prototypes{MatrixXd::Zero(0, 4)}, false);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("rcl_loss with equal counts is scl_loss bit for bit") {
  rcl::Rng rng(71);
  for (int round = 0; round < 50; ++round) {
    rcl::EmbeddingBatch batch = random_batch(rng, 6 + 2 * (round % 4), 5, 3);
    const VectorXi equal = VectorXi::Constant(3, 17);
    const auto scl = rcl::scl_loss(batch, 0.5);
    const auto rcl_eq = rcl::rcl_loss(batch, equal, 0.5);
    CHECK(rcl_eq.value == scl.value);
    CHECK((rcl_eq.embedding_grad - scl.embedding_grad).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("rcl_loss frozen values and the frequency direction") {
  rcl::EmbeddingBatch batch = basis_batch({0, 0, 1}, {0, 0, 1});
  VectorXi head_anchors(2), tail_anchors(2);
  head_anchors << 100, 1;  // anchors belong to the frequent class
  tail_anchors << 1, 100;  // anchors belong to the rare class

  const double scl = rcl::scl_loss(batch, 1.0).value;
  const double head = rcl::rcl_loss(batch, head_anchors, 1.0).value;
  const double tail = rcl::rcl_loss(batch, tail_anchors, 1.0).value;

  CHECK(head == doctest::Approx(0.0036720441975872984).epsilon(1e-12));
  CHECK(tail == doctest::Approx(3.6319901130538899).epsilon(1e-13));
  CHECK(std::abs(head - oracle::rcl_oracle(batch.embeddings, batch.labels, head_anchors, 1.0)) <
        1e-12);
  CHECK(std::abs(tail - oracle::rcl_oracle(batch.embeddings, batch.labels, tail_anchors, 1.0)) <
        1e-12);
  // boosting the anchors' own frequency lowers their loss; rare anchors pay a
  // larger margin against frequent competitors
  CHECK(head < scl);
  CHECK(tail > scl);
}

TEST_CASE("rcl_loss gradient vs finite differences") {
  rcl::Rng rng(93);
  for (const double t : {1.0, 0.1}) {
    rcl::EmbeddingBatch batch = random_batch(rng, 8, 4, 3);
    const VectorXi counts = oracle::random_counts(rng, 3, 1000);
    const double err = contrastive_grad_err(
        [&, t](const rcl::EmbeddingBatch& b, const rcl::Prototypes&) {
          return rcl::rcl_loss(b, counts, t);
        },
        batch, rcl::Prototypes{MatrixXd::Zero(0, 4)}, false);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("pairwise margin form equals rcl_loss") {
  rcl::Rng rng(101);
  for (int round = 0; round < 60; ++round) {
    const long rows = 4 + 2 * (round % 6);
    const int L = 2 + round % 3;
    rcl::EmbeddingBatch batch = random_batch(rng, rows, 6, L);
    const VectorXi counts = oracle::random_counts(rng, L, 1000);
    const double t = (round % 2 == 0) ? 1.0 : 0.1;
    const double direct = rcl::rcl_loss(batch, counts, t).value;
    const double margin = rcl::rcl_pairwise_margin_form(batch, counts, t);
    CHECK(std::abs(direct - margin) <= 1e-9 * std::max({std::abs(direct), std::abs(margin), 1e-30}));

    // holds in strict mode too
    const double sd = rcl::rcl_loss(batch, counts, t, {true}).value;
    const double sm = rcl::rcl_pairwise_margin_form(batch, counts, t, {true});
    CHECK(std::abs(sd - sm) <= 1e-9 * std::max({std::abs(sd), std::abs(sm), 1e-30}));
  }
}

TEST_CASE("pairwise margin form closed forms") {
  // all embeddings identical, equal counts: every term is log(#denominator terms)
  rcl::EmbeddingBatch batch = basis_batch({1, 1, 1, 1}, {0, 0, 1, 1});
  const VectorXi equal = VectorXi::Constant(2, 3);
  CHECK(rcl::rcl_pairwise_margin_form(batch, equal, 1.0) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-13));

  // a tail anchor's head competitor carries coefficient n_head/n_tail = 100:
  // anchor z0 (class 0, n=1) with positive z1 and one head competitor z2,
  // all mutually identical, gives log(1 + 100).
  rcl::EmbeddingBatch trio = basis_batch({2, 2, 2}, {0, 0, 1});
  VectorXi counts(2);
  counts << 1, 100;
  CHECK(rcl::rcl_pairwise_margin_form(trio, counts, 1.0) ==
        doctest::Approx(std::log(101.0)).epsilon(1e-13));
}

TEST_CASE("bcl_loss singleton anchor with its own prototype") {
  rcl::EmbeddingBatch batch = basis_batch({0}, {0});
  rcl::Prototypes protos{batch.embeddings};
  CHECK(rcl::bcl_loss(batch, protos, 1.0).value == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(oracle::bcl_oracle(batch.embeddings, batch.labels, protos.centers, 1.0)) <
        1e-15);
}

TEST_CASE("bcl_loss frozen value on a two-sample batch with prototypes") {
  rcl::EmbeddingBatch batch = basis_batch({0, 1}, {0, 1});
  rcl::Prototypes protos{batch.embeddings};
  const double value = rcl::bcl_loss(batch, protos, 1.0).value;
  CHECK(value == doctest::Approx(0.31326168751822283).epsilon(1e-13));
  CHECK(std::abs(value -
                 oracle::bcl_oracle(batch.embeddings, batch.labels, protos.centers, 1.0)) < 1e-12);
}

TEST_CASE("bcl_loss rejects prototype mismatch") {
  rcl::Rng rng(3);
  rcl::EmbeddingBatch batch = basis_batch({0, 1}, {0, 2});
  rcl::Prototypes protos{oracle::random_unit_rows(rng, 2, 3)};  // 2 rows, labels reach class 2
  CHECK_THROWS_AS(rcl::bcl_loss(batch, protos, 1.0), std::invalid_argument);
}

TEST_CASE("bcl_loss gradients for embeddings and prototypes") {
  rcl::Rng rng(117);
  rcl::EmbeddingBatch batch = random_batch(rng, 8, 4, 3);
  rcl::Prototypes protos = random_prototypes(rng, 3, 4);
  const double err = contrastive_grad_err(
      [](const rcl::EmbeddingBatch& b, const rcl::Prototypes& p) {
        return rcl::bcl_loss(b, p, 0.5);
      },
      batch, protos, true);
  CHECK(err < 1e-5);
}

TEST_CASE("compress_features") {
  rcl::Rng rng(131);
  rcl::EmbeddingBatch batch = random_batch(rng, 6, 4, 2);

  const auto identity = rcl::compress_features(batch, rcl::CompressionMap::identity(2));
  CHECK((identity.embeddings - batch.embeddings).cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(identity.unit_normalized);

  rcl::CompressionMap map{VectorXd(2)};
  map.factors << 0.005, 1.0;
  const auto squeezed = rcl::compress_features(batch, map);
  for (long i = 0; i < batch.embeddings.rows(); ++i) {
    const double expected = batch.labels[i] == 0 ? 0.005 : 1.0;
    CHECK(squeezed.embeddings.row(i).norm() == doctest::Approx(expected).epsilon(1e-12));
  }

  // bilinearity: within a scaled class dot products shrink by tau^2, across by tau
  for (long i = 0; i < 3; ++i)
    for (long j = 0; j < 3; ++j) {
      const double raw = batch.embeddings.row(i).dot(batch.embeddings.row(j));
      const double scaled = squeezed.embeddings.row(i).dot(squeezed.embeddings.row(j));
      const double tau_i = batch.labels[i] == 0 ? 0.005 : 1.0;
      const double tau_j = batch.labels[j] == 0 ? 0.005 : 1.0;
      CHECK(scaled == doctest::Approx(tau_i * tau_j * raw).epsilon(1e-12));
    }

  rcl::CompressionMap bad{VectorXd(2)};
  bad.factors << 1.0, 0.0;
  CHECK_THROWS_AS(rcl::compress_features(batch, bad), std::invalid_argument);
}

TEST_CASE("bcl_rcl_loss reductions and oracle agreement") {
  rcl::Rng rng(149);
  for (int round = 0; round < 20; ++round) {
    rcl::EmbeddingBatch batch = random_batch(rng, 6, 4, 3);
    rcl::Prototypes protos = random_prototypes(rng, 3, 4);
    const VectorXi equal = VectorXi::Constant(3, 9);
    const auto plain = rcl::bcl_loss(batch, protos, 0.5);
    const auto combined =
        rcl::bcl_rcl_loss(batch, protos, equal, rcl::CompressionMap::identity(3), 0.5);
    CHECK(combined.value == plain.value);  // both modifications disabled -> exact
    CHECK((combined.embedding_grad - plain.embedding_grad).cwiseAbs().maxCoeff() == 0.0);
    CHECK((combined.prototype_grad - plain.prototype_grad).cwiseAbs().maxCoeff() == 0.0);

    // unit factors but real counts: the count-rebalanced form, vs the oracle
    const VectorXi counts = oracle::random_counts(rng, 3, 500);
    const auto rebalanced =
        rcl::bcl_rcl_loss(batch, protos, counts, rcl::CompressionMap::identity(3), 0.5);
    const double reference = oracle::bcl_rcl_oracle(batch.embeddings, batch.labels, protos.centers,
                                                    counts, VectorXd::Ones(3), 0.5);
    CHECK(std::abs(rebalanced.value - reference) < 1e-10);
  }
}

TEST_CASE("bcl_rcl_loss gradient with mixed compression factors") {
  rcl::Rng rng(163);
  rcl::EmbeddingBatch batch = random_batch(rng, 8, 4, 3);
  rcl::Prototypes protos = random_prototypes(rng, 3, 4);
  VectorXi counts(3);
  counts << 100, 10, 1;
  rcl::CompressionMap map{VectorXd(3)};
  map.factors << 1.0, 0.005, 1.0;
  const double err = contrastive_grad_err(
      [&](const rcl::EmbeddingBatch& b, const rcl::Prototypes& p) {
        return rcl::bcl_rcl_loss(b, p, counts, map, 0.5);
      },
      batch, protos, true);
  CHECK(err < 1e-5);
}

TEST_CASE("total_loss weighting") {
  rcl::LossConfig config;
  config.alpha = 2.0;
  config.beta = 1.0;
  CHECK(rcl::total_loss(1.0, 1.0, config) == 3.0);

  config.alpha = 1.0;
  config.beta = 123.0;
  CHECK(rcl::total_loss(0.75, 0.0, config) == 0.75);

  config.alpha = -7.0;
  config.beta = 1.0;
  CHECK(rcl::total_loss(0.0, 0.4, config) == 0.4);
}

TEST_CASE("contrastive losses are non-negative and permutation equivariant") {
  rcl::Rng rng(171);
  for (int round = 0; round < 25; ++round) {
    const long rows = 6;
    rcl::EmbeddingBatch batch = random_batch(rng, rows, 4, 3);
    rcl::Prototypes protos = random_prototypes(rng, 3, 4);
    const VectorXi counts = oracle::random_counts(rng, 3, 100);

    const auto scl = rcl::scl_loss(batch, 0.7);
    const auto rcl_v = rcl::rcl_loss(batch, counts, 0.7);
    const auto bcl = rcl::bcl_loss(batch, protos, 0.7);
    CHECK(scl.value >= 0.0);
    CHECK(rcl_v.value >= 0.0);
    CHECK(bcl.value >= 0.0);

    // cross-entropy family is strictly positive for finite logits (L >= 2);
    // moderate spread keeps the value above the double-precision floor
    Eigen::VectorXd logits(3);
    logits << 3.0 * rng.normal(), 3.0 * rng.normal(), 3.0 * rng.normal();
    CHECK(rcl::ce_loss(logits, static_cast<int>(rng.uniform_below(3))).value > 0.0);

    // permute the batch rows: same scalar, permuted gradients
    std::vector<long> perm(rows);
    for (long i = 0; i < rows; ++i) perm[i] = i;
    for (long i = rows - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_below(static_cast<std::uint64_t>(i + 1))]);

    rcl::EmbeddingBatch shuffled;
    shuffled.embeddings.resize(rows, 4);
    shuffled.labels.resize(rows);
    for (long i = 0; i < rows; ++i) {
      shuffled.embeddings.row(i) = batch.embeddings.row(perm[i]);
      shuffled.labels[i] = batch.labels[perm[i]];
    }
    const auto shuffled_loss = rcl::rcl_loss(shuffled, counts, 0.7);
    CHECK(std::abs(shuffled_loss.value - rcl_v.value) < 1e-12);
    for (long i = 0; i < rows; ++i)
      CHECK((shuffled_loss.embedding_grad.row(i) - rcl_v.embedding_grad.row(perm[i]))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
  }
}

TEST_CASE("brute-force oracle agreement on small batches") {
  rcl::Rng rng(187);
  for (int round = 0; round < 40; ++round) {
    const long rows = 2 + static_cast<long>(rng.uniform_below(5));
    const int L = 2 + static_cast<int>(rng.uniform_below(2));
    rcl::EmbeddingBatch batch = random_batch(rng, rows, 3, L);
    rcl::Prototypes protos = random_prototypes(rng, L, 3);
    const VectorXi counts = oracle::random_counts(rng, L, 50);
    VectorXd factors(L);
    for (int j = 0; j < L; ++j) factors[j] = (j % 2 == 0) ? 1.0 : 0.05;
    const rcl::CompressionMap map{factors};
    const double t = 0.8;

    for (const bool strict : {false, true}) {
      const rcl::ContrastiveOptions opts{strict};
      CHECK(std::abs(rcl::scl_loss(batch, t, opts).value -
                     oracle::scl_oracle(batch.embeddings, batch.labels, t, strict)) < 1e-10);
      CHECK(std::abs(rcl::rcl_loss(batch, counts, t, opts).value -
                     oracle::rcl_oracle(batch.embeddings, batch.labels, counts, t, strict)) <
            1e-10);
      CHECK(std::abs(rcl::bcl_loss(batch, protos, t, opts).value -
                     oracle::bcl_oracle(batch.embeddings, batch.labels, protos.centers, t,
                                        strict)) < 1e-10);
      CHECK(std::abs(rcl::bcl_rcl_loss(batch, protos, counts, map, t, opts).value -
                     oracle::bcl_rcl_oracle(batch.embeddings, batch.labels, protos.centers,
                                            counts, factors, t, strict)) < 1e-10);
    }
  }
}
