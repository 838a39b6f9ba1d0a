#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "rcl/losses.hpp"
#include "rcl/model.hpp"
#include "rcl/rng.hpp"

namespace {

rcl::EmbeddingBatch make_batch(long rows, long dim, int num_classes, std::uint64_t seed) {
  rcl::Rng rng(seed);
  rcl::EmbeddingBatch batch;
  batch.embeddings.resize(rows, dim);
  batch.labels.resize(rows);
  for (long i = 0; i < rows; ++i) {
    for (long d = 0; d < dim; ++d) batch.embeddings(i, d) = rng.normal();
    batch.embeddings.row(i).normalize();
    batch.labels[i] = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(num_classes)));
  }
  return batch;
}

void BM_LogSumExp(benchmark::State& state) {
  rcl::Rng rng(1);
  Eigen::VectorXd v(state.range(0));
  for (long i = 0; i < v.size(); ++i) v[i] = 5.0 * rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(rcl::log_sum_exp(v));
}
BENCHMARK(BM_LogSumExp)->Arg(16)->Arg(256);

void BM_SclLoss(benchmark::State& state) {
  const rcl::EmbeddingBatch batch = make_batch(state.range(0), 16, 5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rcl::scl_loss(batch, 0.1).value);
}
BENCHMARK(BM_SclLoss)->Arg(32)->Arg(128);

void BM_RclLoss(benchmark::State& state) {
  const rcl::EmbeddingBatch batch = make_batch(state.range(0), 16, 5, 3);
  Eigen::VectorXi counts(5);
  counts << 1000, 316, 100, 32, 10;
  for (auto _ : state) benchmark::DoNotOptimize(rcl::rcl_loss(batch, counts, 0.1).value);
}
BENCHMARK(BM_RclLoss)->Arg(32)->Arg(128);

void BM_BclRclLoss(benchmark::State& state) {
  const rcl::EmbeddingBatch batch = make_batch(state.range(0), 16, 5, 4);
  rcl::Rng rng(7);
  rcl::Prototypes protos;
  protos.centers.resize(5, 16);
  for (long i = 0; i < 5; ++i) {
    for (long d = 0; d < 16; ++d) protos.centers(i, d) = rng.normal();
    protos.centers.row(i).normalize();
  }
  Eigen::VectorXi counts(5);
  counts << 1000, 316, 100, 32, 10;
  rcl::CompressionMap map = rcl::CompressionMap::identity(5);
  map.factors << 0.005, 0.005, 1.0, 1.0, 1.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(rcl::bcl_rcl_loss(batch, protos, counts, map, 0.1).value);
}
BENCHMARK(BM_BclRclLoss)->Arg(32)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
  Eigen::VectorXi counts(5);
  counts << 200, 80, 30, 12, 5;
  const rcl::Dataset data = rcl::gen_gaussian_mixture(counts, 2, 1.0, 0.35, 3);
  rcl::TrainConfig config;
  config.loss.variant = rcl::LossVariant::kBclRcl;
  config.loss.priors = data.class_counts.cast<double>() / static_cast<double>(data.rows());
  rcl::TrainerState trainer = rcl::init_trainer(data, config);
  const rcl::CompressionMap map = rcl::CompressionMap::identity(5);
  rcl::Rng stream(9);
  for (auto _ : state) {
    const rcl::Batch batch = rcl::sample_batch(data, 64, stream, 0.1);
    auto [loss, grads] = rcl::backward(trainer.params, batch, config.loss, data.class_counts, map);
    rcl::sgd_step(trainer.params, grads, trainer.velocity, config.learning_rate, config.momentum,
                  config.weight_decay);
    benchmark::DoNotOptimize(loss.total);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
