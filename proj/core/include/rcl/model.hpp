#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "rcl/dataset.hpp"
#include "rcl/losses.hpp"
#include "rcl/rng.hpp"

namespace rcl {

enum class Activation { kTanh, kIdentity };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;
};

// Shared-backbone two-branch network: encoder -> features feed both a linear
// classifier head and a projection head whose outputs are unit-normalized
// contrastive embeddings. Prototypes are first-class learnable parameters.
struct ModelParams {
  std::vector<DenseLayer> encoder;
  Eigen::MatrixXd classifier_weight;  // L x K_feat
  Eigen::VectorXd classifier_bias;    // L
  std::vector<DenseLayer> projector;
  Prototypes prototypes;  // L x K, unit rows

  int input_dim() const { return static_cast<int>(encoder.front().weight.cols()); }
  int num_classes() const { return static_cast<int>(classifier_weight.rows()); }
  int embedding_dim() const { return static_cast<int>(prototypes.centers.cols()); }
};

struct ModelDims {
  int input = 2;
  int hidden = 64;
  int feature = 32;
  int embedding = 16;
  int classes = 2;
};

// Uniform fan-in weight init, zero biases, random unit prototypes.
ModelParams init_params(const ModelDims& dims, Rng& rng);

struct Forward {
  Eigen::MatrixXd logits;      // rows x L
  Eigen::MatrixXd embeddings;  // rows x K, unit rows
  Eigen::MatrixXd features;    // rows x K_feat
};

Forward forward(const ModelParams& params, const Eigen::MatrixXd& inputs);

// Index of the largest logit per row, lowest index on ties.
Eigen::VectorXi argmax_rows(const Eigen::MatrixXd& matrix);

struct Gradients {
  std::vector<DenseLayer> encoder;  // activation fields unused
  Eigen::MatrixXd classifier_weight;
  Eigen::VectorXd classifier_bias;
  std::vector<DenseLayer> projector;
  Eigen::MatrixXd prototypes;

  static Gradients zeros_like(const ModelParams& params);
};

struct BatchLoss {
  double total = 0.0;
  double classifier = 0.0;
  double contrastive = 0.0;
};

// Total loss of one batch as a pure function of the parameters: the
// classifier loss is the per-row mean on view_a, the contrastive loss runs on
// the concatenated view_b/view_c embeddings (with prototypes and the active
// compression map as the variant requires).
BatchLoss batch_loss(const ModelParams& params, const Batch& batch,
                     const LossConfig& config, const Eigen::VectorXi& class_counts,
                     const CompressionMap& map);

// Analytic gradients of total_loss with respect to every parameter tensor,
// prototypes included.
std::pair<BatchLoss, Gradients> backward(const ModelParams& params, const Batch& batch,
                                         const LossConfig& config,
                                         const Eigen::VectorXi& class_counts,
                                         const CompressionMap& map);

// Momentum SGD: v <- momentum*v + grad + weight_decay*param;
// param <- param - lr*v. Prototype rows are renormalized afterwards.
void sgd_step(ModelParams& params, const Gradients& grads, Gradients& velocity,
              double learning_rate, double momentum, double weight_decay);

struct CompressionConfig {
  bool enabled = false;
  double trigger_epoch_fraction = 0.5;
  double accuracy_threshold = 0.2;
  double low_factor = 0.005;
  // Default polarity: classes under the threshold keep factor 1, the rest
  // compress. invert_polarity applies the low factor to the underperformers
  // instead (the strict-paper reading).
  bool invert_polarity = false;
};

// All-ones before the trigger epoch floor(total_epochs * fraction); from the
// trigger on, a two-value map derived from the per-class validation accuracy.
// The trainer calls this once at the trigger and freezes the result.
CompressionMap compression_schedule(int epoch, int total_epochs,
                                    const Eigen::VectorXd& val_per_class_accuracy,
                                    const CompressionConfig& config);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double jitter_sigma = 0.35;  // augmentation scale for the contrastive views
  std::uint64_t seed = 1;
  LossConfig loss;
  CompressionConfig compression;
  int hidden_dim = 64;
  int feature_dim = 32;
  int embedding_dim = 16;
};

void validate_train_config(const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double total_loss = 0.0;        // epoch means over steps
  double classifier_loss = 0.0;
  double contrastive_loss = 0.0;
  double val_arithmetic = 0.0;
  double val_harmonic = 0.0;
  Eigen::VectorXd compression_factors;  // map in effect during the epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// Complete resumable state of a training run.
struct TrainerState {
  ModelParams params;
  Gradients velocity;
  long completed_epochs = 0;
  Rng rng{0};
  CompressionMap active_map;
  bool map_frozen = false;
};

TrainerState init_trainer(const Dataset& train_set, const TrainConfig& config);

// Runs epochs_to_run additional epochs of ceil(N/batch) steps each, recording
// one EpochRecord per epoch. Throws DivergenceError if the loss goes
// non-finite. Deterministic given (state, datasets, config).
TrainHistory train_epochs(TrainerState& state, const Dataset& train_set,
                          const Dataset& val_set, const TrainConfig& config,
                          int epochs_to_run);

// Fresh run of config.epochs epochs; identical seed and config give
// bit-identical history and parameters. Use init_trainer + train_epochs when
// the final optimizer state is needed (checkpointing).
std::pair<ModelParams, TrainHistory> train(const Dataset& train_set, const Dataset& val_set,
                                           const TrainConfig& config);

// Text checkpoint with exact (hex-float) tensor round-trip:
// load(save(state)) resumes bit-identically.
void save_checkpoint(const TrainerState& state, std::ostream& out);
void save_checkpoint(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_checkpoint(std::istream& in, const std::string& name = "<stream>");
TrainerState load_checkpoint(const std::filesystem::path& path);

void write_history(const TrainHistory& history, std::ostream& out);
void write_history(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace rcl
