#include "rcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "rcl/errors.hpp"
#include "rcl/metrics.hpp"

namespace rcl {

namespace {

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& pre, Activation act) {
  if (act == Activation::kTanh) return pre.array().tanh();
  return pre;
}

struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd post;
};

struct PathCache {
  std::vector<LayerCache> encoder;
  Eigen::MatrixXd features;
  std::vector<LayerCache> projector;
  Eigen::MatrixXd proj_raw;      // projector output before normalization
  Eigen::VectorXd proj_norms;    // guarded row norms
  Eigen::MatrixXd embeddings;    // unit rows
};

Eigen::MatrixXd run_layers(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& input,
                           std::vector<LayerCache>* cache) {
  Eigen::MatrixXd x = input;
  for (const DenseLayer& layer : layers) {
    if (x.cols() != layer.weight.cols())
      throw std::invalid_argument("forward: input width does not match layer fan-in");
    Eigen::MatrixXd pre = (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    Eigen::MatrixXd post = apply_activation(pre, layer.activation);
    if (cache != nullptr) cache->push_back(LayerCache{std::move(x), post});
    x = std::move(post);
  }
  return x;
}

// Backpropagate through a dense stack; accumulates into grads and returns the
// gradient w.r.t. the stack input.
Eigen::MatrixXd backprop_layers(const std::vector<DenseLayer>& layers,
                                const std::vector<LayerCache>& cache,
                                Eigen::MatrixXd grad_out,
                                std::vector<DenseLayer>& grads) {
  for (long l = static_cast<long>(layers.size()) - 1; l >= 0; --l) {
    const DenseLayer& layer = layers[static_cast<size_t>(l)];
    const LayerCache& c = cache[static_cast<size_t>(l)];
    Eigen::MatrixXd grad_pre;
    if (layer.activation == Activation::kTanh)
      grad_pre = grad_out.array() * (1.0 - c.post.array().square());
    else
      grad_pre = std::move(grad_out);
    grads[static_cast<size_t>(l)].weight += grad_pre.transpose() * c.input;
    grads[static_cast<size_t>(l)].bias += grad_pre.colwise().sum();
    grad_out = grad_pre * layer.weight;
  }
  return grad_out;
}

PathCache encode_project(const ModelParams& params, const Eigen::MatrixXd& inputs) {
  PathCache cache;
  cache.features = run_layers(params.encoder, inputs, &cache.encoder);
  cache.proj_raw = run_layers(params.projector, cache.features, &cache.projector);
  const long rows = cache.proj_raw.rows();
  cache.proj_norms.resize(rows);
  cache.embeddings.resize(rows, cache.proj_raw.cols());
  for (long i = 0; i < rows; ++i) {
    const double norm = std::max(cache.proj_raw.row(i).norm(), 1e-12);
    cache.proj_norms[i] = norm;
    cache.embeddings.row(i) = cache.proj_raw.row(i) / norm;
  }
  return cache;
}

// d(z)/d(p) for z = p/|p|: grad_p = (grad_z - z (z . grad_z)) / |p|.
Eigen::MatrixXd backprop_normalize(const PathCache& cache, const Eigen::MatrixXd& grad_z) {
  Eigen::MatrixXd grad_p(grad_z.rows(), grad_z.cols());
  for (long i = 0; i < grad_z.rows(); ++i) {
    const double dot = cache.embeddings.row(i).dot(grad_z.row(i));
    grad_p.row(i) = (grad_z.row(i) - dot * cache.embeddings.row(i)) / cache.proj_norms[i];
  }
  return grad_p;
}

LogitLoss classifier_row_loss(ClassifierKind kind, const Eigen::VectorXd& logits, int label,
                              const LossConfig& config, const Eigen::VectorXi& counts) {
  switch (kind) {
    case ClassifierKind::kCe: return ce_loss(logits, label);
    case ClassifierKind::kBalancedSoftmax: return balanced_softmax_loss(logits, label, counts);
    case ClassifierKind::kLogitAdjusted:
      return logit_adjusted_loss(logits, label, config.priors, config.tau_logit);
  }
  throw std::logic_error("unreachable classifier kind");
}

EmbeddingBatch two_view_batch(const PathCache& b, const PathCache& c, const Eigen::VectorXi& labels) {
  EmbeddingBatch eb;
  const long m = labels.size();
  eb.embeddings.resize(2 * m, b.embeddings.cols());
  eb.embeddings.topRows(m) = b.embeddings;
  eb.embeddings.bottomRows(m) = c.embeddings;
  eb.labels.resize(2 * m);
  eb.labels.head(m) = labels;
  eb.labels.tail(m) = labels;
  eb.unit_normalized = true;
  return eb;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, Rng& rng) {
  if (dims.input < 1 || dims.hidden < 1 || dims.feature < 1 || dims.embedding < 1 ||
      dims.classes < 1)
    throw std::invalid_argument("init_params: all dimensions must be positive");

  auto uniform_layer = [&rng](int out, int in, Activation act) {
    DenseLayer layer;
    layer.weight.resize(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = act;
    return layer;
  };

  ModelParams params;
  params.encoder.push_back(uniform_layer(dims.hidden, dims.input, Activation::kTanh));
  params.encoder.push_back(uniform_layer(dims.feature, dims.hidden, Activation::kTanh));
  DenseLayer classifier = uniform_layer(dims.classes, dims.feature, Activation::kIdentity);
  params.classifier_weight = std::move(classifier.weight);
  params.classifier_bias = std::move(classifier.bias);
  params.projector.push_back(uniform_layer(dims.embedding, dims.feature, Activation::kIdentity));

  params.prototypes.centers.resize(dims.classes, dims.embedding);
  for (int y = 0; y < dims.classes; ++y) {
    for (int d = 0; d < dims.embedding; ++d) params.prototypes.centers(y, d) = rng.normal();
    params.prototypes.centers.row(y) /= std::max(params.prototypes.centers.row(y).norm(), 1e-12);
  }
  return params;
}

Forward forward(const ModelParams& params, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != params.input_dim())
    throw std::invalid_argument("forward: input width does not match the encoder");
  PathCache cache = encode_project(params, inputs);
  Forward out;
  out.features = cache.features;
  out.logits = (cache.features * params.classifier_weight.transpose()).rowwise() +
               params.classifier_bias.transpose();
  out.embeddings = std::move(cache.embeddings);
  return out;
}

Eigen::VectorXi argmax_rows(const Eigen::MatrixXd& matrix) {
  Eigen::VectorXi out(matrix.rows());
  for (long i = 0; i < matrix.rows(); ++i) {
    Eigen::Index best = 0;
    matrix.row(i).maxCoeff(&best);
    out[i] = static_cast<int>(best);
  }
  return out;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  for (const DenseLayer& layer : params.encoder)
    g.encoder.push_back(DenseLayer{Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                                   Eigen::VectorXd::Zero(layer.bias.size()), layer.activation});
  g.classifier_weight =
      Eigen::MatrixXd::Zero(params.classifier_weight.rows(), params.classifier_weight.cols());
  g.classifier_bias = Eigen::VectorXd::Zero(params.classifier_bias.size());
  for (const DenseLayer& layer : params.projector)
    g.projector.push_back(DenseLayer{Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                                     Eigen::VectorXd::Zero(layer.bias.size()), layer.activation});
  g.prototypes = Eigen::MatrixXd::Zero(params.prototypes.centers.rows(),
                                       params.prototypes.centers.cols());
  return g;
}

BatchLoss batch_loss(const ModelParams& params, const Batch& batch, const LossConfig& config,
                     const Eigen::VectorXi& class_counts, const CompressionMap& map) {
  const long m = batch.size();
  if (m == 0) throw std::invalid_argument("batch_loss: empty batch");
  BatchLoss out;

  const Forward fa = forward(params, batch.view_a);
  const ClassifierKind ckind = classifier_kind(config.variant);
  double cls_sum = 0.0;
  for (long i = 0; i < m; ++i)
    cls_sum += classifier_row_loss(ckind, fa.logits.row(i).transpose(), batch.labels[i],
                                   config, class_counts)
                   .value;
  out.classifier = cls_sum / static_cast<double>(m);

  const ContrastiveKind kind = contrastive_kind(config.variant);
  if (kind != ContrastiveKind::kNone) {
    const PathCache pb = encode_project(params, batch.view_b);
    const PathCache pc = encode_project(params, batch.view_c);
    const EmbeddingBatch eb = two_view_batch(pb, pc, batch.labels);
    out.contrastive = contrastive_loss(kind, eb, params.prototypes, class_counts, map,
                                       config.temperature,
                                       ContrastiveOptions{config.strict_paper})
                          .value;
  }
  out.total = total_loss(out.classifier, out.contrastive, config);
  return out;
}

std::pair<BatchLoss, Gradients> backward(const ModelParams& params, const Batch& batch,
                                         const LossConfig& config,
                                         const Eigen::VectorXi& class_counts,
                                         const CompressionMap& map) {
  const long m = batch.size();
  if (m == 0) throw std::invalid_argument("backward: empty batch");
  BatchLoss loss;
  Gradients grads = Gradients::zeros_like(params);

  // Classifier branch on view_a.
  PathCache pa = encode_project(params, batch.view_a);
  Eigen::MatrixXd logits = (pa.features * params.classifier_weight.transpose()).rowwise() +
                           params.classifier_bias.transpose();
  const ClassifierKind ckind = classifier_kind(config.variant);
  Eigen::MatrixXd grad_logits = Eigen::MatrixXd::Zero(m, logits.cols());
  double cls_sum = 0.0;
  for (long i = 0; i < m; ++i) {
    LogitLoss row = classifier_row_loss(ckind, logits.row(i).transpose(), batch.labels[i],
                                        config, class_counts);
    cls_sum += row.value;
    grad_logits.row(i) = row.grad.transpose();
  }
  loss.classifier = cls_sum / static_cast<double>(m);
  grad_logits *= config.alpha / static_cast<double>(m);
  grads.classifier_weight += grad_logits.transpose() * pa.features;
  grads.classifier_bias += grad_logits.colwise().sum();
  Eigen::MatrixXd grad_feat_a = grad_logits * params.classifier_weight;
  backprop_layers(params.encoder, pa.encoder, std::move(grad_feat_a), grads.encoder);

  // Contrastive branch on the concatenated views.
  const ContrastiveKind kind = contrastive_kind(config.variant);
  if (kind != ContrastiveKind::kNone) {
    PathCache pb = encode_project(params, batch.view_b);
    PathCache pc = encode_project(params, batch.view_c);
    const EmbeddingBatch eb = two_view_batch(pb, pc, batch.labels);
    ContrastiveLoss con = contrastive_loss(kind, eb, params.prototypes, class_counts, map,
                                           config.temperature,
                                           ContrastiveOptions{config.strict_paper});
    loss.contrastive = con.value;

    Eigen::MatrixXd grad_z = config.beta * con.embedding_grad;
    if (con.prototype_grad.size() > 0) grads.prototypes += config.beta * con.prototype_grad;

    for (int view = 0; view < 2; ++view) {
      PathCache& cache = (view == 0) ? pb : pc;
      Eigen::MatrixXd grad_view = (view == 0) ? grad_z.topRows(m) : grad_z.bottomRows(m);
      Eigen::MatrixXd grad_proj = backprop_normalize(cache, grad_view);
      Eigen::MatrixXd grad_feat =
          backprop_layers(params.projector, cache.projector, std::move(grad_proj), grads.projector);
      backprop_layers(params.encoder, cache.encoder, std::move(grad_feat), grads.encoder);
    }
  }

  loss.total = total_loss(loss.classifier, loss.contrastive, config);
  return {loss, std::move(grads)};
}

namespace {

void sgd_tensor(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& velocity,
                double lr, double momentum, double weight_decay) {
  velocity = momentum * velocity + grad + weight_decay * param;
  param -= lr * velocity;
}

void sgd_vector(Eigen::VectorXd& param, const Eigen::VectorXd& grad, Eigen::VectorXd& velocity,
                double lr, double momentum, double weight_decay) {
  velocity = momentum * velocity + grad + weight_decay * param;
  param -= lr * velocity;
}

}  // namespace

void sgd_step(ModelParams& params, const Gradients& grads, Gradients& velocity,
              double learning_rate, double momentum, double weight_decay) {
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    sgd_tensor(params.encoder[l].weight, grads.encoder[l].weight, velocity.encoder[l].weight,
               learning_rate, momentum, weight_decay);
    sgd_vector(params.encoder[l].bias, grads.encoder[l].bias, velocity.encoder[l].bias,
               learning_rate, momentum, weight_decay);
  }
  sgd_tensor(params.classifier_weight, grads.classifier_weight, velocity.classifier_weight,
             learning_rate, momentum, weight_decay);
  sgd_vector(params.classifier_bias, grads.classifier_bias, velocity.classifier_bias,
             learning_rate, momentum, weight_decay);
  for (size_t l = 0; l < params.projector.size(); ++l) {
    sgd_tensor(params.projector[l].weight, grads.projector[l].weight, velocity.projector[l].weight,
               learning_rate, momentum, weight_decay);
    sgd_vector(params.projector[l].bias, grads.projector[l].bias, velocity.projector[l].bias,
               learning_rate, momentum, weight_decay);
  }
  sgd_tensor(params.prototypes.centers, grads.prototypes, velocity.prototypes, learning_rate,
             momentum, weight_decay);
  for (long y = 0; y < params.prototypes.centers.rows(); ++y)
    params.prototypes.centers.row(y) /= std::max(params.prototypes.centers.row(y).norm(), 1e-12);
}

CompressionMap compression_schedule(int epoch, int total_epochs,
                                    const Eigen::VectorXd& val_per_class_accuracy,
                                    const CompressionConfig& config) {
  const int num_classes = static_cast<int>(val_per_class_accuracy.size());
  for (int y = 0; y < num_classes; ++y)
    if (val_per_class_accuracy[y] < 0.0 || val_per_class_accuracy[y] > 1.0)
      throw std::invalid_argument("compression_schedule: accuracies must lie in [0, 1]");

  CompressionMap map = CompressionMap::identity(num_classes);
  const int trigger =
      static_cast<int>(std::floor(total_epochs * config.trigger_epoch_fraction));
  if (!config.enabled || epoch < trigger) return map;
  for (int y = 0; y < num_classes; ++y) {
    const bool under = val_per_class_accuracy[y] < config.accuracy_threshold;
    const bool compress = config.invert_polarity ? under : !under;
    map.factors[y] = compress ? config.low_factor : 1.0;
  }
  return map;
}

void validate_train_config(const TrainConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  if (config.batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(config.learning_rate > 0.0))
    throw std::invalid_argument("train config: learning_rate must be positive");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0))
    throw std::invalid_argument("train config: momentum must lie in [0, 1)");
  if (!(config.weight_decay >= 0.0))
    throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(config.jitter_sigma >= 0.0))
    throw std::invalid_argument("train config: jitter_sigma must be >= 0");
  if (!(config.compression.trigger_epoch_fraction > 0.0 &&
        config.compression.trigger_epoch_fraction < 1.0))
    throw std::invalid_argument("train config: trigger_epoch_fraction must lie in (0, 1)");
  if (!(config.compression.low_factor > 0.0))
    throw std::invalid_argument("train config: compression low_factor must be positive");
  if (config.hidden_dim < 1 || config.feature_dim < 1 || config.embedding_dim < 1)
    throw std::invalid_argument("train config: network dimensions must be positive");
}

TrainerState init_trainer(const Dataset& train_set, const TrainConfig& config) {
  validate_train_config(config);
  validate_dataset(train_set);
  TrainerState state;
  state.rng = Rng(config.seed);
  ModelDims dims;
  dims.input = train_set.input_dim;
  dims.hidden = config.hidden_dim;
  dims.feature = config.feature_dim;
  dims.embedding = config.embedding_dim;
  dims.classes = train_set.num_classes;
  state.params = init_params(dims, state.rng);
  state.velocity = Gradients::zeros_like(state.params);
  state.active_map = CompressionMap::identity(train_set.num_classes);
  return state;
}

namespace {

// The compression mechanism lives inside the rebalanced losses; the plain
// contrastive variants run on raw unit embeddings.
bool variant_compressible(LossVariant variant) {
  const ContrastiveKind kind = contrastive_kind(variant);
  return kind == ContrastiveKind::kRcl || kind == ContrastiveKind::kBclRcl;
}

}  // namespace

TrainHistory train_epochs(TrainerState& state, const Dataset& train_set, const Dataset& val_set,
                          const TrainConfig& config, int epochs_to_run) {
  validate_train_config(config);
  validate_dataset(train_set);
  validate_dataset(val_set);
  if (train_set.num_classes != val_set.num_classes || train_set.input_dim != val_set.input_dim)
    throw std::invalid_argument("train: train and validation sets must share L and D");

  LossConfig loss_cfg = config.loss;
  loss_cfg.priors = train_set.class_counts.cast<double>() /
                    static_cast<double>(train_set.rows());
  validate_loss_config(loss_cfg, train_set.num_classes);

  const long n = train_set.rows();
  const long batch_size = std::min<long>(config.batch_size, n);
  const long steps = (n + batch_size - 1) / batch_size;

  auto val_accuracy = [&]() {
    const Forward fv = forward(state.params, val_set.features);
    return per_class_accuracy(argmax_rows(fv.logits), val_set.labels, val_set.num_classes);
  };

  TrainHistory history;
  for (int run = 0; run < epochs_to_run; ++run) {
    const int epoch = static_cast<int>(state.completed_epochs);

    if (config.compression.enabled && variant_compressible(config.loss.variant) &&
        !state.map_frozen) {
      const int trigger = static_cast<int>(
          std::floor(config.epochs * config.compression.trigger_epoch_fraction));
      if (epoch >= trigger) {
        // Read the validation accuracy once at the trigger and freeze the map.
        state.active_map = compression_schedule(epoch, config.epochs, val_accuracy(),
                                                config.compression);
        state.map_frozen = true;
      }
    }

    double total_sum = 0.0, cls_sum = 0.0, con_sum = 0.0;
    for (long s = 0; s < steps; ++s) {
      Batch batch = sample_batch(train_set, batch_size, state.rng, config.jitter_sigma);
      auto [loss, grads] =
          backward(state.params, batch, loss_cfg, train_set.class_counts, state.active_map);
      if (!std::isfinite(loss.total))
        throw DivergenceError("training diverged: non-finite total loss at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(s));
      sgd_step(state.params, grads, state.velocity, config.learning_rate, config.momentum,
               config.weight_decay);
      total_sum += loss.total;
      cls_sum += loss.classifier;
      con_sum += loss.contrastive;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.total_loss = total_sum / static_cast<double>(steps);
    record.classifier_loss = cls_sum / static_cast<double>(steps);
    record.contrastive_loss = con_sum / static_cast<double>(steps);
    const Eigen::VectorXd acc = val_accuracy();
    record.val_arithmetic = arithmetic_mean_acc(acc);
    record.val_harmonic = harmonic_mean_acc(acc);
    record.compression_factors = state.active_map.factors;
    history.epochs.push_back(std::move(record));
    state.completed_epochs += 1;
  }
  return history;
}

std::pair<ModelParams, TrainHistory> train(const Dataset& train_set, const Dataset& val_set,
                                           const TrainConfig& config) {
  TrainerState state = init_trainer(train_set, config);
  TrainHistory history = train_epochs(state, train_set, val_set, config, config.epochs);
  return {std::move(state.params), std::move(history)};
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. Text container, one tensor per line, hex floats for exact
// round-trips.

namespace {

void write_double(std::ostream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  out << buf;
}

void write_matrix(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) {
      out << ' ';
      write_double(out, m(r, c));
    }
  out << "\n";
}

void write_vector(std::ostream& out, const std::string& name, const Eigen::VectorXd& v) {
  out << name << ' ' << v.size() << " 1";
  for (long i = 0; i < v.size(); ++i) {
    out << ' ';
    write_double(out, v[i]);
  }
  out << "\n";
}

class CheckpointReader {
 public:
  CheckpointReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::string next_line() {
    std::string line;
    ++line_no_;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    return line;
  }

  Eigen::MatrixXd read_matrix(const std::string& expected) {
    std::istringstream fields(next_line());
    std::string name;
    long rows = 0, cols = 0;
    if (!(fields >> name >> rows >> cols) || name != expected)
      fail("expected tensor '" + expected + "'");
    if (rows < 0 || cols < 0) fail("negative tensor dimensions");
    Eigen::MatrixXd m(rows, cols);
    std::string token;
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) {
        if (!(fields >> token)) fail("tensor '" + expected + "' is truncated");
        m(r, c) = parse_double(token);
      }
    if (fields >> token) fail("tensor '" + expected + "' has trailing values");
    return m;
  }

  Eigen::VectorXd read_vector(const std::string& expected) {
    Eigen::MatrixXd m = read_matrix(expected);
    if (m.cols() != 1) fail("expected a column vector for '" + expected + "'");
    return m.col(0);
  }

  long read_scalar(const std::string& expected) {
    std::istringstream fields(next_line());
    std::string name;
    long value = 0;
    if (!(fields >> name >> value) || name != expected)
      fail("expected scalar '" + expected + "'");
    return value;
  }

  std::uint64_t read_u64(const std::string& expected) {
    std::istringstream fields(next_line());
    std::string name;
    std::uint64_t value = 0;
    if (!(fields >> name >> value) || name != expected)
      fail("expected scalar '" + expected + "'");
    return value;
  }

  [[noreturn]] void fail(const std::string& what) {
    throw ParseError(name_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == nullptr || *end != '\0') fail("malformed float '" + token + "'");
    return v;
  }

 private:
  std::istream& in_;
  std::string name_;
  long line_no_ = 0;
};

void write_layers(std::ostream& out, const std::string& prefix,
                  const std::vector<DenseLayer>& layers) {
  out << prefix << "_layers " << layers.size() << "\n";
  for (size_t l = 0; l < layers.size(); ++l) {
    out << prefix << "_" << l << "_activation "
        << (layers[l].activation == Activation::kTanh ? "tanh" : "identity") << "\n";
    write_matrix(out, prefix + "_" + std::to_string(l) + "_weight", layers[l].weight);
    write_vector(out, prefix + "_" + std::to_string(l) + "_bias", layers[l].bias);
  }
}

std::vector<DenseLayer> read_layers(CheckpointReader& reader, const std::string& prefix) {
  const long count = reader.read_scalar(prefix + "_layers");
  if (count < 0 || count > 64) reader.fail("implausible layer count");
  std::vector<DenseLayer> layers;
  for (long l = 0; l < count; ++l) {
    std::istringstream fields(reader.next_line());
    std::string name, act;
    if (!(fields >> name >> act) || name != prefix + "_" + std::to_string(l) + "_activation")
      reader.fail("expected activation line");
    DenseLayer layer;
    if (act == "tanh") layer.activation = Activation::kTanh;
    else if (act == "identity") layer.activation = Activation::kIdentity;
    else reader.fail("unknown activation '" + act + "'");
    layer.weight = reader.read_matrix(prefix + "_" + std::to_string(l) + "_weight");
    layer.bias = reader.read_vector(prefix + "_" + std::to_string(l) + "_bias");
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

void save_checkpoint(const TrainerState& state, std::ostream& out) {
  out << "rcl-checkpoint-v1\n";
  out << "epoch " << state.completed_epochs << "\n";
  out << "rng_state " << state.rng.state() << "\n";
  out << "map_frozen " << (state.map_frozen ? 1 : 0) << "\n";
  write_vector(out, "compression_factors", state.active_map.factors);
  write_layers(out, "encoder", state.params.encoder);
  write_matrix(out, "classifier_weight", state.params.classifier_weight);
  write_vector(out, "classifier_bias", state.params.classifier_bias);
  write_layers(out, "projector", state.params.projector);
  write_matrix(out, "prototypes", state.params.prototypes.centers);
  write_layers(out, "vel_encoder", state.velocity.encoder);
  write_matrix(out, "vel_classifier_weight", state.velocity.classifier_weight);
  write_vector(out, "vel_classifier_bias", state.velocity.classifier_bias);
  write_layers(out, "vel_projector", state.velocity.projector);
  write_matrix(out, "vel_prototypes", state.velocity.prototypes);
}

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_checkpoint(state, out);
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

TrainerState load_checkpoint(std::istream& in, const std::string& name) {
  CheckpointReader reader(in, name);
  if (reader.next_line() != "rcl-checkpoint-v1") reader.fail("bad checkpoint header");
  TrainerState state;
  state.completed_epochs = reader.read_scalar("epoch");
  state.rng.set_state(reader.read_u64("rng_state"));
  state.map_frozen = reader.read_scalar("map_frozen") != 0;
  state.active_map.factors = reader.read_vector("compression_factors");
  state.params.encoder = read_layers(reader, "encoder");
  state.params.classifier_weight = reader.read_matrix("classifier_weight");
  state.params.classifier_bias = reader.read_vector("classifier_bias");
  state.params.projector = read_layers(reader, "projector");
  state.params.prototypes.centers = reader.read_matrix("prototypes");
  state.velocity.encoder = read_layers(reader, "vel_encoder");
  state.velocity.classifier_weight = reader.read_matrix("vel_classifier_weight");
  state.velocity.classifier_bias = reader.read_vector("vel_classifier_bias");
  state.velocity.projector = read_layers(reader, "vel_projector");
  state.velocity.prototypes = reader.read_matrix("vel_prototypes");
  return state;
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return load_checkpoint(in, path.string());
}

void write_history(const TrainHistory& history, std::ostream& out) {
  out << "epoch\ttotal_loss\tclassifier_loss\tcontrastive_loss\tval_arithmetic\tval_harmonic"
         "\tcompression_factors\n";
  out << std::setprecision(17);
  for (const EpochRecord& r : history.epochs) {
    out << r.epoch << '\t' << r.total_loss << '\t' << r.classifier_loss << '\t'
        << r.contrastive_loss << '\t' << r.val_arithmetic << '\t' << r.val_harmonic << '\t';
    for (long y = 0; y < r.compression_factors.size(); ++y) {
      if (y > 0) out << ',';
      out << r.compression_factors[y];
    }
    out << "\n";
  }
}

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_history(history, out);
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

}  // namespace rcl
