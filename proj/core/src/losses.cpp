#include "rcl/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rcl {

namespace {

// Producers keep rows unit to 1e-9; the check here is deliberately looser so
// that finite-difference probes (h ~ 1e-6) remain inside the domain.
constexpr double kUnitNormTolerance = 1e-4;

void check_unit_rows(const Eigen::MatrixXd& rows, const char* what) {
  for (long i = 0; i < rows.rows(); ++i) {
    if (std::abs(rows.row(i).norm() - 1.0) > kUnitNormTolerance)
      throw std::invalid_argument(std::string(what) + " row " + std::to_string(i) +
                                  " is not unit-normalized");
  }
}

void check_label_range(const Eigen::VectorXi& labels, long space) {
  for (long i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= space)
      throw std::invalid_argument("label " + std::to_string(labels[i]) +
                                  " outside class space [0, " + std::to_string(space) + ")");
  }
}

}  // namespace

double log_sum_exp(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw std::invalid_argument("log_sum_exp: empty vector");
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf, or an inf/nan dominates
  double acc = 0.0;
  for (long i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

LogitLoss ce_loss(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("ce_loss: label out of range");
  const double lse = log_sum_exp(logits);
  LogitLoss out;
  out.value = lse - logits[label];
  out.grad = (logits.array() - lse).exp();  // softmax
  out.grad[label] -= 1.0;
  return out;
}

LogitLoss balanced_softmax_loss(const Eigen::VectorXd& logits, int label,
                                const Eigen::VectorXi& class_counts) {
  if (class_counts.size() != logits.size())
    throw std::invalid_argument("balanced_softmax_loss: counts length does not match logits");
  for (long i = 0; i < class_counts.size(); ++i)
    if (class_counts[i] < 1)
      throw std::invalid_argument("balanced_softmax_loss: class counts must be positive");
  Eigen::VectorXd shifted = logits;
  for (long i = 0; i < logits.size(); ++i)
    shifted[i] += std::log(static_cast<double>(class_counts[i]));
  return ce_loss(shifted, label);
}

LogitLoss logit_adjusted_loss(const Eigen::VectorXd& logits, int label,
                              const Eigen::VectorXd& priors, double tau_logit) {
  if (priors.size() != logits.size())
    throw std::invalid_argument("logit_adjusted_loss: priors length does not match logits");
  if (!(tau_logit >= 0.0))
    throw std::invalid_argument("logit_adjusted_loss: tau must be >= 0");
  double sum = 0.0;
  for (long i = 0; i < priors.size(); ++i) {
    if (!(priors[i] > 0.0))
      throw std::invalid_argument("logit_adjusted_loss: priors must be strictly positive");
    sum += priors[i];
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("logit_adjusted_loss: priors must sum to 1");
  Eigen::VectorXd shifted = logits;
  for (long i = 0; i < logits.size(); ++i) shifted[i] += tau_logit * std::log(priors[i]);
  return ce_loss(shifted, label);
}

CompressionMap CompressionMap::identity(int num_classes) {
  return CompressionMap{Eigen::VectorXd::Ones(num_classes)};
}

bool CompressionMap::is_identity() const {
  for (long i = 0; i < factors.size(); ++i)
    if (factors[i] != 1.0) return false;
  return true;
}

EmbeddingBatch compress_features(const EmbeddingBatch& batch, const CompressionMap& map) {
  const long m = batch.embeddings.rows();
  if (batch.labels.size() != m)
    throw std::invalid_argument("compress_features: label count does not match rows");
  if (m > 0) check_label_range(batch.labels, map.factors.size());
  for (long i = 0; i < map.factors.size(); ++i)
    if (!(map.factors[i] > 0.0))
      throw std::invalid_argument("compress_features: factors must be strictly positive");

  EmbeddingBatch out;
  out.labels = batch.labels;
  out.unit_normalized = false;
  out.embeddings = batch.embeddings;
  for (long i = 0; i < m; ++i) out.embeddings.row(i) *= map.factors[batch.labels[i]];
  return out;
}

namespace {

// All four contrastive losses share one per-anchor structure,
//   L_i = -(1/norm) * sum_{p in P_i} s_p + (|P_i|/norm) * lse_{k in K_i}(w_k + s_k),
// where s are (compressed) similarities over temperature and the per-element
// log-weight w_k carries the count ratio log(n_j/n_y) and/or the class
// averaging term -log(#terms of class j). Working with ratios instead of raw
// counts makes the equal-count reductions (rcl -> scl, bcl+rcl -> bcl) exact.
struct KernelSpec {
  bool use_prototypes = false;
  bool use_counts = false;
  bool class_average = false;
};

struct KernelInputs {
  const EmbeddingBatch& batch;
  const Prototypes* prototypes = nullptr;
  const Eigen::VectorXi* class_counts = nullptr;
  const CompressionMap* map = nullptr;
  double temperature = 1.0;
  ContrastiveOptions opts;
};

struct AnchorTerms {
  // Filled per anchor: shifted scores w + s over the allowed set, with the
  // excluded entries marked unusable.
  Eigen::VectorXd shifted;
  Eigen::VectorXd class_weight;
  std::vector<char> allowed;
  std::vector<char> positive;
};

long validate_kernel_inputs(const KernelInputs& in, const KernelSpec& spec) {
  const long m = in.batch.embeddings.rows();
  if (m == 0) throw std::invalid_argument("contrastive loss: empty batch");
  if (in.batch.labels.size() != m)
    throw std::invalid_argument("contrastive loss: label count does not match rows");
  if (!(in.temperature > 0.0))
    throw std::invalid_argument("contrastive loss: temperature must be positive");
  if (!in.batch.unit_normalized)
    throw std::invalid_argument("contrastive loss: batch is not unit-normalized");
  check_unit_rows(in.batch.embeddings, "embedding");

  long num_classes = in.batch.labels.maxCoeff() + 1;
  check_label_range(in.batch.labels, num_classes);

  if (spec.use_prototypes) {
    const auto& centers = in.prototypes->centers;
    if (centers.cols() != in.batch.embeddings.cols())
      throw std::invalid_argument("contrastive loss: prototype dimension does not match embeddings");
    if (centers.rows() < num_classes)
      throw std::invalid_argument("contrastive loss: prototype row count does not cover the labels");
    num_classes = centers.rows();
    check_unit_rows(centers, "prototype");
  }
  if (spec.use_counts) {
    if (in.class_counts->size() < num_classes)
      throw std::invalid_argument("contrastive loss: class_counts too short");
    // With prototypes every class contributes a denominator term, so every
    // count must be positive; otherwise only the classes present matter.
    if (spec.use_prototypes) {
      for (long j = 0; j < num_classes; ++j)
        if ((*in.class_counts)[j] < 1)
          throw std::invalid_argument("contrastive loss: class counts must be positive");
    } else {
      for (long i = 0; i < m; ++i)
        if ((*in.class_counts)[in.batch.labels[i]] < 1)
          throw std::invalid_argument("contrastive loss: class counts must be positive");
    }
  }
  if (in.map != nullptr) {
    if (in.map->factors.size() < num_classes)
      throw std::invalid_argument("contrastive loss: compression map too short");
    for (long j = 0; j < num_classes; ++j)
      if (!(in.map->factors[j] > 0.0))
        throw std::invalid_argument("contrastive loss: compression factors must be positive");
  }
  return num_classes;
}

struct KernelWorkspace {
  long m = 0;            // batch rows (anchors)
  long ext = 0;          // batch rows plus prototype rows
  long num_classes = 0;
  Eigen::MatrixXd raw;   // uncompressed rows, batch then prototypes
  Eigen::VectorXd tau;   // per-row compression factor
  Eigen::VectorXi cls;   // per-row class id
  Eigen::VectorXi hist;  // batch class histogram |B_y|
  Eigen::MatrixXd sims;  // m x ext similarities of anchors vs everything
};

KernelWorkspace build_workspace(const KernelInputs& in, const KernelSpec& spec) {
  KernelWorkspace ws;
  ws.m = in.batch.embeddings.rows();
  ws.num_classes = validate_kernel_inputs(in, spec);
  ws.ext = ws.m + (spec.use_prototypes ? ws.num_classes : 0);

  const long dim = in.batch.embeddings.cols();
  ws.raw.resize(ws.ext, dim);
  ws.raw.topRows(ws.m) = in.batch.embeddings;
  ws.cls.resize(ws.ext);
  ws.cls.head(ws.m) = in.batch.labels;
  if (spec.use_prototypes) {
    ws.raw.bottomRows(ws.num_classes) = in.prototypes->centers;
    for (long j = 0; j < ws.num_classes; ++j) ws.cls[ws.m + j] = static_cast<int>(j);
  }

  ws.tau = Eigen::VectorXd::Ones(ws.ext);
  if (in.map != nullptr)
    for (long e = 0; e < ws.ext; ++e) ws.tau[e] = in.map->factors[ws.cls[e]];

  ws.hist = Eigen::VectorXi::Zero(ws.num_classes);
  for (long i = 0; i < ws.m; ++i) ws.hist[in.batch.labels[i]] += 1;

  const Eigen::MatrixXd compressed = ws.tau.asDiagonal() * ws.raw;
  ws.sims = (compressed.topRows(ws.m) * compressed.transpose()) / in.temperature;
  return ws;
}

// Per-class log-weight of the denominator terms for anchor class y.
Eigen::VectorXd class_log_weights(const KernelWorkspace& ws, const KernelInputs& in,
                                  const KernelSpec& spec, int anchor_class) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(ws.num_classes);
  for (long j = 0; j < ws.num_classes; ++j) {
    if (spec.use_counts) {
      // Ratio to the anchor class: log(1) == 0 exactly when counts are equal.
      w[j] = std::log(static_cast<double>((*in.class_counts)[j]) /
                      static_cast<double>((*in.class_counts)[anchor_class]));
    }
    if (spec.class_average) {
      long terms = ws.hist[j] + (spec.use_prototypes ? 1 : 0);
      if (j == anchor_class && !in.opts.strict_paper) terms -= 1;  // anchor excluded
      if (terms > 0) w[j] -= std::log(static_cast<double>(terms));
    }
  }
  return w;
}

ContrastiveLoss contrastive_kernel(const KernelInputs& in, const KernelSpec& spec) {
  const KernelWorkspace ws = build_workspace(in, spec);
  const bool strict = in.opts.strict_paper;

  ContrastiveLoss out;
  out.embedding_grad = Eigen::MatrixXd::Zero(ws.m, ws.raw.cols());
  if (spec.use_prototypes)
    out.prototype_grad = Eigen::MatrixXd::Zero(ws.num_classes, ws.raw.cols());

  // coeff(i, e) accumulates dL_i/ds(i, e); scaled by the anchor mean, the
  // compression factors and 1/temperature afterwards.
  Eigen::MatrixXd coeff = Eigen::MatrixXd::Zero(ws.m, ws.ext);
  Eigen::VectorXd shifted(ws.ext);
  std::vector<char> allowed(static_cast<size_t>(ws.ext));
  std::vector<char> positive(static_cast<size_t>(ws.ext));

  double loss_sum = 0.0;
  long contributing = 0;

  for (long i = 0; i < ws.m; ++i) {
    const int y = in.batch.labels[i];
    const long pos_count = ws.hist[y] - 1 + (spec.use_prototypes ? 1 : 0);
    if (pos_count <= 0) continue;  // no positive pair: skip this anchor
    ++contributing;
    const double norm = strict ? static_cast<double>(ws.hist[y])
                               : static_cast<double>(pos_count);

    const Eigen::VectorXd wclass = class_log_weights(ws, in, spec, y);
    double max_shifted = -std::numeric_limits<double>::infinity();
    for (long e = 0; e < ws.ext; ++e) {
      const bool self = (e == i);
      allowed[e] = (!self || strict) ? 1 : 0;
      positive[e] = 0;
      if (!allowed[e]) continue;
      shifted[e] = wclass[ws.cls[e]] + ws.sims(i, e);
      if (shifted[e] > max_shifted) max_shifted = shifted[e];
      // positives: same-class batch members and the class's own prototype
      if (ws.cls[e] == y && !self) positive[e] = 1;
    }

    double z = 0.0;
    for (long e = 0; e < ws.ext; ++e)
      if (allowed[e]) z += std::exp(shifted[e] - max_shifted);
    const double lse = max_shifted + std::log(z);

    double pos_sim_sum = 0.0;
    for (long e = 0; e < ws.ext; ++e)
      if (positive[e]) pos_sim_sum += ws.sims(i, e);

    loss_sum += -(pos_sim_sum / norm) + (static_cast<double>(pos_count) / norm) * lse;

    for (long e = 0; e < ws.ext; ++e) {
      if (!allowed[e]) continue;
      double g = (static_cast<double>(pos_count) / norm) * std::exp(shifted[e] - lse);
      if (positive[e]) g -= 1.0 / norm;
      coeff(i, e) = g;
    }
  }

  if (contributing == 0) return out;  // no anchor had a positive: zero loss
  out.value = loss_sum / static_cast<double>(contributing);

  // Chain rule through s(i, e) = tau_i tau_e (v_i . v_e) / t: the anchor side
  // collects sum_e A(i,e) v_e, the member side sum_i A(i,e) v_i.
  const double scale = 1.0 / (static_cast<double>(contributing) * in.temperature);
  Eigen::MatrixXd weighted =
      scale * (ws.tau.head(ws.m).asDiagonal() * coeff * ws.tau.asDiagonal());
  const Eigen::MatrixXd anchor_side = weighted * ws.raw;
  const Eigen::MatrixXd member_side = weighted.transpose() * ws.raw.topRows(ws.m);
  out.embedding_grad = anchor_side + member_side.topRows(ws.m);
  if (spec.use_prototypes) out.prototype_grad = member_side.bottomRows(ws.num_classes);
  return out;
}

}  // namespace

ContrastiveLoss scl_loss(const EmbeddingBatch& batch, double temperature,
                         const ContrastiveOptions& opts) {
  KernelInputs in{batch, nullptr, nullptr, nullptr, temperature, opts};
  return contrastive_kernel(in, KernelSpec{false, false, false});
}

ContrastiveLoss rcl_loss(const EmbeddingBatch& batch, const Eigen::VectorXi& class_counts,
                         double temperature, const ContrastiveOptions& opts) {
  KernelInputs in{batch, nullptr, &class_counts, nullptr, temperature, opts};
  return contrastive_kernel(in, KernelSpec{false, true, false});
}

ContrastiveLoss bcl_loss(const EmbeddingBatch& batch, const Prototypes& prototypes,
                         double temperature, const ContrastiveOptions& opts) {
  KernelInputs in{batch, &prototypes, nullptr, nullptr, temperature, opts};
  return contrastive_kernel(in, KernelSpec{true, false, true});
}

ContrastiveLoss bcl_rcl_loss(const EmbeddingBatch& batch, const Prototypes& prototypes,
                             const Eigen::VectorXi& class_counts, const CompressionMap& map,
                             double temperature, const ContrastiveOptions& opts) {
  KernelInputs in{batch, &prototypes, &class_counts, &map, temperature, opts};
  return contrastive_kernel(in, KernelSpec{true, true, true});
}

double rcl_pairwise_margin_form(const EmbeddingBatch& batch,
                                const Eigen::VectorXi& class_counts, double temperature,
                                const ContrastiveOptions& opts) {
  KernelInputs in{batch, nullptr, &class_counts, nullptr, temperature, opts};
  const KernelSpec spec{false, true, false};
  const KernelWorkspace ws = build_workspace(in, spec);
  const bool strict = opts.strict_paper;

  double loss_sum = 0.0;
  long contributing = 0;
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(ws.ext) + 1);

  for (long i = 0; i < ws.m; ++i) {
    const int y = in.batch.labels[i];
    const long pos_count = ws.hist[y] - 1;
    if (pos_count <= 0) continue;
    ++contributing;
    const double norm = strict ? static_cast<double>(ws.hist[y])
                               : static_cast<double>(pos_count);
    const Eigen::VectorXd wclass = class_log_weights(ws, in, spec, y);

    double anchor_sum = 0.0;
    for (long p = 0; p < ws.m; ++p) {
      if (p == i || in.batch.labels[p] != y) continue;
      terms.clear();
      terms.push_back(0.0);  // the (y, p) term itself
      for (long k = 0; k < ws.ext; ++k) {
        if (k == p) continue;
        if (k == i && !strict) continue;
        terms.push_back(wclass[ws.cls[k]] + ws.sims(i, k) - ws.sims(i, p));
      }
      // log(1 + sum of margin-shifted exponentials), evaluated stably
      const double lse = log_sum_exp(
          Eigen::Map<const Eigen::VectorXd>(terms.data(), static_cast<long>(terms.size())));
      anchor_sum += lse;
    }
    loss_sum += anchor_sum / norm;
  }

  if (contributing == 0) return 0.0;
  return loss_sum / static_cast<double>(contributing);
}

ClassifierKind classifier_kind(LossVariant variant) {
  switch (variant) {
    case LossVariant::kCe: return ClassifierKind::kCe;
    case LossVariant::kBalancedSoftmax: return ClassifierKind::kBalancedSoftmax;
    default: return ClassifierKind::kLogitAdjusted;
  }
}

ContrastiveKind contrastive_kind(LossVariant variant) {
  switch (variant) {
    case LossVariant::kScl: return ContrastiveKind::kScl;
    case LossVariant::kBcl: return ContrastiveKind::kBcl;
    case LossVariant::kRcl: return ContrastiveKind::kRcl;
    case LossVariant::kBclRcl: return ContrastiveKind::kBclRcl;
    default: return ContrastiveKind::kNone;
  }
}

const char* loss_variant_name(LossVariant variant) {
  switch (variant) {
    case LossVariant::kCe: return "ce";
    case LossVariant::kBalancedSoftmax: return "balsoftmax";
    case LossVariant::kLogitAdjusted: return "lc";
    case LossVariant::kScl: return "lc+scl";
    case LossVariant::kBcl: return "lc+scl+bcl";
    case LossVariant::kRcl: return "lc+scl+rcl";
    case LossVariant::kBclRcl: return "lc+scl+bcl+rcl";
  }
  return "?";
}

void validate_loss_config(const LossConfig& config, int num_classes) {
  if (!(config.temperature > 0.0))
    throw std::invalid_argument("loss config: temperature must be positive");
  if (!(config.tau_logit >= 0.0))
    throw std::invalid_argument("loss config: tau_logit must be >= 0");
  if (classifier_kind(config.variant) == ClassifierKind::kLogitAdjusted) {
    if (config.priors.size() != num_classes)
      throw std::invalid_argument("loss config: priors length does not match class count");
    double sum = 0.0;
    for (long i = 0; i < config.priors.size(); ++i) {
      if (!(config.priors[i] > 0.0))
        throw std::invalid_argument("loss config: priors must be strictly positive");
      sum += config.priors[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("loss config: priors must sum to 1");
  }
}

double total_loss(double classifier_loss, double contrastive_loss, const LossConfig& config) {
  return config.alpha * classifier_loss + config.beta * contrastive_loss;
}

ContrastiveLoss contrastive_loss(ContrastiveKind kind, const EmbeddingBatch& batch,
                                 const Prototypes& prototypes,
                                 const Eigen::VectorXi& class_counts,
                                 const CompressionMap& map, double temperature,
                                 const ContrastiveOptions& opts) {
  switch (kind) {
    case ContrastiveKind::kScl:
      return scl_loss(batch, temperature, opts);
    case ContrastiveKind::kRcl: {
      KernelInputs in{batch, nullptr, &class_counts, &map, temperature, opts};
      return contrastive_kernel(in, KernelSpec{false, true, false});
    }
    case ContrastiveKind::kBcl:
      return bcl_loss(batch, prototypes, temperature, opts);
    case ContrastiveKind::kBclRcl:
      return bcl_rcl_loss(batch, prototypes, class_counts, map, temperature, opts);
    case ContrastiveKind::kNone:
      break;
  }
  throw std::invalid_argument("contrastive_loss: variant has no contrastive component");
}

}  // namespace rcl
