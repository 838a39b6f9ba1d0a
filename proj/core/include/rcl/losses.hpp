#pragma once

#include <Eigen/Dense>

namespace rcl {

// Numerically stable log(sum(exp(v))) via max subtraction. Exact under
// translation: log_sum_exp(v + c) == log_sum_exp(v) + c.
double log_sum_exp(const Eigen::VectorXd& v);

// Scalar loss with its gradient w.r.t. the logit vector.
struct LogitLoss {
  double value = 0.0;
  Eigen::VectorXd grad;
};

// Softmax cross entropy: -f_y + log sum exp(f).
LogitLoss ce_loss(const Eigen::VectorXd& logits, int label);

// Count-weighted softmax: -log(n_y e^{f_y} / sum_i n_i e^{f_i}). Corrects the
// long-tail train-to-test shift; implemented as cross entropy on logits
// shifted by log(n_i).
LogitLoss balanced_softmax_loss(const Eigen::VectorXd& logits, int label,
                                const Eigen::VectorXi& class_counts);

// Cross entropy on logits shifted by tau * log(prior_i). tau = 0 disables the
// adjustment; tau = 1 with priors = counts/total reproduces the balanced
// softmax.
LogitLoss logit_adjusted_loss(const Eigen::VectorXd& logits, int label,
                              const Eigen::VectorXd& priors, double tau_logit);

// A stack of contrastive embeddings. Rows must be unit vectors while the flag
// is set; compress_features clears the flag.
struct EmbeddingBatch {
  Eigen::MatrixXd embeddings;  // rows = instances, cols = embedding dim
  Eigen::VectorXi labels;
  bool unit_normalized = true;
};

// Learnable class centers, one unit row per class. They act as always-present
// class members ("class complements") inside the prototype-based losses.
struct Prototypes {
  Eigen::MatrixXd centers;  // L x K
};

// Per-class positive scaling factors tau_y applied to embeddings before the
// contrastive loss.
struct CompressionMap {
  Eigen::VectorXd factors;

  static CompressionMap identity(int num_classes);
  bool is_identity() const;
};

struct ContrastiveOptions {
  // Literal normalization from the source formulas: divide each anchor's sum
  // by |B_y| instead of the actual positive count, and keep the anchor's own
  // similarity inside every denominator.
  bool strict_paper = false;
};

struct ContrastiveLoss {
  double value = 0.0;
  Eigen::MatrixXd embedding_grad;  // same shape as the batch embeddings
  Eigen::MatrixXd prototype_grad;  // empty unless the loss uses prototypes
};

// Supervised contrastive loss. Per anchor i of class y:
//   -(1/(|B_y|-1)) sum_{p in B_y\{i}} log( e^{z_i.z_p/t} / sum_{k != i} e^{z_i.z_k/t} )
// averaged over anchors that have at least one positive; anchors without a
// positive are skipped rather than counted as zero.
ContrastiveLoss scl_loss(const EmbeddingBatch& batch, double temperature,
                         const ContrastiveOptions& opts = {});

// Rebalanced contrastive loss: the SCL numerator gains a factor n_y and every
// denominator term a factor n_j (training-set class frequencies). Equal
// counts reduce it to scl_loss exactly.
ContrastiveLoss rcl_loss(const EmbeddingBatch& batch,
                         const Eigen::VectorXi& class_counts,
                         double temperature,
                         const ContrastiveOptions& opts = {});

// Independent pairwise-margin form of the rebalanced loss: per positive p,
//   log(1 + sum_{(j,k) != (y,p), k != i} e^{log(n_j/n_y)} e^{(z_i.z_k - z_i.z_p)/t}).
// Algebraically identical to rcl_loss; kept as a separate evaluation path so
// the identity is checkable.
double rcl_pairwise_margin_form(const EmbeddingBatch& batch,
                                const Eigen::VectorXi& class_counts,
                                double temperature,
                                const ContrastiveOptions& opts = {});

// Balanced contrastive loss: prototypes join their class as extra members
// (so every anchor has a positive) and each class's denominator contribution
// is the mean of its terms, so batch-frequent classes do not dominate.
ContrastiveLoss bcl_loss(const EmbeddingBatch& batch,
                         const Prototypes& prototypes, double temperature,
                         const ContrastiveOptions& opts = {});

// Scales row i by factors[label_i] without renormalizing; the returned batch
// has unit_normalized cleared.
EmbeddingBatch compress_features(const EmbeddingBatch& batch,
                                 const CompressionMap& map);

// Balanced + rebalanced contrastive loss on compressed features: the bcl_loss
// structure with count factors n_y / n_j, evaluated on z~ = tau_y * z
// (prototypes compressed with their class factor). Gradients chain through
// the scaling back to the raw embeddings and prototypes. Equal counts with
// unit factors reduce it to bcl_loss exactly.
ContrastiveLoss bcl_rcl_loss(const EmbeddingBatch& batch,
                             const Prototypes& prototypes,
                             const Eigen::VectorXi& class_counts,
                             const CompressionMap& map, double temperature,
                             const ContrastiveOptions& opts = {});

// Loss selection for a training run. The first three variants are
// classifier-only; the contrastive variants pair the logit-adjusted
// classifier with the named contrastive loss.
enum class LossVariant {
  kCe,
  kBalancedSoftmax,
  kLogitAdjusted,
  kScl,
  kBcl,
  kRcl,
  kBclRcl,
};

enum class ClassifierKind { kCe, kBalancedSoftmax, kLogitAdjusted };
enum class ContrastiveKind { kNone, kScl, kBcl, kRcl, kBclRcl };

ClassifierKind classifier_kind(LossVariant variant);
ContrastiveKind contrastive_kind(LossVariant variant);
const char* loss_variant_name(LossVariant variant);

struct LossConfig {
  LossVariant variant = LossVariant::kCe;
  double tau_logit = 1.3;    // logit adjustment strength
  Eigen::VectorXd priors;    // class priors pi_y, simplex
  double temperature = 0.1;  // contrastive temperature; 1 gives raw dot products
  double alpha = 2.0;        // classifier loss weight
  double beta = 1.0;         // contrastive loss weight
  bool strict_paper = false;
};

void validate_loss_config(const LossConfig& config, int num_classes);

// alpha * classifier_loss + beta * contrastive_loss.
double total_loss(double classifier_loss, double contrastive_loss,
                  const LossConfig& config);

// Variant dispatcher used by the trainer. The compression map is honored by
// the rebalanced variants (kRcl, kBclRcl) and ignored by kScl/kBcl, which are
// defined on the raw unit embeddings.
ContrastiveLoss contrastive_loss(ContrastiveKind kind,
                                 const EmbeddingBatch& batch,
                                 const Prototypes& prototypes,
                                 const Eigen::VectorXi& class_counts,
                                 const CompressionMap& map, double temperature,
                                 const ContrastiveOptions& opts = {});

}  // namespace rcl
