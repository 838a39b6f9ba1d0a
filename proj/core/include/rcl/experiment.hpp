#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rcl/dataset.hpp"
#include "rcl/metrics.hpp"
#include "rcl/model.hpp"

namespace rcl {

// Synthetic data recipe for one experiment. Train and validation splits use
// the long-tail profile; the held-out test split is balanced with
// test_per_class instances per class. All splits share seed-derived class
// centers so they sample one underlying distribution.
struct DatasetConfig {
  LongTailProfile profile{5, 1000, 100.0};
  int input_dim = 2;
  double center_scale = 1.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;
  int test_per_class = 200;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  TrainConfig train;
  std::vector<std::string> combinations{"lc"};
  int repeat_seeds = 5;
  std::string out_dir = "runs/default";
};

void validate_experiment_config(const ExperimentConfig& config);

// Maps a combination string onto a loss variant. Classifier tokens: "lc"
// (logit adjusted), "ce", "balsoftmax"; contrastive chains build on "lc":
// "lc+scl", "lc+scl+rcl", "lc+scl+bcl", "lc+scl+bcl+rcl".
LossVariant variant_from_combination(const std::string& combination);

// Config file round-trip. An optional [run] section pins one (combination,
// seed) cell; run snapshots always carry it.
ExperimentConfig load_experiment_config(std::istream& in, const std::string& name = "<stream>");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void write_experiment_config(const ExperimentConfig& config, std::ostream& out,
                             const std::string& run_combination = "",
                             std::optional<std::uint64_t> run_seed = {});

struct RunSection {
  std::string combination;
  std::optional<std::uint64_t> seed;
};
// Returns the [run] section of a snapshot, if present.
RunSection read_run_section(const std::filesystem::path& path);

// The three splits of one run, derived from (dataset seed, run seed).
struct RunData {
  Dataset train;
  Dataset val;
  Dataset test;
};
RunData make_run_data(const DatasetConfig& config, std::uint64_t run_seed);

// Evaluates params on a balanced test split: per-class accuracy from the
// classifier head, cluster indices and margins from the contrastive
// embeddings.
MetricsReport evaluate(const ModelParams& params, const Dataset& test_set);

struct RunArtifacts {
  MetricsReport metrics;
  TrainHistory history;
  std::filesystem::path dir;
};

// One (combination, seed) cell: generates data, trains, evaluates on the
// balanced test split, and writes config snapshot, metrics report, history,
// checkpoint, and embedding dump into a run-scoped directory. Refuses an
// existing directory unless overwrite is set.
RunArtifacts run_single(const ExperimentConfig& config, const std::string& combination,
                        std::uint64_t seed, bool overwrite = false);

struct AblationCell {
  std::string combination;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;  // default-constructed when the cell failed
  double arithmetic = 0.0;
  double harmonic = 0.0;
  double chi = 0.0;
  double dbi = 0.0;
  double wall_seconds = 0.0;
};

struct AblationRow {
  std::string combination;
  std::vector<AblationCell> cells;  // one per seed
  double median_arithmetic = 0.0;
  double median_harmonic = 0.0;
  double median_chi = 0.0;
  double median_dbi = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

// Runs the full (combination x seed) grid with run seeds base_seed + r for
// r in [0, repeat_seeds). Cells may run on up to `threads` workers; each cell
// is single-threaded and deterministic, so the artifacts do not depend on the
// thread count. Per-cell failures are recorded and the report is still
// emitted.
AblationReport run_ablation(const ExperimentConfig& config, bool overwrite = false,
                            int threads = 1);

void write_ablation_report(const AblationReport& report, std::ostream& out);
void print_ablation_table(const AblationReport& report, std::ostream& out);

double median(std::vector<double> values);

struct EmbeddingComparison {
  double chi_a = 0.0, dbi_a = 0.0;
  double chi_b = 0.0, dbi_b = 0.0;
  double delta_chi = 0.0;  // b - a
  double delta_dbi = 0.0;  // b - a
};

// Reads the embedding dumps of two finished runs and compares their cluster
// indices; a missing dump raises an error naming the run directory.
EmbeddingComparison compare_embeddings(const std::filesystem::path& run_a,
                                       const std::filesystem::path& run_b);
void write_comparison(const EmbeddingComparison& cmp, std::ostream& out);

// One line per instance: "<label> <z_1> ... <z_K>" with 17 significant
// digits.
void export_embeddings(const ModelParams& params, const Dataset& dataset,
                       const std::filesystem::path& path);
void read_embedding_dump(const std::filesystem::path& path, Eigen::MatrixXd& embeddings,
                         Eigen::VectorXi& labels);

// Fixed artifact names inside a run directory.
inline constexpr const char* kConfigFileName = "config.ini";
inline constexpr const char* kMetricsFileName = "metrics.txt";
inline constexpr const char* kHistoryFileName = "history.tsv";
inline constexpr const char* kCheckpointFileName = "checkpoint.txt";
inline constexpr const char* kEmbeddingsFileName = "embeddings.txt";

}  // namespace rcl
