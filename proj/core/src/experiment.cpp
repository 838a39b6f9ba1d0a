#include "rcl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "rcl/config_file.hpp"
#include "rcl/errors.hpp"

namespace rcl {

namespace fs = std::filesystem;

void validate_experiment_config(const ExperimentConfig& config) {
  if (config.combinations.empty())
    throw ConfigError("experiment config: need at least one loss combination");
  if (config.repeat_seeds < 1)
    throw ConfigError("experiment config: repeat_seeds must be >= 1");
  if (config.dataset.test_per_class < 1)
    throw ConfigError("experiment config: test_per_class must be >= 1");
  for (const std::string& combination : config.combinations)
    variant_from_combination(combination);  // throws on unknown combinations
  try {
    make_longtail_counts(config.dataset.profile);
    validate_train_config(config.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

LossVariant variant_from_combination(const std::string& combination) {
  std::string lowered;
  for (const char c : combination)
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  if (lowered == "ce") return LossVariant::kCe;
  if (lowered == "balsoftmax") return LossVariant::kBalancedSoftmax;
  if (lowered == "lc") return LossVariant::kLogitAdjusted;
  if (lowered == "lc+scl") return LossVariant::kScl;
  if (lowered == "lc+scl+bcl") return LossVariant::kBcl;
  if (lowered == "lc+scl+rcl") return LossVariant::kRcl;
  if (lowered == "lc+scl+bcl+rcl") return LossVariant::kBclRcl;
  throw ConfigError("unknown loss combination '" + combination +
                    "' (expected ce, balsoftmax, lc, lc+scl, lc+scl+bcl, lc+scl+rcl, "
                    "lc+scl+bcl+rcl)");
}

// ---------------------------------------------------------------------------
// Config file binding.

namespace {

struct KeyBinder {
  const IniFile::Section* section;
  std::string file;

  std::string get(const std::string& key, const std::string& fallback, bool* found = nullptr) const {
    if (section != nullptr) {
      for (const auto& [k, v] : section->entries) {
        if (k == key) {
          if (found != nullptr) *found = true;
          return v;
        }
      }
    }
    if (found != nullptr) *found = false;
    return fallback;
  }

  void check_known(std::initializer_list<const char*> known) const {
    if (section == nullptr) return;
    for (const auto& [key, value] : section->entries) {
      bool ok = false;
      for (const char* k : known)
        if (key == k) ok = true;
      if (!ok)
        throw ConfigError(file + ": unknown key '" + key + "' in section [" + section->name + "]");
    }
  }
};

}  // namespace

ExperimentConfig load_experiment_config(std::istream& in, const std::string& name) {
  const IniFile ini = parse_ini(in, name);
  for (const IniFile::Section& section : ini.sections) {
    if (section.name != "dataset" && section.name != "train" && section.name != "loss" &&
        section.name != "compression" && section.name != "experiment" && section.name != "run")
      throw ConfigError(name + ": unknown section [" + section.name + "]");
  }

  ExperimentConfig config;

  KeyBinder dataset{ini.find("dataset"), name};
  dataset.check_known({"num_classes", "max_count", "imbalance_factor", "input_dim",
                       "center_scale", "noise_sigma", "seed", "test_per_class"});
  config.dataset.profile.num_classes =
      static_cast<int>(to_long("num_classes", dataset.get("num_classes", "5")));
  config.dataset.profile.max_count =
      static_cast<int>(to_long("max_count", dataset.get("max_count", "1000")));
  config.dataset.profile.imbalance_factor =
      to_double("imbalance_factor", dataset.get("imbalance_factor", "100"));
  config.dataset.input_dim = static_cast<int>(to_long("input_dim", dataset.get("input_dim", "2")));
  config.dataset.center_scale = to_double("center_scale", dataset.get("center_scale", "1"));
  config.dataset.noise_sigma = to_double("noise_sigma", dataset.get("noise_sigma", "0.5"));
  config.dataset.seed = to_u64("seed", dataset.get("seed", "1"));
  config.dataset.test_per_class =
      static_cast<int>(to_long("test_per_class", dataset.get("test_per_class", "200")));

  KeyBinder train{ini.find("train"), name};
  train.check_known({"epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
                     "jitter_sigma", "seed", "hidden_dim", "feature_dim", "embedding_dim"});
  config.train.epochs = static_cast<int>(to_long("epochs", train.get("epochs", "200")));
  config.train.batch_size = static_cast<int>(to_long("batch_size", train.get("batch_size", "128")));
  config.train.learning_rate = to_double("learning_rate", train.get("learning_rate", "0.05"));
  config.train.momentum = to_double("momentum", train.get("momentum", "0.9"));
  config.train.weight_decay = to_double("weight_decay", train.get("weight_decay", "0"));
  config.train.jitter_sigma = to_double("jitter_sigma", train.get("jitter_sigma", "0.35"));
  config.train.seed = to_u64("seed", train.get("seed", "1"));
  config.train.hidden_dim = static_cast<int>(to_long("hidden_dim", train.get("hidden_dim", "64")));
  config.train.feature_dim =
      static_cast<int>(to_long("feature_dim", train.get("feature_dim", "32")));
  config.train.embedding_dim =
      static_cast<int>(to_long("embedding_dim", train.get("embedding_dim", "16")));

  KeyBinder loss{ini.find("loss"), name};
  loss.check_known({"tau_logit", "temperature", "alpha", "beta", "strict_paper"});
  config.train.loss.tau_logit = to_double("tau_logit", loss.get("tau_logit", "1.3"));
  config.train.loss.temperature = to_double("temperature", loss.get("temperature", "0.1"));
  config.train.loss.alpha = to_double("alpha", loss.get("alpha", "2"));
  config.train.loss.beta = to_double("beta", loss.get("beta", "1"));
  config.train.loss.strict_paper = to_bool("strict_paper", loss.get("strict_paper", "false"));

  KeyBinder compression{ini.find("compression"), name};
  compression.check_known(
      {"enabled", "trigger_epoch_fraction", "accuracy_threshold", "low_factor", "invert_polarity"});
  config.train.compression.enabled = to_bool("enabled", compression.get("enabled", "false"));
  config.train.compression.trigger_epoch_fraction =
      to_double("trigger_epoch_fraction", compression.get("trigger_epoch_fraction", "0.5"));
  config.train.compression.accuracy_threshold =
      to_double("accuracy_threshold", compression.get("accuracy_threshold", "0.2"));
  config.train.compression.low_factor =
      to_double("low_factor", compression.get("low_factor", "0.005"));
  config.train.compression.invert_polarity =
      to_bool("invert_polarity", compression.get("invert_polarity", "false"));

  KeyBinder experiment{ini.find("experiment"), name};
  experiment.check_known({"combinations", "repeat_seeds", "out_dir"});
  config.combinations = split_list(experiment.get("combinations", "lc"));
  config.repeat_seeds =
      static_cast<int>(to_long("repeat_seeds", experiment.get("repeat_seeds", "5")));
  config.out_dir = experiment.get("out_dir", "runs/default");

  KeyBinder run{ini.find("run"), name};
  run.check_known({"combination", "seed"});

  validate_experiment_config(config);
  return config;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return load_experiment_config(in, path.string());
}

void write_experiment_config(const ExperimentConfig& config, std::ostream& out,
                             const std::string& run_combination,
                             std::optional<std::uint64_t> run_seed) {
  out << std::setprecision(17);
  out << "[dataset]\n";
  out << "num_classes = " << config.dataset.profile.num_classes << "\n";
  out << "max_count = " << config.dataset.profile.max_count << "\n";
  out << "imbalance_factor = " << config.dataset.profile.imbalance_factor << "\n";
  out << "input_dim = " << config.dataset.input_dim << "\n";
  out << "center_scale = " << config.dataset.center_scale << "\n";
  out << "noise_sigma = " << config.dataset.noise_sigma << "\n";
  out << "seed = " << config.dataset.seed << "\n";
  out << "test_per_class = " << config.dataset.test_per_class << "\n";
  out << "\n[train]\n";
  out << "epochs = " << config.train.epochs << "\n";
  out << "batch_size = " << config.train.batch_size << "\n";
  out << "learning_rate = " << config.train.learning_rate << "\n";
  out << "momentum = " << config.train.momentum << "\n";
  out << "weight_decay = " << config.train.weight_decay << "\n";
  out << "jitter_sigma = " << config.train.jitter_sigma << "\n";
  out << "seed = " << config.train.seed << "\n";
  out << "hidden_dim = " << config.train.hidden_dim << "\n";
  out << "feature_dim = " << config.train.feature_dim << "\n";
  out << "embedding_dim = " << config.train.embedding_dim << "\n";
  out << "\n[loss]\n";
  out << "tau_logit = " << config.train.loss.tau_logit << "\n";
  out << "temperature = " << config.train.loss.temperature << "\n";
  out << "alpha = " << config.train.loss.alpha << "\n";
  out << "beta = " << config.train.loss.beta << "\n";
  out << "strict_paper = " << (config.train.loss.strict_paper ? "true" : "false") << "\n";
  out << "\n[compression]\n";
  out << "enabled = " << (config.train.compression.enabled ? "true" : "false") << "\n";
  out << "trigger_epoch_fraction = " << config.train.compression.trigger_epoch_fraction << "\n";
  out << "accuracy_threshold = " << config.train.compression.accuracy_threshold << "\n";
  out << "low_factor = " << config.train.compression.low_factor << "\n";
  out << "invert_polarity = " << (config.train.compression.invert_polarity ? "true" : "false")
      << "\n";
  out << "\n[experiment]\n";
  out << "combinations =";
  for (size_t i = 0; i < config.combinations.size(); ++i)
    out << (i == 0 ? " " : ", ") << config.combinations[i];
  out << "\n";
  out << "repeat_seeds = " << config.repeat_seeds << "\n";
  out << "out_dir = " << config.out_dir << "\n";
  if (!run_combination.empty()) {
    out << "\n[run]\n";
    out << "combination = " << run_combination << "\n";
    if (run_seed.has_value()) out << "seed = " << *run_seed << "\n";
  }
}

RunSection read_run_section(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const IniFile ini = parse_ini(in, path.string());
  RunSection run;
  const IniFile::Section* section = ini.find("run");
  if (section == nullptr) return run;
  for (const auto& [key, value] : section->entries) {
    if (key == "combination") run.combination = value;
    else if (key == "seed") run.seed = to_u64("seed", value);
    else throw ConfigError(path.string() + ": unknown key '" + key + "' in section [run]");
  }
  return run;
}

// ---------------------------------------------------------------------------
// Run execution.

RunData make_run_data(const DatasetConfig& config, std::uint64_t run_seed) {
  const std::uint64_t base = Rng::derive(config.seed, run_seed);
  const std::uint64_t center_seed = Rng::derive(base, 0);
  const Eigen::VectorXi longtail = make_longtail_counts(config.profile);
  const Eigen::VectorXi balanced =
      Eigen::VectorXi::Constant(config.profile.num_classes, config.test_per_class);

  RunData data;
  data.train = gen_gaussian_mixture(longtail, config.input_dim, config.center_scale,
                                    config.noise_sigma, Rng::derive(base, 1), center_seed);
  data.val = gen_gaussian_mixture(longtail, config.input_dim, config.center_scale,
                                  config.noise_sigma, Rng::derive(base, 2), center_seed);
  data.test = gen_gaussian_mixture(balanced, config.input_dim, config.center_scale,
                                   config.noise_sigma, Rng::derive(base, 3), center_seed);
  return data;
}

MetricsReport evaluate(const ModelParams& params, const Dataset& test_set) {
  const Forward fwd = forward(params, test_set.features);
  MetricsReport report;
  report.per_class_accuracy =
      per_class_accuracy(argmax_rows(fwd.logits), test_set.labels, test_set.num_classes);
  report.arithmetic_mean = arithmetic_mean_acc(report.per_class_accuracy);
  report.harmonic_mean = harmonic_mean_acc(report.per_class_accuracy);
  report.harmonic_zero_class = report.per_class_accuracy.minCoeff() == 0.0;
  report.chi = calinski_harabasz(fwd.embeddings, test_set.labels);
  report.dbi = davies_bouldin(fwd.embeddings, test_set.labels);
  report.margins = margin_stats(fwd.embeddings, test_set.labels);
  return report;
}

namespace {

std::string slug(const std::string& combination) {
  std::string out;
  for (const char c : combination) out.push_back(c == '+' ? '-' : c);
  return out;
}

}  // namespace

RunArtifacts run_single(const ExperimentConfig& config, const std::string& combination,
                        std::uint64_t seed, bool overwrite) {
  validate_experiment_config(config);
  const LossVariant variant = variant_from_combination(combination);

  const fs::path dir =
      fs::path(config.out_dir) / (slug(combination) + "_seed" + std::to_string(seed));
  if (fs::exists(dir)) {
    if (!overwrite)
      throw ConfigError("run directory " + dir.string() +
                        " already exists (pass --overwrite to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);

  const RunData data = make_run_data(config.dataset, seed);

  TrainConfig train_cfg = config.train;
  train_cfg.loss.variant = variant;
  train_cfg.seed = Rng::derive(config.train.seed, seed);

  TrainerState state = init_trainer(data.train, train_cfg);
  TrainHistory history;
  try {
    history = train_epochs(state, data.train, data.val, train_cfg, train_cfg.epochs);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " [run " + slug(combination) + "_seed" +
                          std::to_string(seed) + "]");
  }

  RunArtifacts artifacts;
  artifacts.metrics = evaluate(state.params, data.test);
  artifacts.history = std::move(history);
  artifacts.dir = dir;

  {
    std::ofstream out(dir / kConfigFileName);
    if (!out) throw std::runtime_error("cannot write " + (dir / kConfigFileName).string());
    write_experiment_config(config, out, combination, seed);
  }
  {
    std::ofstream out(dir / kMetricsFileName);
    if (!out) throw std::runtime_error("cannot write " + (dir / kMetricsFileName).string());
    write_metrics(artifacts.metrics, out);
  }
  write_history(artifacts.history, dir / kHistoryFileName);
  save_checkpoint(state, dir / kCheckpointFileName);
  export_embeddings(state.params, data.test, dir / kEmbeddingsFileName);
  return artifacts;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationReport run_ablation(const ExperimentConfig& config, bool overwrite, int threads) {
  validate_experiment_config(config);
  if (threads < 1) threads = 1;

  struct CellJob {
    std::string combination;
    std::uint64_t seed;
  };
  std::vector<CellJob> jobs;
  for (const std::string& combination : config.combinations)
    for (int r = 0; r < config.repeat_seeds; ++r)
      jobs.push_back(CellJob{combination, config.train.seed + static_cast<std::uint64_t>(r)});

  std::vector<AblationCell> cells(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      AblationCell& cell = cells[i];
      cell.combination = jobs[i].combination;
      cell.seed = jobs[i].seed;
      const auto start = std::chrono::steady_clock::now();
      try {
        const RunArtifacts artifacts = run_single(config, jobs[i].combination, jobs[i].seed, overwrite);
        cell.ok = true;
        cell.metrics = artifacts.metrics;
        cell.arithmetic = artifacts.metrics.arithmetic_mean;
        cell.harmonic = artifacts.metrics.harmonic_mean;
        cell.chi = artifacts.metrics.chi;
        cell.dbi = artifacts.metrics.dbi;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      cell.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };

  const int worker_count = std::min<int>(threads, static_cast<int>(jobs.size()));
  if (worker_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(worker_count));
    for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  AblationReport report;
  for (const std::string& combination : config.combinations) {
    AblationRow row;
    row.combination = combination;
    std::vector<double> arith, harm, chi, dbi;
    for (const AblationCell& cell : cells) {
      if (cell.combination != combination) continue;
      row.cells.push_back(cell);
      if (!cell.ok) continue;
      arith.push_back(cell.arithmetic);
      harm.push_back(cell.harmonic);
      chi.push_back(cell.chi);
      dbi.push_back(cell.dbi);
    }
    if (!arith.empty()) {
      row.median_arithmetic = median(arith);
      row.median_harmonic = median(harm);
      row.median_chi = median(chi);
      row.median_dbi = median(dbi);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_ablation_report(const AblationReport& report, std::ostream& out) {
  out << std::setprecision(17);
  out << "combination\tseed\tstatus\tarithmetic\tharmonic\tchi\tdbi\twall_seconds\n";
  for (const AblationRow& row : report.rows) {
    for (const AblationCell& cell : row.cells) {
      out << cell.combination << '\t' << cell.seed << '\t' << (cell.ok ? "ok" : "failed") << '\t'
          << cell.arithmetic << '\t' << cell.harmonic << '\t' << cell.chi << '\t' << cell.dbi
          << '\t' << cell.wall_seconds;
      if (!cell.ok) out << '\t' << cell.error;
      out << "\n";
    }
    out << row.combination << "\tmedian\t-\t" << row.median_arithmetic << '\t'
        << row.median_harmonic << '\t' << row.median_chi << '\t' << row.median_dbi << "\t-\n";
  }
}

void print_ablation_table(const AblationReport& report, std::ostream& out) {
  out << std::left << std::setw(20) << "combination" << std::right << std::setw(14) << "arithmetic"
      << std::setw(14) << "harmonic" << std::setw(14) << "chi" << std::setw(14) << "dbi"
      << std::setw(8) << "runs"
      << "\n";
  out << std::setprecision(4) << std::fixed;
  for (const AblationRow& row : report.rows) {
    long ok = 0;
    for (const AblationCell& cell : row.cells)
      if (cell.ok) ++ok;
    out << std::left << std::setw(20) << row.combination << std::right << std::setw(14)
        << row.median_arithmetic << std::setw(14) << row.median_harmonic << std::setw(14)
        << row.median_chi << std::setw(14) << row.median_dbi << std::setw(8)
        << (std::to_string(ok) + "/" + std::to_string(row.cells.size())) << "\n";
  }
  out.unsetf(std::ios_base::floatfield);
}

EmbeddingComparison compare_embeddings(const fs::path& run_a, const fs::path& run_b) {
  EmbeddingComparison cmp;
  Eigen::MatrixXd za, zb;
  Eigen::VectorXi la, lb;
  read_embedding_dump(run_a / kEmbeddingsFileName, za, la);
  read_embedding_dump(run_b / kEmbeddingsFileName, zb, lb);
  cmp.chi_a = calinski_harabasz(za, la);
  cmp.dbi_a = davies_bouldin(za, la);
  cmp.chi_b = calinski_harabasz(zb, lb);
  cmp.dbi_b = davies_bouldin(zb, lb);
  cmp.delta_chi = cmp.chi_b - cmp.chi_a;
  cmp.delta_dbi = cmp.dbi_b - cmp.dbi_a;
  return cmp;
}

void write_comparison(const EmbeddingComparison& cmp, std::ostream& out) {
  out << std::setprecision(17);
  out << "comparison-v1\n";
  out << "chi_a = " << cmp.chi_a << "\n";
  out << "dbi_a = " << cmp.dbi_a << "\n";
  out << "chi_b = " << cmp.chi_b << "\n";
  out << "dbi_b = " << cmp.dbi_b << "\n";
  out << "delta_chi = " << cmp.delta_chi << "\n";
  out << "delta_dbi = " << cmp.delta_dbi << "\n";
}

void export_embeddings(const ModelParams& params, const Dataset& dataset, const fs::path& path) {
  const Forward fwd = forward(params, dataset.features);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (long i = 0; i < dataset.rows(); ++i) {
    out << dataset.labels[i];
    for (long d = 0; d < fwd.embeddings.cols(); ++d) out << ' ' << fwd.embeddings(i, d);
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

void read_embedding_dump(const fs::path& path, Eigen::MatrixXd& embeddings,
                         Eigen::VectorXi& labels) {
  std::ifstream in(path);
  if (!in) throw ParseError("run " + path.parent_path().string() + " has no embedding dump (" +
                            path.string() + ")");
  std::vector<std::vector<double>> rows;
  std::vector<int> label_list;
  std::string line;
  long line_no = 0;
  size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    int label = 0;
    if (!(fields >> label))
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": cannot read label");
    std::vector<double> row;
    double v = 0.0;
    while (fields >> v) row.push_back(v);
    if (row.empty())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": no embedding values");
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": ragged embedding row");
    rows.push_back(std::move(row));
    label_list.push_back(label);
  }
  if (rows.empty()) throw ParseError(path.string() + ": empty embedding dump");
  embeddings.resize(static_cast<long>(rows.size()), static_cast<long>(width));
  labels.resize(static_cast<long>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t d = 0; d < width; ++d) embeddings(static_cast<long>(i), static_cast<long>(d)) = rows[i][d];
    labels[static_cast<long>(i)] = label_list[i];
  }
}

}  // namespace rcl
