// Command-line workbench for long-tail loss experiments: synthetic data
// generation, two-branch training, evaluation, ablation grids, embedding
// comparison and export.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rcl/errors.hpp"
#include "rcl/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool overwrite = false;
  bool strict_paper = false;
  int threads = 1;
};

rcl::ExperimentConfig load_config(const CommonArgs& args) {
  rcl::ExperimentConfig config = rcl::load_experiment_config(fs::path(args.config_path));
  if (!args.out.empty()) config.out_dir = args.out;
  if (args.strict_paper) {
    config.train.loss.strict_paper = true;
    config.train.compression.invert_polarity = true;
  }
  return config;
}

// The combination and run seed of a `train` invocation: explicit flags win,
// then the snapshot's [run] section, then the config defaults.
std::pair<std::string, std::uint64_t> resolve_run(const rcl::ExperimentConfig& config,
                                                  const CommonArgs& args) {
  rcl::RunSection run = rcl::read_run_section(fs::path(args.config_path));
  std::string combination = run.combination;
  if (combination.empty()) {
    if (config.combinations.size() != 1)
      throw rcl::ConfigError(
          "config lists several combinations; use `ablate`, or pin one in a [run] section");
    combination = config.combinations.front();
  }
  std::uint64_t seed = args.seed.value_or(run.seed.value_or(config.train.seed));
  return {combination, seed};
}

int cmd_gen_data(const CommonArgs& args) {
  const rcl::ExperimentConfig config = load_config(args);
  const std::uint64_t seed = args.seed.value_or(config.train.seed);
  const fs::path dir = args.out.empty() ? fs::path(config.out_dir) : fs::path(args.out);
  fs::create_directories(dir);
  const char* names[3] = {"train.dat", "val.dat", "test.dat"};
  for (const char* name : names) {
    if (fs::exists(dir / name) && !args.overwrite)
      throw rcl::ConfigError((dir / name).string() + " already exists (pass --overwrite)");
  }
  const rcl::RunData data = rcl::make_run_data(config.dataset, seed);
  rcl::write_dataset(data.train, dir / names[0]);
  rcl::write_dataset(data.val, dir / names[1]);
  rcl::write_dataset(data.test, dir / names[2]);
  std::cout << "wrote " << data.train.rows() << " train / " << data.val.rows() << " val / "
            << data.test.rows() << " test instances under " << dir.string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const rcl::ExperimentConfig config = load_config(args);
  const auto [combination, seed] = resolve_run(config, args);
  const rcl::RunArtifacts artifacts = rcl::run_single(config, combination, seed, args.overwrite);
  std::cout << "run " << artifacts.dir.string() << "\n";
  rcl::write_metrics(artifacts.metrics, std::cout);
  return 0;
}

int cmd_eval(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const rcl::ExperimentConfig config = rcl::load_experiment_config(dir / rcl::kConfigFileName);
  const rcl::RunSection run = rcl::read_run_section(dir / rcl::kConfigFileName);
  if (!run.seed.has_value())
    throw rcl::ConfigError(run_dir + ": snapshot has no [run] seed, cannot rebuild the test set");
  const rcl::RunData data = rcl::make_run_data(config.dataset, *run.seed);
  const rcl::TrainerState state = rcl::load_checkpoint(dir / rcl::kCheckpointFileName);
  const rcl::MetricsReport report = rcl::evaluate(state.params, data.test);
  rcl::write_metrics(report, std::cout);
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const rcl::ExperimentConfig config = load_config(args);
  const rcl::AblationReport report = rcl::run_ablation(config, args.overwrite, args.threads);
  fs::create_directories(config.out_dir);
  const fs::path table_path = fs::path(config.out_dir) / "ablation.tsv";
  std::ofstream table(table_path);
  if (!table) throw std::runtime_error("cannot write " + table_path.string());
  rcl::write_ablation_report(report, table);
  rcl::print_ablation_table(report, std::cout);
  std::cout << "full matrix: " << table_path.string() << "\n";
  for (const rcl::AblationRow& row : report.rows)
    for (const rcl::AblationCell& cell : row.cells)
      if (!cell.ok)
        std::cerr << "cell " << cell.combination << " seed " << cell.seed
                  << " failed: " << cell.error << "\n";
  return 0;
}

int cmd_compare(const std::string& run_a, const std::string& run_b, const std::string& out) {
  const rcl::EmbeddingComparison cmp = rcl::compare_embeddings(run_a, run_b);
  rcl::write_comparison(cmp, std::cout);
  if (!out.empty()) {
    std::ofstream file(out);
    if (!file) throw std::runtime_error("cannot write " + out);
    rcl::write_comparison(cmp, file);
  }
  return 0;
}

int cmd_export(const std::string& run_dir, const std::string& out) {
  const fs::path dir(run_dir);
  const rcl::ExperimentConfig config = rcl::load_experiment_config(dir / rcl::kConfigFileName);
  const rcl::RunSection run = rcl::read_run_section(dir / rcl::kConfigFileName);
  if (!run.seed.has_value())
    throw rcl::ConfigError(run_dir + ": snapshot has no [run] seed, cannot rebuild the test set");
  const rcl::RunData data = rcl::make_run_data(config.dataset, *run.seed);
  const rcl::TrainerState state = rcl::load_checkpoint(dir / rcl::kCheckpointFileName);
  rcl::export_embeddings(state.params, data.test, out);
  std::cout << "wrote " << data.test.rows() << " embeddings to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"long-tail classification loss workbench"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string run_dir, run_a, run_b, out_file;

  auto add_common = [&](CLI::App* cmd, bool with_seed = true) {
    cmd->add_option("--config", args.config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    if (with_seed) cmd->add_option("--seed", args.seed, "run seed override");
    cmd->add_option("--out", args.out, "output directory override");
    cmd->add_flag("--overwrite", args.overwrite, "replace existing outputs");
    cmd->add_flag("--strict-paper", args.strict_paper,
                  "literal 1/|B_y| normalizer and inverted compression polarity");
    cmd->add_option("--threads", args.threads,
                    "worker threads across ablation cells (each run stays single-threaded)")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the train/val/test splits");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train one (combination, seed) run");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "recompute metrics for a finished run");
  eval->add_option("run_dir", run_dir, "run directory")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "run the full combination x seed grid");
  add_common(ablate);

  CLI::App* compare = app.add_subcommand("compare", "compare two runs' embedding quality");
  compare->add_option("run_a", run_a, "baseline run directory")->required();
  compare->add_option("run_b", run_b, "candidate run directory")->required();
  compare->add_option("--out", out_file, "also write the record to a file");

  CLI::App* exp = app.add_subcommand("export-embeddings", "dump test-set embeddings of a run");
  exp->add_option("run_dir", run_dir, "run directory")->required();
  exp->add_option("--out", out_file, "output file")->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(args);
    if (train->parsed()) return cmd_train(args);
    if (eval->parsed()) return cmd_eval(run_dir);
    if (ablate->parsed()) return cmd_ablate(args);
    if (compare->parsed()) return cmd_compare(run_a, run_b, out_file);
    if (exp->parsed()) return cmd_export(run_dir, out_file);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
  } catch (const rcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const rcl::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
