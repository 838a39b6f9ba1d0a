#include "rcl/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "rcl/errors.hpp"

namespace rcl {

void validate_dataset(const Dataset& dataset) {
  const long n = dataset.features.rows();
  if (dataset.num_classes < 1) throw std::invalid_argument("dataset: num_classes must be >= 1");
  if (dataset.input_dim != dataset.features.cols())
    throw std::invalid_argument("dataset: input_dim does not match feature columns");
  if (dataset.labels.size() != n)
    throw std::invalid_argument("dataset: label count does not match feature rows");
  if (dataset.class_counts.size() != dataset.num_classes)
    throw std::invalid_argument("dataset: class_counts length does not match num_classes");

  Eigen::VectorXi counted = Eigen::VectorXi::Zero(dataset.num_classes);
  for (long i = 0; i < n; ++i) {
    const int y = dataset.labels[i];
    if (y < 0 || y >= dataset.num_classes)
      throw std::invalid_argument("dataset: label out of range");
    counted[y] += 1;
  }
  for (int y = 0; y < dataset.num_classes; ++y) {
    if (counted[y] == 0)
      throw std::invalid_argument("dataset: class " + std::to_string(y) + " has no instances");
    if (counted[y] != dataset.class_counts[y])
      throw std::invalid_argument("dataset: class_counts[" + std::to_string(y) +
                                  "] does not match the labels");
  }
}

Eigen::VectorXi make_longtail_counts(const LongTailProfile& profile) {
  const int L = profile.num_classes;
  if (L < 2) throw std::invalid_argument("longtail profile: need at least 2 classes");
  if (profile.max_count < 1) throw std::invalid_argument("longtail profile: max_count must be >= 1");
  if (!(profile.imbalance_factor >= 1.0))
    throw std::invalid_argument("longtail profile: imbalance factor must be >= 1");

  Eigen::VectorXi counts(L);
  for (int k = 0; k < L; ++k) {
    const double exact = profile.max_count *
                         std::pow(profile.imbalance_factor,
                                  -static_cast<double>(k) / (L - 1));
    const long rounded = static_cast<long>(std::floor(exact + 0.5));  // round half up
    if (rounded < 1)
      throw std::invalid_argument("longtail profile: class " + std::to_string(k) +
                                  " rounds to zero instances");
    counts[k] = static_cast<int>(rounded);
  }
  return counts;
}

Dataset gen_gaussian_mixture(const Eigen::VectorXi& counts, int input_dim,
                             double center_scale, double noise_sigma,
                             std::uint64_t seed,
                             std::optional<std::uint64_t> center_seed) {
  const int L = static_cast<int>(counts.size());
  if (L < 1) throw std::invalid_argument("gaussian mixture: empty count vector");
  if (input_dim < 2) throw std::invalid_argument("gaussian mixture: input_dim must be >= 2");
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("gaussian mixture: noise_sigma must be positive");
  if (!(center_scale >= 0.0)) throw std::invalid_argument("gaussian mixture: center_scale must be >= 0");
  for (int k = 0; k < L; ++k)
    if (counts[k] < 1) throw std::invalid_argument("gaussian mixture: all class counts must be >= 1");

  // Centers sit on a ring in the first two coordinates; a seed-derived
  // rotation fixes the placement without changing pairwise distances.
  Rng center_rng(center_seed.value_or(seed));
  const double rotation = 2.0 * std::numbers::pi * center_rng.uniform();
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(L, input_dim);
  for (int k = 0; k < L; ++k) {
    const double angle = rotation + 2.0 * std::numbers::pi * k / L;
    centers(k, 0) = center_scale * std::cos(angle);
    centers(k, 1) = center_scale * std::sin(angle);
  }

  long n = 0;
  for (int k = 0; k < L; ++k) n += counts[k];

  Dataset dataset;
  dataset.features.resize(n, input_dim);
  dataset.labels.resize(n);
  dataset.class_counts = counts;
  dataset.num_classes = L;
  dataset.input_dim = input_dim;

  Rng noise_rng(Rng::derive(seed, 1));
  long row = 0;
  for (int k = 0; k < L; ++k) {
    for (int i = 0; i < counts[k]; ++i, ++row) {
      for (int d = 0; d < input_dim; ++d)
        dataset.features(row, d) = centers(k, d) + noise_sigma * noise_rng.normal();
      dataset.labels[row] = k;
    }
  }
  return dataset;
}

Batch sample_batch(const Dataset& dataset, long batch_size, Rng& sampler_state,
                   double jitter_sigma) {
  const long n = dataset.rows();
  if (batch_size < 1) throw std::invalid_argument("sample_batch: batch_size must be >= 1");
  if (batch_size > n) throw std::invalid_argument("sample_batch: batch_size exceeds dataset size");
  if (jitter_sigma < 0.0) throw std::invalid_argument("sample_batch: jitter_sigma must be >= 0");

  // Partial Fisher-Yates over the index range.
  std::vector<long> pool(n);
  for (long i = 0; i < n; ++i) pool[i] = i;
  Batch batch;
  batch.indices.resize(batch_size);
  for (long j = 0; j < batch_size; ++j) {
    const long pick = j + static_cast<long>(sampler_state.uniform_below(
                              static_cast<std::uint64_t>(n - j)));
    std::swap(pool[j], pool[pick]);
    batch.indices[j] = static_cast<int>(pool[j]);
  }

  batch.labels.resize(batch_size);
  batch.batch_class_counts = Eigen::VectorXi::Zero(dataset.num_classes);
  batch.view_a.resize(batch_size, dataset.input_dim);
  for (long j = 0; j < batch_size; ++j) {
    const long idx = batch.indices[j];
    batch.labels[j] = dataset.labels[idx];
    batch.batch_class_counts[dataset.labels[idx]] += 1;
    batch.view_a.row(j) = dataset.features.row(idx);
  }

  batch.view_b = batch.view_a;
  batch.view_c = batch.view_a;
  if (jitter_sigma > 0.0) {
    for (long j = 0; j < batch_size; ++j)
      for (int d = 0; d < dataset.input_dim; ++d)
        batch.view_b(j, d) += jitter_sigma * sampler_state.normal();
    for (long j = 0; j < batch_size; ++j)
      for (int d = 0; d < dataset.input_dim; ++d)
        batch.view_c(j, d) += jitter_sigma * sampler_state.normal();
  }
  return batch;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  validate_dataset(dataset);
  out << "longtail-v1 L=" << dataset.num_classes << " D=" << dataset.input_dim << "\n";
  out << std::setprecision(17);
  for (long i = 0; i < dataset.rows(); ++i) {
    out << dataset.labels[i];
    for (int d = 0; d < dataset.input_dim; ++d) out << ' ' << dataset.features(i, d);
    out << "\n";
  }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(dataset, out);
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

namespace {

[[noreturn]] void parse_fail(const std::string& name, long line, const std::string& what) {
  throw ParseError(name + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset read_dataset(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(name + ": empty dataset file");

  int num_classes = 0;
  int input_dim = 0;
  {
    std::istringstream header(line);
    std::string magic, l_field, d_field;
    header >> magic >> l_field >> d_field;
    if (magic != "longtail-v1") parse_fail(name, 1, "expected header 'longtail-v1 L=<int> D=<int>'");
    if (l_field.rfind("L=", 0) != 0 || d_field.rfind("D=", 0) != 0)
      parse_fail(name, 1, "malformed header fields");
    try {
      num_classes = std::stoi(l_field.substr(2));
      input_dim = std::stoi(d_field.substr(2));
    } catch (const std::exception&) {
      parse_fail(name, 1, "malformed header numbers");
    }
    if (num_classes < 1 || input_dim < 1) parse_fail(name, 1, "header dimensions must be positive");
  }

  std::vector<Eigen::VectorXd> rows;
  std::vector<int> labels;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    int label = 0;
    if (!(fields >> label)) parse_fail(name, line_no, "cannot read label");
    if (label < 0 || label >= num_classes)
      parse_fail(name, line_no, "label " + std::to_string(label) + " out of range [0, " +
                                    std::to_string(num_classes) + ")");
    Eigen::VectorXd row(input_dim);
    for (int d = 0; d < input_dim; ++d) {
      if (!(fields >> row[d]))
        parse_fail(name, line_no, "expected " + std::to_string(input_dim) + " feature values");
    }
    double extra;
    if (fields >> extra) parse_fail(name, line_no, "trailing values beyond declared dimension");
    rows.push_back(std::move(row));
    labels.push_back(label);
  }
  if (rows.empty()) throw ParseError(name + ": dataset has a header but no instances");

  Dataset dataset;
  dataset.num_classes = num_classes;
  dataset.input_dim = input_dim;
  dataset.features.resize(static_cast<long>(rows.size()), input_dim);
  dataset.labels.resize(static_cast<long>(rows.size()));
  dataset.class_counts = Eigen::VectorXi::Zero(num_classes);
  for (size_t i = 0; i < rows.size(); ++i) {
    dataset.features.row(static_cast<long>(i)) = rows[i];
    dataset.labels[static_cast<long>(i)] = labels[i];
    dataset.class_counts[labels[i]] += 1;
  }
  for (int y = 0; y < num_classes; ++y) {
    if (dataset.class_counts[y] == 0)
      throw ParseError(name + ": class " + std::to_string(y) + " has no instances");
  }
  return dataset;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_dataset(in, path.string());
}

}  // namespace rcl
