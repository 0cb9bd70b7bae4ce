#include "feddkc/data.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "feddkc/error.hpp"

namespace feddkc {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto result = std::from_chars(text.data(), text.data() + text.size(), out);
  return result.ec == std::errc() && result.ptr == text.data() + text.size();
}

void fnv_mix(std::uint64_t& hash, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
}

}  // namespace

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> hist(class_count, 0);
  for (int y : labels) ++hist[static_cast<std::size_t>(y)];
  return hist;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.class_count = class_count;
  out.name = name;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

std::uint64_t Dataset::checksum() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  const std::uint64_t shape[3] = {size(), dim(), class_count};
  fnv_mix(hash, shape, sizeof(shape));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      const double v = features(r, c);
      fnv_mix(hash, &v, sizeof(v));
    }
  }
  for (int y : labels) {
    const std::int64_t wide = y;
    fnv_mix(hash, &wide, sizeof(wide));
  }
  return hash;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dataset feature rows and labels differ");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw Error(ErrorCode::InvalidLabel, "sample " + std::to_string(i) + " has label " + std::to_string(labels[i]));
    }
  }
  if (!features.allFinite()) throw Error(ErrorCode::InvalidKnowledge, "dataset features contain NaN or Inf");
}

void standardize(Matrix& features) {
  const Eigen::Index n = features.rows();
  if (n == 0) return;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double mean = features.col(c).mean();
    features.col(c).array() -= mean;
    const double var = features.col(c).squaredNorm() / static_cast<double>(n);
    if (var > 0.0) {
      features.col(c) /= std::sqrt(var);
    } else {
      features.col(c).setZero();
    }
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset " + path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
  bool have_header = false;
  std::vector<double> values;
  Labels labels;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = split_fields(view);
    if (!have_header) {
      if (fields.size() != 2 || !parse_number(fields[0], dim) || !parse_number(fields[1], classes) || dim == 0 ||
          classes < 2) {
        throw ParseError(path, line_no, "header must be 'd,C' with d >= 1 and C >= 2");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != dim + 1) {
      throw ParseError(path, line_no, "expected " + std::to_string(dim + 1) + " fields, got " +
                                          std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < dim; ++i) {
      double v = 0.0;
      if (!parse_number(fields[i], v) || !std::isfinite(v)) {
        throw ParseError(path, line_no, "field " + std::to_string(i + 1) + " is not a finite number");
      }
      values.push_back(v);
    }
    long long label = 0;
    if (!parse_number(fields[dim], label)) throw ParseError(path, line_no, "label is not an integer");
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ParseError(path, line_no, "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    labels.push_back(static_cast<int>(label));
  }
  if (!have_header) throw ParseError(path, line_no, "missing 'd,C' header");

  Dataset ds;
  ds.class_count = classes;
  ds.labels = std::move(labels);
  ds.features.resize(static_cast<Eigen::Index>(ds.labels.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < ds.labels.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * dim + c];
    }
  }
  standardize(ds.features);
  const auto slash = path.find_last_of('/');
  ds.name = slash == std::string::npos ? path : path.substr(slash + 1);
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write dataset " + path);
  out << ds.dim() << ',' << ds.class_count << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) out << ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) << ',';
    out << ds.labels[r] << '\n';
  }
}

Dataset synth_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t seed) {
  if (class_count == 0 || per_class == 0 || dim == 0 || !(spread >= 0.0)) {
    throw ConfigError("dataset", "synth_blobs needs positive class_count, per_class, dim and spread >= 0");
  }
  Rng rng(seed);
  Matrix centroids(static_cast<Eigen::Index>(class_count), static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    for (Eigen::Index j = 0; j < centroids.cols(); ++j) centroids(c, j) = rng.normal();
  }
  Dataset ds;
  ds.class_count = class_count;
  ds.name = "blobs";
  ds.features.resize(static_cast<Eigen::Index>(class_count * per_class), static_cast<Eigen::Index>(dim));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        ds.features(row, j) = centroids(static_cast<Eigen::Index>(c), j) + spread * rng.normal();
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

TrainTestSplit train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("dataset.test_fraction", "must be in (0, 1)");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (auto& rows : by_class) {
    rng.shuffle(std::span<std::size_t>(rows));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return TrainTestSplit{ds.subset(train_rows), ds.subset(test_rows)};
}

std::vector<std::size_t> PartitionPlan::indices_for(int client) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == client) rows.push_back(i);
  }
  return rows;
}

std::vector<std::vector<std::size_t>> PartitionPlan::client_indices() const {
  std::vector<std::vector<std::size_t>> out(client_count);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[static_cast<std::size_t>(assignment[i])].push_back(i);
  return out;
}

std::string PartitionPlan::to_json() const {
  const nlohmann::ordered_json j = {
      {"alpha", alpha}, {"client_count", client_count}, {"seed", seed}, {"assignment", assignment}};
  return j.dump();
}

PartitionPlan PartitionPlan::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PartitionPlan plan;
    plan.alpha = j.at("alpha").get<double>();
    plan.client_count = j.at("client_count").get<std::size_t>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.assignment = j.at("assignment").get<std::vector<int>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("partition plan", 1, e.what());
  }
}

PartitionPlan dirichlet_partition(const Dataset& ds, std::size_t client_count, double alpha, std::uint64_t seed) {
  if (client_count == 0) throw ConfigError("federation.clients", "must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("federation.alpha", "must be > 0");
  if (ds.size() < client_count) {
    throw Error(ErrorCode::PartitionFailure, "fewer samples than clients");
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  PartitionPlan plan{alpha, client_count, seed, std::vector<int>(ds.size(), -1)};
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::size_t> counts(client_count, 0);
    for (auto& rows : by_class) {
      rng.shuffle(std::span<std::size_t>(rows));
      const std::vector<double> share = rng.dirichlet(alpha, client_count);
      double cumulative = 0.0;
      std::size_t begin = 0;
      for (std::size_t k = 0; k < client_count; ++k) {
        cumulative += share[k];
        const std::size_t end = k + 1 == client_count
                                    ? rows.size()
                                    : std::min(rows.size(), static_cast<std::size_t>(std::llround(
                                                                cumulative * static_cast<double>(rows.size()))));
        for (std::size_t i = begin; i < end; ++i) plan.assignment[rows[i]] = static_cast<int>(k);
        counts[k] += end > begin ? end - begin : 0;
        begin = std::max(begin, end);
      }
    }
    if (std::all_of(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; })) return plan;
  }
  throw Error(ErrorCode::PartitionFailure, "a client stayed empty after " + std::to_string(kMaxAttempts) +
                                               " Dirichlet draws (alpha=" + std::to_string(alpha) + ")");
}

}  // namespace feddkc
