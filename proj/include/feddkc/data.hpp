#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feddkc/neural.hpp"

namespace feddkc {

struct Dataset {
  Matrix features;  // N x d
  Labels labels;    // N, each in [0, class_count)
  std::size_t class_count = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  std::vector<std::size_t> class_histogram() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
  // FNV-1a over the shape, the raw bytes of each feature and every label.
  std::uint64_t checksum() const;
  // Throws InvalidLabel / InvalidKnowledge when the invariants fail.
  void validate() const;
};

// CSV layout: first line "d,C"; then one row per sample with d real values
// followed by an integer label in [0, C). Blank lines and lines starting with
// '#' are skipped. Features are standardized per column after parsing (zero
// mean, unit variance; constant columns become 0).
Dataset load_csv(const std::string& path);
// Writes features as-is, full precision.
void write_csv(const Dataset& ds, const std::string& path);
void standardize(Matrix& features);

// One Gaussian cluster per class: centroid ~ N(0, I_d), sample = centroid +
// spread * N(0, I_d). Samples are ordered by class.
Dataset synth_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim, double spread,
                    std::uint64_t seed);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Stratified split: each class contributes round(test_fraction * n_c) rows to
// the test set.
TrainTestSplit train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct PartitionPlan {
  double alpha = 1.0;
  std::size_t client_count = 1;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // client id per sample

  std::vector<std::size_t> indices_for(int client) const;
  std::vector<std::vector<std::size_t>> client_indices() const;
  std::string to_json() const;
  static PartitionPlan from_json(const std::string& text);
};

// Label-skew partition: for every class, proportions over the K clients are
// drawn from a symmetric Dirichlet(alpha) and that class's (shuffled) samples
// are cut at the cumulative proportions. Redraws the whole plan while any client
// is empty; throws PartitionFailure after 100 attempts.
PartitionPlan dirichlet_partition(const Dataset& ds, std::size_t client_count, double alpha, std::uint64_t seed);

}  // namespace feddkc
