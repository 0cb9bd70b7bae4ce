#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace feddkc {

// Stream identifiers used with derive_seed(). Every random decision in a run
// is drawn from one of these streams so results do not depend on the order
// in which independent components execute.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kPartition = 2;
inline constexpr std::uint64_t kServerInit = 3;
inline constexpr std::uint64_t kServerBatching = 4;
inline constexpr std::uint64_t kClientInitBase = 100;
inline constexpr std::uint64_t kClientBatchingBase = 200;
}  // namespace stream

// SplitMix64 finalizer over (seed, stream). Distinct streams of the same seed
// are statistically independent.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id);

// Seeded generator with distributions implemented on top of the raw
// mt19937_64 output. The standard <random> distributions are
// implementation-defined, which would make golden traces compiler-specific.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [0, bound), unbiased.
  std::uint64_t uniform_index(std::uint64_t bound);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  // Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the boosting identity.
  double gamma(double shape);
  // Symmetric Dirichlet(alpha) over `count` categories.
  std::vector<double> dirichlet(double alpha, std::size_t count);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace feddkc
