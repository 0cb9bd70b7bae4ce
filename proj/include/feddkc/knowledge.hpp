#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace feddkc {

// Clamp applied to every log argument so degenerate targets stay finite.
inline constexpr double kLogClamp = 1e-12;
// Tolerance on the unit sum of a probability vector.
inline constexpr double kSimplexSumTolerance = 1e-9;

// Raw logits of length C produced by a predictor. Always finite.
class Knowledge {
 public:
  explicit Knowledge(std::vector<double> values);

  std::size_t class_count() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

// A point of the probability simplex: entries in [0, 1] summing to one
// within kSimplexSumTolerance.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> probs);

  std::size_t class_count() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

  // True when `values` would be accepted by the constructor.
  static bool in_simplex(std::span<const double> values);

 private:
  std::vector<double> probs_;
};

enum class DistMeasure { PeakProbability, ShannonEntropy };

struct Peak {
  double value;
  std::size_t index;
};

// Max-shifted softmax; shift invariant and order preserving.
ProbVector softmax(const Knowledge& z);

// Entropy in bits; 0 * log2(0) counts as 0.
double shannon_entropy(const ProbVector& p);

// Largest entry; ties resolve to the lowest index.
Peak peak_probability(const ProbVector& p);

// KL(p || q) in nats with q clamped below by kLogClamp. Throws
// DimensionMismatch on length mismatch.
double kl_divergence(const ProbVector& p, const ProbVector& q);

// -ln p[label] in nats, clamped. Throws InvalidLabel when out of range.
double cross_entropy(const ProbVector& p, std::size_t label);

double evaluate(DistMeasure measure, const ProbVector& p);

// Span kernels shared by the hot loops of refinement and training. They do not
// validate their inputs.
namespace detail {
void softmax_into(std::span<const double> logits, double inv_temperature, std::span<double> out);
double entropy_bits(std::span<const double> probs);
Peak argmax(std::span<const double> values);
}  // namespace detail

}  // namespace feddkc
