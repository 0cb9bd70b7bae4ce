#include "feddkc/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "feddkc/error.hpp"

namespace feddkc {

Knowledge::Knowledge(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::InvalidKnowledge, "knowledge must have at least one class");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorCode::InvalidKnowledge, "non-finite logit at index " + std::to_string(i));
    }
  }
}

bool ProbVector::in_simplex(std::span<const double> values) {
  if (values.empty()) return false;
  double sum = 0.0;
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kSimplexSumTolerance;
}

ProbVector::ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (!in_simplex(probs_)) {
    throw Error(ErrorCode::InvalidKnowledge, "vector of length " + std::to_string(probs_.size()) +
                                                 " is not a probability vector");
  }
}

namespace detail {

void softmax_into(std::span<const double> logits, double inv_temperature, std::span<double> out) {
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - top) * inv_temperature);
    total += out[i];
  }
  for (auto& v : out) v /= total;
}

double entropy_bits(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

Peak argmax(std::span<const double> values) {
  Peak best{values[0], 0};
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > best.value) best = {values[i], i};
  }
  return best;
}

}  // namespace detail

ProbVector softmax(const Knowledge& z) {
  std::vector<double> out(z.class_count());
  detail::softmax_into(z.values(), 1.0, out);
  return ProbVector(std::move(out));
}

double shannon_entropy(const ProbVector& p) { return detail::entropy_bits(p.probs()); }

Peak peak_probability(const ProbVector& p) { return detail::argmax(p.probs()); }

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.class_count() != q.class_count()) {
    throw Error(ErrorCode::DimensionMismatch, "kl_divergence: lengths " + std::to_string(p.class_count()) +
                                                  " and " + std::to_string(q.class_count()));
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.class_count(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(std::max(p[i], kLogClamp)) - std::log(std::max(q[i], kLogClamp)));
  }
  return kl;
}

double cross_entropy(const ProbVector& p, std::size_t label) {
  if (label >= p.class_count()) {
    throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(p.class_count()) + ")");
  }
  return -std::log(std::max(p[label], kLogClamp));
}

double evaluate(DistMeasure measure, const ProbVector& p) {
  return measure == DistMeasure::PeakProbability ? peak_probability(p).value : shannon_entropy(p);
}

}  // namespace feddkc
