#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "feddkc/knowledge.hpp"
#include "feddkc/neural.hpp"

namespace feddkc::testkit {

// Logit corpora for property tests. Mixes scales so that corpora contain
// nearly one-hot, moderate and nearly flat vectors.
class LogitSource {
 public:
  explicit LogitSource(std::uint64_t seed) : engine_(seed) {}

  std::vector<double> next(std::size_t classes) {
    std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
    std::normal_distribution<double> unit(0.0, 1.0);
    const double scale = std::exp(log_scale(engine_));
    std::vector<double> z(classes);
    for (auto& v : z) v = scale * unit(engine_);
    return z;
  }

  // Logits that are not all equal.
  std::vector<double> next_nonconstant(std::size_t classes) {
    for (;;) {
      auto z = next(classes);
      for (std::size_t i = 1; i < z.size(); ++i) {
        if (z[i] != z[0]) return z;
      }
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Plain long-double softmax and entropy, written independently of the library.
inline std::vector<long double> oracle_softmax(const std::vector<double>& z, long double theta = 1.0L) {
  long double m = z[0];
  for (double v : z) m = std::max<long double>(m, v);
  std::vector<long double> p(z.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp((z[i] - m) / theta);
  for (auto& v : p) v /= sum;
  return p;
}

inline long double oracle_entropy_bits(const std::vector<long double>& p) {
  long double h = 0.0L;
  for (long double v : p) {
    if (v > 0.0L) h -= v * std::log2(v);
  }
  return h;
}

// Temperature with H(softmax(z / theta)) = target, by 200 plain halvings of a
// log-spaced bracket. Entropy increases with theta for non-constant z.
inline long double oracle_skr_theta(const std::vector<double>& z, long double target) {
  long double lo = std::log(1e-8L);
  long double hi = std::log(1e8L);
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (oracle_entropy_bits(oracle_softmax(z, std::exp(mid))) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5L * (lo + hi));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline std::vector<double> probs_of(const ProbVector& p) { return {p.probs().begin(), p.probs().end()}; }

// Fresh models have zero biases, so a row of all-zero features sits exactly on
// the ReLU kink and central differences see the mean of both one-sided slopes.
// Nonzero biases move every pre-activation off the kink.
inline void jitter_biases(Mlp& mlp, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : mlp.layers()) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.5 * rng.normal();
  }
}

}  // namespace feddkc::testkit
