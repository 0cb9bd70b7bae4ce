#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "feddkc/random.hpp"

namespace feddkc {

// Row-major by sample: a batch of N inputs of width d is an N x d matrix.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

struct DenseLayer {
  Matrix weight;  // in x out
  Vector bias;    // out
};

struct MlpGradient {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

// Stack of dense layers with ReLU between them. The extractor half of a client
// model also applies ReLU to its output, so features are non-negative.
class Mlp {
 public:
  Mlp() = default;
  // Zero-initialized stack; dims = {in, hidden..., out}.
  Mlp(std::vector<std::size_t> dims, bool relu_output);
  // He-normal weights, zero biases.
  static Mlp he_initialized(std::vector<std::size_t> dims, bool relu_output, Rng& rng);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> dims() const;
  bool relu_output() const noexcept { return relu_output_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  // Activations of every layer boundary, input first.
  struct Trace {
    std::vector<Matrix> activations;
  };

  // Throws DimensionMismatch if x.cols() != input_dim().
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Trace& trace) const;
  // Accumulates parameter gradients for dL/d(output) = grad_out, returns dL/dx.
  Matrix backward(const Trace& trace, const Matrix& grad_out, MlpGradient& grad) const;

  MlpGradient zero_gradient() const;
  // w -= lr * (grad + weight_decay * w); biases are not decayed.
  void apply_sgd(const MlpGradient& grad, double learning_rate, double weight_decay);

  std::size_t parameter_count() const;
  void flatten_into(std::vector<double>& out) const;
  // Consumes parameter_count() values from the front of `values`.
  std::span<const double> assign(std::span<const double> values);
  bool all_finite() const;

 private:
  std::vector<DenseLayer> layers_;
  bool relu_output_ = false;
};

void flatten_gradient_into(const MlpGradient& grad, std::vector<double>& out);

// Client model: small extractor (input -> features) and a predictor
// (features -> C logits).
struct SplitModel {
  Mlp extractor;
  Mlp predictor;
};

// Server model: a predictor only, fed with uploaded features.
struct ServerModel {
  Mlp predictor;
};

SplitModel make_split_model(std::size_t input_dim, std::size_t feature_dim,
                            const std::vector<std::size_t>& predictor_hidden, std::size_t class_count,
                            std::uint64_t seed);
ServerModel make_server_model(std::size_t feature_dim, const std::vector<std::size_t>& hidden,
                              std::size_t class_count, std::uint64_t seed);

Matrix extract_features(const SplitModel& model, const Matrix& x);
Matrix predict(const Mlp& predictor, const Matrix& h);
Matrix predict(const SplitModel& model, const Matrix& x);

struct TrainConfig {
  double learning_rate = 0.03;
  std::size_t batch_size = 256;
  double weight_decay = 5e-4;
  double beta = 1.5;
  int local_epochs = 1;
  int server_epochs = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean over rows of CE(softmax(logits), label) + beta * KL(target || softmax(logits)),
// in nats. grad_logits is the gradient of that mean.
struct DistillLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double kl = 0.0;
  Matrix grad_logits;
};

DistillLoss distill_loss(const Matrix& logits, const Matrix& targets, std::span<const int> labels, double beta);

struct SplitGradient {
  double loss = 0.0;
  MlpGradient extractor;
  MlpGradient predictor;
};

struct ServerGradient {
  double loss = 0.0;
  MlpGradient predictor;
};

SplitGradient compute_gradient(const SplitModel& model, const Matrix& x, const Matrix& targets,
                               std::span<const int> labels, double beta);
ServerGradient compute_gradient(const ServerModel& model, const Matrix& h, const Matrix& targets,
                                std::span<const int> labels, double beta);

// Loss before the update. Throws NumericalDivergence on a non-finite loss or
// non-finite weights after the step.
double distill_step(SplitModel& model, const Matrix& x, const Matrix& targets, std::span<const int> labels,
                    double beta, double learning_rate, double weight_decay);
double distill_step(ServerModel& model, const Matrix& h, const Matrix& targets, std::span<const int> labels,
                    double beta, double learning_rate, double weight_decay);

// Mini-batch SGD passes over (x, targets, labels), reshuffled each epoch from
// `rng`. Returns the mean per-step loss of all steps.
double train_epochs(SplitModel& model, const Matrix& x, const Matrix& targets, const Labels& labels,
                    const TrainConfig& cfg, int epochs, Rng& rng);
double train_epochs(ServerModel& model, const Matrix& h, const Matrix& targets, const Labels& labels,
                    const TrainConfig& cfg, int epochs, Rng& rng);

Matrix softmax_rows(const Matrix& logits);
std::vector<double> row_vector(const Matrix& m, Eigen::Index row);

// Weight checkpoints. Layout (JSON):
//   {"format": "feddkc-checkpoint", "version": 1, "seed": u64, "round": int,
//    "modules": [{"name": str, "layer_dims": [in, ..., out], "relu_output": bool,
//                 "layers": [{"weight": [row-major in*out], "bias": [out]}]}]}
struct Checkpoint {
  std::uint64_t seed = 0;
  int round = 0;
  std::vector<std::pair<std::string, Mlp>> modules;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);
Checkpoint make_checkpoint(const SplitModel& model, std::uint64_t seed, int round);
Checkpoint make_checkpoint(const ServerModel& model, std::uint64_t seed, int round);
SplitModel split_model_from(const Checkpoint& checkpoint);
ServerModel server_model_from(const Checkpoint& checkpoint);

}  // namespace feddkc
