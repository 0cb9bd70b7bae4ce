#include "feddkc/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "feddkc/error.hpp"
#include "feddkc/knowledge.hpp"

namespace feddkc {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw Error(ErrorCode::DimensionMismatch, "an MLP needs at least input and output dims");
  for (std::size_t d : dims) {
    if (d == 0) throw Error(ErrorCode::DimensionMismatch, "layer widths must be positive");
  }
}

void require_cols(const char* what, const Matrix& m, std::size_t expected) {
  if (static_cast<std::size_t>(m.cols()) != expected) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": expected " + std::to_string(expected) +
                                                  " columns, got " + std::to_string(m.cols()));
  }
}

void require_batch(const Matrix& logits, const Matrix& targets, std::span<const int> labels) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "targets must match the logits shape");
  }
  if (labels.size() != static_cast<std::size_t>(logits.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "labels must have one entry per row");
  }
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

void check_step(double loss, bool finite_weights) {
  if (!std::isfinite(loss)) throw Error(ErrorCode::NumericalDivergence, "loss is not finite");
  if (!finite_weights) throw Error(ErrorCode::NumericalDivergence, "weights became non-finite after the update");
}

template <typename Model>
double run_epochs(Model& model, const Matrix& inputs, const Matrix& targets, const Labels& labels,
                  const TrainConfig& cfg, int epochs, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(inputs.rows());
  if (n == 0 || epochs <= 0) return 0.0;
  std::vector<std::size_t> order(n);
  double loss_sum = 0.0;
  std::size_t steps = 0;
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      batch_labels.clear();
      for (std::size_t r : rows) batch_labels.push_back(labels[r]);
      loss_sum += distill_step(model, gather_rows(inputs, rows), gather_rows(targets, rows), batch_labels, cfg.beta,
                               cfg.learning_rate, cfg.weight_decay);
      ++steps;
    }
  }
  return loss_sum / static_cast<double>(steps);
}

}  // namespace

// -------------------------------------------------------------------- Mlp

Mlp::Mlp(std::vector<std::size_t> dims, bool relu_output) : relu_output_(relu_output) {
  check_dims(dims);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.push_back(DenseLayer{Matrix::Zero(static_cast<Eigen::Index>(dims[i]), static_cast<Eigen::Index>(dims[i + 1])),
                                 Vector::Zero(static_cast<Eigen::Index>(dims[i + 1]))});
  }
}

Mlp Mlp::he_initialized(std::vector<std::size_t> dims, bool relu_output, Rng& rng) {
  Mlp mlp(dims, relu_output);
  for (auto& layer : mlp.layers_) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(layer.weight.rows()));
    // Fill row-major so the draw order is independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.normal(0.0, stddev);
    }
  }
  return mlp;
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.rows()); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.cols()); }

std::vector<std::size_t> Mlp::dims() const {
  std::vector<std::size_t> out;
  if (layers_.empty()) return out;
  out.push_back(input_dim());
  for (const auto& layer : layers_) out.push_back(static_cast<std::size_t>(layer.weight.cols()));
  return out;
}

Matrix Mlp::forward(const Matrix& x) const {
  Trace trace;
  return forward(x, trace);
}

Matrix Mlp::forward(const Matrix& x, Trace& trace) const {
  require_cols("Mlp::forward", x, input_dim());
  trace.activations.clear();
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    Matrix a = trace.activations.back() * layer.weight;
    a.rowwise() += layer.bias.transpose();
    const bool last = i + 1 == layers_.size();
    if (!last || relu_output_) a = a.cwiseMax(0.0);
    trace.activations.push_back(std::move(a));
  }
  return trace.activations.back();
}

Matrix Mlp::backward(const Trace& trace, const Matrix& grad_out, MlpGradient& grad) const {
  Matrix delta = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool last = i + 1 == layers_.size();
    if (!last || relu_output_) {
      // Post-activation > 0 exactly where the pre-activation was positive.
      delta = delta.cwiseProduct((trace.activations[i + 1].array() > 0.0).cast<double>().matrix());
    }
    grad.weight[i].noalias() += trace.activations[i].transpose() * delta;
    grad.bias[i] += delta.colwise().sum().transpose();
    delta = delta * layers_[i].weight.transpose();
  }
  return delta;
}

MlpGradient Mlp::zero_gradient() const {
  MlpGradient grad;
  for (const auto& layer : layers_) {
    grad.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    grad.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return grad;
}

void Mlp::apply_sgd(const MlpGradient& grad, double learning_rate, double weight_decay) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight -= learning_rate * (grad.weight[i] + weight_decay * layers_[i].weight);
    layers_[i].bias -= learning_rate * grad.bias[i];
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) count += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return count;
}

void Mlp::flatten_into(std::vector<double>& out) const {
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    }
    for (Eigen::Index c = 0; c < layer.bias.size(); ++c) out.push_back(layer.bias(c));
  }
}

std::span<const double> Mlp::assign(std::span<const double> values) {
  if (values.size() < parameter_count()) throw Error(ErrorCode::DimensionMismatch, "not enough parameter values");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = values[k++];
    }
    for (Eigen::Index c = 0; c < layer.bias.size(); ++c) layer.bias(c) = values[k++];
  }
  return values.subspan(k);
}

bool Mlp::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

void flatten_gradient_into(const MlpGradient& grad, std::vector<double>& out) {
  for (std::size_t i = 0; i < grad.weight.size(); ++i) {
    const Matrix& w = grad.weight[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(w(r, c));
    }
    for (Eigen::Index c = 0; c < grad.bias[i].size(); ++c) out.push_back(grad.bias[i](c));
  }
}

// ------------------------------------------------------------------ models

SplitModel make_split_model(std::size_t input_dim, std::size_t feature_dim,
                            const std::vector<std::size_t>& predictor_hidden, std::size_t class_count,
                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> predictor_dims{feature_dim};
  predictor_dims.insert(predictor_dims.end(), predictor_hidden.begin(), predictor_hidden.end());
  predictor_dims.push_back(class_count);
  SplitModel model;
  model.extractor = Mlp::he_initialized({input_dim, feature_dim}, true, rng);
  model.predictor = Mlp::he_initialized(predictor_dims, false, rng);
  return model;
}

ServerModel make_server_model(std::size_t feature_dim, const std::vector<std::size_t>& hidden,
                              std::size_t class_count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> dims{feature_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(class_count);
  return ServerModel{Mlp::he_initialized(dims, false, rng)};
}

Matrix extract_features(const SplitModel& model, const Matrix& x) { return model.extractor.forward(x); }

Matrix predict(const Mlp& predictor, const Matrix& h) { return predictor.forward(h); }

Matrix predict(const SplitModel& model, const Matrix& x) {
  return model.predictor.forward(model.extractor.forward(x));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate", "must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("train.weight_decay", "must be >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("train.beta", "must be >= 0");
  if (local_epochs <= 0) throw ConfigError("train.local_epochs", "must be > 0");
  if (server_epochs <= 0) throw ConfigError("train.server_epochs", "must be > 0");
}

// ------------------------------------------------------------------- loss

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - top).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

std::vector<double> row_vector(const Matrix& m, Eigen::Index row) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(row, c);
  return out;
}

DistillLoss distill_loss(const Matrix& logits, const Matrix& targets, std::span<const int> labels, double beta) {
  require_batch(logits, targets, labels);
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  const double log_clamp = std::log(kLogClamp);
  DistillLoss loss;
  loss.grad_logits.resize(n, c);
  double ce_sum = 0.0;
  double kl_sum = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= c) {
      throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " outside [0, " + std::to_string(c) + ")");
    }
    const double top = logits.row(r).maxCoeff();
    const double log_norm = std::log((logits.row(r).array() - top).exp().sum()) + top;
    for (Eigen::Index j = 0; j < c; ++j) {
      const double log_p = std::max(logits(r, j) - log_norm, log_clamp);
      const double p = std::exp(logits(r, j) - log_norm);
      const double t = targets(r, j);
      if (j == label) ce_sum -= log_p;
      if (t > 0.0) kl_sum += t * (std::log(std::max(t, kLogClamp)) - log_p);
      loss.grad_logits(r, j) = (1.0 + beta) * p - (j == label ? 1.0 : 0.0) - beta * t;
    }
  }
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  loss.cross_entropy = ce_sum * inv_n;
  loss.kl = kl_sum * inv_n;
  loss.total = loss.cross_entropy + beta * loss.kl;
  loss.grad_logits *= inv_n;
  return loss;
}

SplitGradient compute_gradient(const SplitModel& model, const Matrix& x, const Matrix& targets,
                               std::span<const int> labels, double beta) {
  Mlp::Trace extractor_trace;
  Mlp::Trace predictor_trace;
  const Matrix h = model.extractor.forward(x, extractor_trace);
  const Matrix logits = model.predictor.forward(h, predictor_trace);
  DistillLoss loss = distill_loss(logits, targets, labels, beta);
  SplitGradient grad{loss.total, model.extractor.zero_gradient(), model.predictor.zero_gradient()};
  const Matrix grad_h = model.predictor.backward(predictor_trace, loss.grad_logits, grad.predictor);
  model.extractor.backward(extractor_trace, grad_h, grad.extractor);
  return grad;
}

ServerGradient compute_gradient(const ServerModel& model, const Matrix& h, const Matrix& targets,
                                std::span<const int> labels, double beta) {
  Mlp::Trace trace;
  const Matrix logits = model.predictor.forward(h, trace);
  DistillLoss loss = distill_loss(logits, targets, labels, beta);
  ServerGradient grad{loss.total, model.predictor.zero_gradient()};
  model.predictor.backward(trace, loss.grad_logits, grad.predictor);
  return grad;
}

double distill_step(SplitModel& model, const Matrix& x, const Matrix& targets, std::span<const int> labels,
                    double beta, double learning_rate, double weight_decay) {
  const SplitGradient grad = compute_gradient(model, x, targets, labels, beta);
  if (!std::isfinite(grad.loss)) throw Error(ErrorCode::NumericalDivergence, "loss is not finite");
  model.extractor.apply_sgd(grad.extractor, learning_rate, weight_decay);
  model.predictor.apply_sgd(grad.predictor, learning_rate, weight_decay);
  check_step(grad.loss, model.extractor.all_finite() && model.predictor.all_finite());
  return grad.loss;
}

double distill_step(ServerModel& model, const Matrix& h, const Matrix& targets, std::span<const int> labels,
                    double beta, double learning_rate, double weight_decay) {
  const ServerGradient grad = compute_gradient(model, h, targets, labels, beta);
  if (!std::isfinite(grad.loss)) throw Error(ErrorCode::NumericalDivergence, "loss is not finite");
  model.predictor.apply_sgd(grad.predictor, learning_rate, weight_decay);
  check_step(grad.loss, model.predictor.all_finite());
  return grad.loss;
}

double train_epochs(SplitModel& model, const Matrix& x, const Matrix& targets, const Labels& labels,
                    const TrainConfig& cfg, int epochs, Rng& rng) {
  return run_epochs(model, x, targets, labels, cfg, epochs, rng);
}

double train_epochs(ServerModel& model, const Matrix& h, const Matrix& targets, const Labels& labels,
                    const TrainConfig& cfg, int epochs, Rng& rng) {
  return run_epochs(model, h, targets, labels, cfg, epochs, rng);
}

}  // namespace feddkc
