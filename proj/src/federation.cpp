#include "feddkc/federation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace feddkc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

MetricsRow evaluate_client(const ClientState& client, const Dataset& test, int round) {
  MetricsRow row;
  row.round = round;
  row.client_id = client.id;
  const Matrix logits = predict(client.model, test.features);
  row.top1 = top_k_accuracy(logits, test.labels, 1);
  row.top5 = top_k_accuracy(logits, test.labels, std::min<std::size_t>(5, test.class_count));
  return row;
}

}  // namespace

std::uint64_t Upload::wire_bytes() const {
  return static_cast<std::uint64_t>(features.size() + local_knowledge.size()) * kRealWireBytes +
         static_cast<std::uint64_t>(labels.size()) * kLabelWireBytes;
}

void Upload::validate() const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (features.rows() != n || local_knowledge.rows() != n) {
    throw Error(ErrorCode::DimensionMismatch, "upload parts have different row counts");
  }
}

std::uint64_t downlink_bytes(const Matrix& global_knowledge) {
  return static_cast<std::uint64_t>(global_knowledge.size()) * kRealWireBytes;
}

ClientState ClientState::create(int id, SplitModel model, Dataset data, std::uint64_t batching_seed) {
  ClientState state;
  state.id = id;
  state.global_knowledge = Matrix::Zero(static_cast<Eigen::Index>(data.size()),
                                        static_cast<Eigen::Index>(model.predictor.output_dim()));
  state.model = std::move(model);
  state.data = std::move(data);
  state.batching_seed = batching_seed;
  return state;
}

ClientRoundResult client_round(ClientState& state, const TrainConfig& cfg, int round) {
  if (static_cast<std::size_t>(state.global_knowledge.rows()) != state.data.size()) {
    throw Error(ErrorCode::DimensionMismatch, "client " + std::to_string(state.id) +
                                                  ": global knowledge rows differ from local sample count");
  }
  Rng rng(derive_seed(state.batching_seed, static_cast<std::uint64_t>(round)));
  const Matrix targets = softmax_rows(state.global_knowledge);
  ClientRoundResult result;
  result.local_loss =
      train_epochs(state.model, state.data.features, targets, state.data.labels, cfg, cfg.local_epochs, rng);
  result.upload.features = extract_features(state.model, state.data.features);
  result.upload.local_knowledge = predict(state.model.predictor, result.upload.features);
  result.upload.labels = state.data.labels;
  return result;
}

ServerRoundResult server_round(ServerState& state, const TrainConfig& cfg, int round, const EventSink& sink) {
  ServerRoundResult result;
  // std::map iterates in ascending client id.
  for (auto& [id, upload] : state.uploads) {
    upload.validate();
    const Matrix& logits = upload.local_knowledge;
    Matrix targets(logits.rows(), logits.cols());
    ClientServerReport report;
    report.refined_peaks.reserve(upload.rows());
    report.refined_entropies.reserve(upload.rows());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const Knowledge z(row_vector(logits, r));
      bool fallback = false;
      std::optional<RefinementResult> refined;
      try {
        refined = refine_detailed(z, state.refinement);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidTarget) throw;
        ++report.fallbacks[e.code()];
        fallback = true;
        refined = RefinementResult{softmax(z), kNaN};
      }
      const auto probs = refined->probs.probs();
      for (std::size_t c = 0; c < probs.size(); ++c) targets(r, static_cast<Eigen::Index>(c)) = probs[c];
      report.refined_peaks.push_back(peak_probability(refined->probs).value);
      report.refined_entropies.push_back(shannon_entropy(refined->probs));
      if (sink) sink(make_event(id, round, z, *refined, state.refinement.strategy, fallback));
    }
    Rng rng(derive_seed(derive_seed(state.batching_seed, static_cast<std::uint64_t>(round)),
                        static_cast<std::uint64_t>(id)));
    report.server_loss =
        train_epochs(state.model, upload.features, targets, upload.labels, cfg, cfg.server_epochs, rng);
    result.global_knowledge[id] = predict(state.model.predictor, upload.features);
    result.reports[id] = std::move(report);
  }
  state.uploads.clear();
  return result;
}

ExperimentResult run_experiment(std::vector<ClientState>& clients, ServerState& server, int rounds,
                                const TrainConfig& cfg, const Dataset& test, const ExperimentOptions& options) {
  std::sort(clients.begin(), clients.end(), [](const ClientState& a, const ClientState& b) { return a.id < b.id; });
  ExperimentResult result;
  for (const auto& client : clients) {
    MetricsRow row = evaluate_client(client, test, 0);
    row.local_loss = row.server_loss = kNaN;
    row.peak_discrepancy_max = row.entropy_discrepancy_max = kNaN;
    result.log.rows.push_back(row);
  }

  for (int round = 1; round <= rounds; ++round) {
    std::vector<ClientRoundResult> outcomes(clients.size());
    std::vector<std::exception_ptr> failures(clients.size());
    auto run_client = [&](std::size_t i) {
      try {
        outcomes[i] = client_round(clients[i], cfg, round);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    };
    if (options.parallel_clients) {
      std::vector<std::jthread> workers;
      workers.reserve(clients.size());
      for (std::size_t i = 0; i < clients.size(); ++i) workers.emplace_back(run_client, i);
    } else {
      for (std::size_t i = 0; i < clients.size(); ++i) run_client(i);
    }

    ServerRoundResult server_result;
    try {
      for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
      }
      for (std::size_t i = 0; i < clients.size(); ++i) server.uploads[clients[i].id] = outcomes[i].upload;
      server_result = server_round(server, cfg, round, options.event_sink);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NumericalDivergence) throw;
      result.divergence = "round " + std::to_string(round) + ": " + e.what();
      server.uploads.clear();
      return result;
    }

    std::vector<std::vector<double>> peaks;
    std::vector<std::vector<double>> entropies;
    for (const auto& client : clients) {
      peaks.push_back(server_result.reports.at(client.id).refined_peaks);
      entropies.push_back(server_result.reports.at(client.id).refined_entropies);
    }
    const auto peak_gap = max_pairwise_discrepancy(peaks);
    const auto entropy_gap = max_pairwise_discrepancy(entropies);

    for (std::size_t i = 0; i < clients.size(); ++i) {
      ClientState& client = clients[i];
      client.global_knowledge = std::move(server_result.global_knowledge.at(client.id));
      MetricsRow row = evaluate_client(client, test, round);
      row.local_loss = outcomes[i].local_loss;
      row.server_loss = server_result.reports.at(client.id).server_loss;
      row.peak_discrepancy_max = peak_gap[i];
      row.entropy_discrepancy_max = entropy_gap[i];
      row.bytes_up = outcomes[i].upload.wire_bytes();
      row.bytes_down = downlink_bytes(client.global_knowledge);
      result.log.rows.push_back(row);
    }
  }
  return result;
}

}  // namespace feddkc
